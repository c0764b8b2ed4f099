#pragma once

// Seeded property checks shared by the unit tests and the acceptance runner.
// Each returns an empty string on success, otherwise a description of the
// first violation.

#include "peach/feature_reduction.hpp"
#include "peach/ingestion.hpp"

#include <cstdint>
#include <string>

namespace checks {

// Builds a tree on a small random grid dataset and compares every node's
// chosen split against brute force. Leaves that are impure must have no
// improving split.
std::string tree_matches_oracle(std::uint64_t seed);

// Greedy correlation clustering on a 50 x 30 matrix with planted groups.
std::string pearson_clustering(std::uint64_t seed, double v);

// Lloyd objective never increases between iterations.
std::string kmeans_monotone(std::uint64_t seed);

// Six columns in two well-separated groups; k-means must find the optimal
// 2-partition.
std::string kmeans_two_groups(std::uint64_t seed);

// Largest relative error between the analytic gradient and central finite
// differences on a random small network.
double cnn_gradient_error(std::uint64_t seed);

// Two Gaussian blobs, n x d, every row in the train split.
peach::EmbeddingMatrix separable_blobs(std::size_t n, std::size_t d, std::uint64_t seed);

// Train accuracy of the classifier head after training on `blobs` at learning rate 1e-2.
double cnn_blob_accuracy(const peach::EmbeddingMatrix& blobs, std::size_t epochs, std::uint64_t seed);

// Random corpus of at most 50 documents; the node cloud must equal the
// brute-force ranking, order included.
std::string tfidf_matches_oracle(std::uint64_t seed);

}  // namespace checks
