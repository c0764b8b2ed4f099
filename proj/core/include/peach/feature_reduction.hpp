#pragma once

#include "peach/cnn_reducer.hpp"
#include "peach/ingestion.hpp"
#include "peach/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace peach {

// d x d symmetric matrix of pairwise Pearson coefficients between columns.
class CorrelationMatrix {
public:
    CorrelationMatrix() = default;
    explicit CorrelationMatrix(std::size_t d) : d_(d), r_(d * d, 0.0) {}

    std::size_t size() const noexcept { return d_; }
    double operator()(std::size_t i, std::size_t j) const { return r_[i * d_ + j]; }

    // Writes both (i, j) and (j, i).
    void set(std::size_t i, std::size_t j, double value) {
        r_[i * d_ + j] = value;
        r_[j * d_ + i] = value;
    }

    // Off-diagonal upper-triangle entries in row-major order.
    std::vector<double> upper_triangle() const;

private:
    std::size_t d_ = 0;
    std::vector<double> r_;
};

// Columns of `columns` (n x d) are the variables. Zero-variance columns
// correlate 0 with every other column and 1 with themselves.
CorrelationMatrix pearson_matrix(const Matrix& columns);

// Linear-interpolation percentile of `values`, v in (0, 1).
double percentile(std::vector<double> values, double v);

// Threshold t: the v-th percentile of the off-diagonal upper-triangle entries.
double percentile_threshold(const CorrelationMatrix& r, double v);

enum class ReductionMethod { pearson, kmeans, cnn };

std::string to_string(ReductionMethod method);
ReductionMethod parse_reduction_method(const std::string& text);

struct ClusterAssignment {
    ReductionMethod method = ReductionMethod::pearson;
    std::size_t m = 0;
    std::vector<std::size_t> assign;  // length d, values in [0, m)

    // pearson: center column per cluster and the threshold that produced it.
    std::vector<std::size_t> centers;
    double percentile = 0.0;
    double threshold = 0.0;

    // kmeans: m centroids of length n, plus the run parameters.
    std::vector<std::vector<double>> centroids;
    std::uint64_t seed = 0;
    std::size_t max_iters = 0;
    double tol = 0.0;
    std::size_t iterations = 0;
    std::vector<double> objective_trace;  // objective after each Lloyd iteration

    std::vector<std::vector<std::size_t>> members() const;
};

// Greedy sweep: the lowest-index unassigned column opens a cluster and takes
// every unassigned column whose correlation with it is strictly above t.
ClusterAssignment correlation_cluster(const CorrelationMatrix& r, double t);

struct KMeansOptions {
    std::size_t m = 10;
    std::uint64_t seed = 0;
    std::size_t max_iters = 300;
    double tol = 1e-6;
};

// Lloyd's algorithm over the columns of `columns` (each column is a point of
// length n), seeded with k-means++.
ClusterAssignment kmeans_cluster(const Matrix& columns, const KMeansOptions& options);

// Sum over columns of the squared distance to their assigned centroid.
double kmeans_objective(const Matrix& columns, std::span<const std::size_t> assign,
                        const std::vector<std::vector<double>>& centroids);

struct FeatureMatrix {
    Matrix values;  // n x m
    std::vector<std::string> feature_names;
    ReductionMethod method = ReductionMethod::pearson;

    std::size_t n() const noexcept { return values.rows(); }
    std::size_t m() const noexcept { return values.cols(); }
};

// "cluster_07" style names, zero-padded to at least two digits.
std::vector<std::string> cluster_feature_names(std::size_t m);

// F[:, k] = mean of the member columns of cluster k.
FeatureMatrix merge_clusters(const Matrix& columns, const ClusterAssignment& assignment);

struct ReductionConfig {
    ReductionMethod method = ReductionMethod::pearson;
    double percentile = 0.9;
    KMeansOptions kmeans;
    CnnConfig cnn;
};

// Everything needed to map a raw embedding row to its feature row.
struct ReductionArtifact {
    ReductionMethod method = ReductionMethod::pearson;
    std::size_t source_d = 0;
    std::size_t fit_rows = 0;  // training rows the reduction was fitted on
    std::optional<ClusterAssignment> clusters;
    std::optional<CnnReducerModel> cnn;
    std::vector<std::string> feature_names;

    std::size_t m() const noexcept { return feature_names.size(); }

    std::string to_json() const;
    static ReductionArtifact from_json(std::string_view text);
};

// Embedding values as doubles, optionally restricted to some rows.
Matrix embedding_columns(const EmbeddingMatrix& embeddings);
Matrix embedding_columns(const EmbeddingMatrix& embeddings, std::span<const std::size_t> rows);

// Fits the configured reduction on the training rows.
ReductionArtifact fit_reduction(const EmbeddingMatrix& embeddings, const ReductionConfig& config);

// Applies a fitted reduction to every row of `embeddings`.
FeatureMatrix apply_reduction(const ReductionArtifact& artifact, const EmbeddingMatrix& embeddings);
std::vector<double> apply_reduction(const ReductionArtifact& artifact, std::span<const double> embedding_row);

// Feature matrix file: "PFM1", u32 n, u32 m, m length-prefixed names, n*m float64.
std::string serialize_feature_matrix(const FeatureMatrix& features);
FeatureMatrix parse_feature_matrix(std::string_view bytes);

}  // namespace peach
