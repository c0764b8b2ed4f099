#pragma once

#include "peach/explanation.hpp"
#include "peach/feature_reduction.hpp"
#include "peach/ingestion.hpp"
#include "peach/prototypes.hpp"
#include "peach/tree_induction.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace peach {

// Rows of a feature matrix plus their labels, in ascending bundle order.
struct SplitData {
    std::vector<std::size_t> rows;
    Matrix features;
    std::vector<std::uint32_t> labels;
};

SplitData split_data(const FeatureMatrix& features, const EmbeddingMatrix& embeddings, Split which);

struct TrainOptions {
    Algorithm algorithm = Algorithm::cart;
    std::size_t max_depth = 95;
    std::size_t min_samples_leaf = 1;
    std::size_t forest_size = 0;  // 0 trains a single tree
    std::size_t subset_size = 0;
    std::uint64_t seed = 0;
};

// Fits on the training rows of `features`.
ModelFile train_model(const FeatureMatrix& features, const DatasetBundle& bundle, const TrainOptions& options,
                      std::string reduction_hash);

// Summaries of every populated node, built from the training rows.
PrototypeArtifact summarize_model(const ModelFile& model, const FeatureMatrix& features, const DatasetBundle& bundle,
                                  std::size_t k, std::string model_hash);

struct WorkspacePaths {
    std::filesystem::path bundle;  // manifest written by `peach ingest`
    std::filesystem::path reduction;
    std::filesystem::path model;
    std::optional<std::filesystem::path> prototypes;
};

// All artifacts of one trained pipeline, loaded and cross-checked. Immutable
// after construction; safe to share between threads.
class Workspace {
public:
    static Workspace load(const WorkspacePaths& paths);

    DatasetBundle bundle;
    ReductionArtifact reduction;
    std::string reduction_hash;
    ModelFile model;
    std::string model_hash;
    std::optional<PrototypeArtifact> prototypes;
    FeatureMatrix features;  // every bundle row, reduced

    // Predicted class of every bundle row.
    const std::vector<std::uint32_t>& predictions() const { return predictions_; }
    // "train" always, "test" when the bundle has test rows.
    const std::map<std::string, Metrics>& metrics() const { return metrics_; }

    // Throws MissingResourceError when the id is unknown or prototypes are absent.
    LocalExplanation explain(const std::string& doc_id, const TagFilter& filter) const;
    GlobalExplanation global(const TagFilter& filter, std::optional<std::size_t> topk) const;

private:
    std::vector<std::uint32_t> predictions_;
    std::map<std::string, Metrics> metrics_;
};

}  // namespace peach
