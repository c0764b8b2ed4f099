#pragma once

#include "peach/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace peach {

// ---- split criteria ----

// Shannon entropy in bits. Throws ValueError on an empty count vector.
double entropy(std::span<const std::size_t> class_counts);

// H(parent) - sum_t p(t) H(t). Children must partition the parent counts.
double information_gain(std::span<const std::size_t> parent_counts,
                        const std::vector<std::vector<std::size_t>>& child_counts);

// -sum_t p(t) log2 p(t) over non-empty children.
double split_info(std::size_t parent_total, std::span<const std::size_t> child_totals);

// IG / SplitInfo, or 0 when SplitInfo is 0.
double gain_ratio(std::span<const std::size_t> parent_counts, const std::vector<std::vector<std::size_t>>& child_counts);

// 1 - sum_x P_x^2.
double gini_impurity(std::span<const std::size_t> class_counts);

// Child-size-weighted Gini impurity of a split.
double weighted_gini(const std::vector<std::vector<std::size_t>>& child_counts);

enum class Criterion { info_gain, gain_ratio, gini };
enum class Algorithm { id3, c45, cart };

Criterion criterion_for(Algorithm algorithm);
std::string to_string(Criterion criterion);
std::string to_string(Algorithm algorithm);
Algorithm parse_algorithm(const std::string& text);  // "id3", "c4.5"/"c45", "cart"

// Criterion values closer than this count as ties.
inline constexpr double kTieTolerance = 1e-12;

// When a node has more distinct values than this on a feature, only this many
// evenly spaced quantile midpoints are tried.
inline constexpr std::size_t kMaxCandidateThresholds = 64;

struct SplitRule {
    std::size_t feature = 0;
    double threshold = 0.0;
    double criterion_value = 0.0;  // IG, gain ratio, or weighted Gini
    Criterion criterion = Criterion::info_gain;

    bool operator==(const SplitRule&) const = default;
};

// Labelled rows a tree is fitted on; row indices are positions in `features`.
struct TrainingView {
    const Matrix& features;
    std::span<const std::uint32_t> labels;
    std::size_t num_classes;
};

// Candidate thresholds for one feature over the given rows: midpoints between
// consecutive distinct sorted values, capped at kMaxCandidateThresholds.
std::vector<double> candidate_thresholds(const TrainingView& data, std::span<const std::size_t> rows, std::size_t feature);

// Scores one candidate split (left: value <= threshold). Returns nullopt when
// either side would hold fewer than min_samples_leaf rows.
std::optional<double> score_split(const TrainingView& data, std::span<const std::size_t> rows, std::size_t feature,
                                  double threshold, Criterion criterion, std::size_t min_samples_leaf = 1);

// Exhaustive search over allowed features and their candidate thresholds.
// Ties resolve to the lowest feature index, then the lowest threshold. Returns
// nullopt when no candidate improves on not splitting.
std::optional<SplitRule> best_split(const TrainingView& data, std::span<const std::size_t> rows,
                                std::span<const std::size_t> allowed_features, Criterion criterion,
                                std::size_t min_samples_leaf = 1);

// ---- trees ----

struct TreeNode {
    std::size_t id = 0;
    std::size_t depth = 0;
    std::vector<std::size_t> class_counts;
    std::uint32_t leaf_class = 0;  // majority class, lowest index on ties; set on every node
    std::optional<SplitRule> split;
    std::size_t left = 0;   // child ids, meaningful when split is set
    std::size_t right = 0;
    std::vector<std::size_t> routed_rows;  // training rows reaching this node, ascending

    bool is_leaf() const noexcept { return !split.has_value(); }
    std::size_t total() const;
};

struct TreeConfig {
    Algorithm algorithm = Algorithm::cart;
    std::size_t max_depth = 95;
    std::size_t min_samples_leaf = 1;
    std::vector<std::size_t> allowed_features;  // empty means every feature

    bool operator==(const TreeConfig&) const = default;
};

// Nodes are stored in pre-order; node id == index, root id 0.
struct DecisionTree {
    std::vector<TreeNode> nodes;
    Algorithm algorithm = Algorithm::cart;
    std::size_t max_depth = 95;
    std::size_t min_samples_leaf = 1;
    std::size_t num_classes = 0;
    std::vector<std::string> feature_names;
    std::vector<std::size_t> allowed_features;

    const TreeNode& root() const { return nodes.front(); }
    std::size_t rule_count() const;
    std::size_t depth() const;
    std::size_t num_features() const noexcept { return feature_names.size(); }
};

std::uint32_t majority_class(std::span<const std::size_t> class_counts);

// Greedy recursive induction over every row of `features`.
DecisionTree build_tree(const Matrix& features, std::span<const std::uint32_t> labels, std::size_t num_classes,
                        const TreeConfig& config, std::vector<std::string> feature_names = {});

// Re-derives every node's routed_rows by routing the rows of `features`.
void route_rows(DecisionTree& tree, const Matrix& features);

struct ForestConfig {
    std::size_t tree_count = 1;
    Algorithm algorithm = Algorithm::cart;
    std::size_t max_depth = 95;
    std::size_t min_samples_leaf = 1;
    std::size_t subset_size = 0;  // 0 means ceil(sqrt(m))
    std::uint64_t seed = 0;

    bool operator==(const ForestConfig&) const = default;
};

struct RandomForest {
    std::vector<DecisionTree> trees;
    ForestConfig config;

    std::size_t num_classes() const { return trees.front().num_classes; }
};

RandomForest build_forest(const Matrix& features, std::span<const std::uint32_t> labels, std::size_t num_classes,
                          const ForestConfig& config, std::vector<std::string> feature_names = {});

using Model = std::variant<DecisionTree, RandomForest>;

std::size_t num_classes(const Model& model);
std::size_t num_features(const Model& model);
const std::vector<std::string>& feature_names(const Model& model);
std::span<const DecisionTree> model_trees(const Model& model);

struct Prediction {
    std::uint32_t predicted_class = 0;
    std::vector<std::size_t> path;  // node ids, root first
    std::size_t tree_index = 0;     // tree whose path is reported
};

// Values equal to a threshold go left. Throws ValueError on NaN or width mismatch.
Prediction predict(const DecisionTree& tree, std::span<const double> row);
// Majority vote, lowest class on ties; the path comes from the lowest-index
// tree that agrees with the vote.
Prediction predict(const RandomForest& forest, std::span<const double> row);
Prediction predict(const Model& model, std::span<const double> row);

struct Metrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<double> per_class_f1;

    bool operator==(const Metrics&) const = default;
};

Metrics compute_metrics(std::span<const std::uint32_t> truth, std::span<const std::uint32_t> predicted,
                        std::size_t num_classes);
Metrics evaluate(const Model& model, const Matrix& features, std::span<const std::uint32_t> labels);

// ---- model file ----

struct ModelFile {
    Model model;
    std::vector<std::string> class_names;
    std::string reduction_hash;  // SHA-256 of the reduction artifact the model was trained on
};

std::string model_to_json(const ModelFile& file);
ModelFile model_from_json(std::string_view text);

}  // namespace peach
