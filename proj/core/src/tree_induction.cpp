#include "peach/error.hpp"
#include "peach/random.hpp"
#include "peach/tree_induction.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace peach {

namespace {

double entropy_of(std::span<const std::size_t> counts, std::size_t total) {
    const double n = static_cast<double>(total);
    double h = 0.0;
    for (auto c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        h -= p * std::log2(p);
    }
    return h;
}

double gini_of(std::span<const std::size_t> counts, std::size_t total) {
    const double n = static_cast<double>(total);
    double s = 0.0;
    for (auto c : counts) {
        const double p = static_cast<double>(c) / n;
        s += p * p;
    }
    return 1.0 - s;
}

// Criterion value of a binary split; both sides non-empty.
double split_value(std::span<const std::size_t> parent, std::span<const std::size_t> left,
                   std::span<const std::size_t> right, std::size_t n_left, std::size_t n_right, Criterion criterion) {
    const std::size_t n = n_left + n_right;
    const double wl = static_cast<double>(n_left) / static_cast<double>(n);
    const double wr = static_cast<double>(n_right) / static_cast<double>(n);
    if (criterion == Criterion::gini) return wl * gini_of(left, n_left) + wr * gini_of(right, n_right);
    const double ig = entropy_of(parent, n) - wl * entropy_of(left, n_left) - wr * entropy_of(right, n_right);
    if (criterion == Criterion::info_gain) return ig;
    const double si = -(wl * std::log2(wl) + wr * std::log2(wr));
    return si > 0.0 ? ig / si : 0.0;
}

// Lower threshold that still separates a from b (a < b).
double midpoint_between(double a, double b) {
    double mid = std::midpoint(a, b);
    if (!(mid >= a && mid < b)) mid = a;
    return mid;
}

struct SortedFeature {
    std::vector<double> distinct;                     // ascending distinct values
    std::vector<std::vector<std::size_t>> prefix;     // class counts of rows with value <= distinct[i]
};

std::vector<std::size_t> candidate_gaps(std::size_t distinct) {
    std::vector<std::size_t> gaps;
    if (distinct < 2) return gaps;
    const std::size_t total_gaps = distinct - 1;
    if (distinct <= kMaxCandidateThresholds) {
        gaps.resize(total_gaps);
        std::iota(gaps.begin(), gaps.end(), 0);
        return gaps;
    }
    for (std::size_t j = 0; j < kMaxCandidateThresholds; ++j) {
        const double pos = (static_cast<double>(j) + 0.5) * static_cast<double>(total_gaps) /
                           static_cast<double>(kMaxCandidateThresholds);
        const auto gap = std::min(total_gaps - 1, static_cast<std::size_t>(pos));
        if (gaps.empty() || gaps.back() != gap) gaps.push_back(gap);
    }
    return gaps;
}

std::vector<std::pair<double, std::uint32_t>> sorted_values(const TrainingView& data, std::span<const std::size_t> rows,
                                                            std::size_t feature) {
    std::vector<std::pair<double, std::uint32_t>> values;
    values.reserve(rows.size());
    for (auto r : rows) values.emplace_back(data.features(r, feature), data.labels[r]);
    std::sort(values.begin(), values.end());
    return values;
}

std::vector<std::size_t> count_classes(const TrainingView& data, std::span<const std::size_t> rows) {
    std::vector<std::size_t> counts(data.num_classes, 0);
    for (auto r : rows) {
        if (data.labels[r] >= data.num_classes) throw ValueError("label out of range at row " + std::to_string(r));
        ++counts[data.labels[r]];
    }
    return counts;
}

}  // namespace

std::vector<double> candidate_thresholds(const TrainingView& data, std::span<const std::size_t> rows, std::size_t feature) {
    const auto values = sorted_values(data, rows, feature);
    std::vector<double> distinct;
    for (const auto& [v, label] : values) {
        if (distinct.empty() || distinct.back() != v) distinct.push_back(v);
    }
    std::vector<double> out;
    for (auto gap : candidate_gaps(distinct.size())) out.push_back(midpoint_between(distinct[gap], distinct[gap + 1]));
    return out;
}

std::optional<double> score_split(const TrainingView& data, std::span<const std::size_t> rows, std::size_t feature,
                                  double threshold, Criterion criterion, std::size_t min_samples_leaf) {
    const auto parent = count_classes(data, rows);
    std::vector<std::size_t> left(data.num_classes, 0), right(data.num_classes, 0);
    std::size_t n_left = 0, n_right = 0;
    for (auto r : rows) {
        if (data.features(r, feature) <= threshold) {
            ++left[data.labels[r]];
            ++n_left;
        } else {
            ++right[data.labels[r]];
            ++n_right;
        }
    }
    if (n_left < std::max<std::size_t>(1, min_samples_leaf) || n_right < std::max<std::size_t>(1, min_samples_leaf)) {
        return std::nullopt;
    }
    return split_value(parent, left, right, n_left, n_right, criterion);
}

std::optional<SplitRule> best_split(const TrainingView& data, std::span<const std::size_t> rows,
                                std::span<const std::size_t> allowed_features, Criterion criterion,
                                std::size_t min_samples_leaf) {
    if (allowed_features.empty()) throw ValueError("best_split needs at least one allowed feature");
    if (rows.size() < 2) return std::nullopt;
    const auto parent = count_classes(data, rows);
    if (std::count_if(parent.begin(), parent.end(), [](std::size_t c) { return c > 0; }) < 2) return std::nullopt;

    std::vector<std::size_t> features(allowed_features.begin(), allowed_features.end());
    std::sort(features.begin(), features.end());
    features.erase(std::unique(features.begin(), features.end()), features.end());

    const bool minimize = criterion == Criterion::gini;
    const std::size_t min_leaf = std::max<std::size_t>(1, min_samples_leaf);
    const std::size_t n = rows.size();
    std::optional<SplitRule> best;

    std::vector<std::size_t> left(data.num_classes), right(data.num_classes);
    for (auto f : features) {
        if (f >= data.features.cols()) throw ValueError("feature index " + std::to_string(f) + " out of range");
        const auto values = sorted_values(data, rows, f);

        // Distinct values and the number of rows at or below each of them.
        std::vector<double> distinct;
        std::vector<std::size_t> end_of;  // index one past the last row with value == distinct[i]
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (distinct.empty() || distinct.back() != values[i].first) {
                if (!distinct.empty()) end_of.push_back(i);
                distinct.push_back(values[i].first);
            }
        }
        end_of.push_back(values.size());

        std::fill(left.begin(), left.end(), 0);
        std::size_t consumed = 0;
        for (auto gap : candidate_gaps(distinct.size())) {
            for (; consumed < end_of[gap]; ++consumed) ++left[values[consumed].second];
            const std::size_t n_left = consumed;
            const std::size_t n_right = n - n_left;
            if (n_left < min_leaf || n_right < min_leaf) continue;
            for (std::size_t c = 0; c < data.num_classes; ++c) right[c] = parent[c] - left[c];
            const double value = split_value(parent, left, right, n_left, n_right, criterion);
            const bool better = !best || (minimize ? value < best->criterion_value - kTieTolerance
                                                   : value > best->criterion_value + kTieTolerance);
            if (better) best = SplitRule{f, midpoint_between(distinct[gap], distinct[gap + 1]), value, criterion};
        }
    }
    if (!best) return std::nullopt;
    if (minimize) {
        if (best->criterion_value >= gini_of(parent, n) - kTieTolerance) return std::nullopt;
    } else if (best->criterion_value <= kTieTolerance) {
        return std::nullopt;
    }
    return best;
}

std::size_t TreeNode::total() const { return std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0}); }

std::size_t DecisionTree::rule_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

std::size_t DecisionTree::depth() const {
    std::size_t d = 0;
    for (const auto& n : nodes) d = std::max(d, n.depth);
    return d;
}

std::uint32_t majority_class(std::span<const std::size_t> class_counts) {
    if (class_counts.empty()) throw ValueError("majority of an empty count vector");
    return static_cast<std::uint32_t>(std::max_element(class_counts.begin(), class_counts.end()) - class_counts.begin());
}

namespace {

std::vector<std::string> default_feature_names(std::size_t m) {
    std::vector<std::string> names;
    for (std::size_t j = 0; j < m; ++j) names.push_back("f" + std::to_string(j));
    return names;
}

void grow(DecisionTree& tree, const TrainingView& data, std::vector<std::size_t> rows, std::size_t depth,
          std::span<const std::size_t> allowed, Criterion criterion) {
    const std::size_t id = tree.nodes.size();
    tree.nodes.emplace_back();
    {
        auto& node = tree.nodes.back();
        node.id = id;
        node.depth = depth;
        node.class_counts = count_classes(data, rows);
        node.leaf_class = majority_class(node.class_counts);
    }
    const auto& counts = tree.nodes[id].class_counts;
    const bool pure = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) <= 1;
    std::optional<SplitRule> split;
    if (!pure && depth < tree.max_depth && rows.size() >= 2 * tree.min_samples_leaf) {
        split = best_split(data, rows, allowed, criterion, tree.min_samples_leaf);
    }
    if (!split) {
        tree.nodes[id].routed_rows = std::move(rows);
        return;
    }
    std::vector<std::size_t> left_rows, right_rows;
    for (auto r : rows) (data.features(r, split->feature) <= split->threshold ? left_rows : right_rows).push_back(r);
    tree.nodes[id].split = split;
    tree.nodes[id].routed_rows = std::move(rows);

    tree.nodes[id].left = tree.nodes.size();
    grow(tree, data, std::move(left_rows), depth + 1, allowed, criterion);
    tree.nodes[id].right = tree.nodes.size();
    grow(tree, data, std::move(right_rows), depth + 1, allowed, criterion);
}

}  // namespace

DecisionTree build_tree(const Matrix& features, std::span<const std::uint32_t> labels, std::size_t num_classes,
                        const TreeConfig& config, std::vector<std::string> feature_names) {
    if (features.rows() == 0) throw ValueError("cannot build a tree from zero rows");
    if (labels.size() != features.rows()) {
        throw ValueError("labels have " + std::to_string(labels.size()) + " entries for " +
                         std::to_string(features.rows()) + " rows");
    }
    if (num_classes == 0) throw ValueError("num_classes must be positive");
    if (config.min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be at least 1");
    if (feature_names.empty()) feature_names = default_feature_names(features.cols());
    if (feature_names.size() != features.cols()) throw ValueError("feature name count differs from column count");

    DecisionTree tree;
    tree.algorithm = config.algorithm;
    tree.max_depth = config.max_depth;
    tree.min_samples_leaf = config.min_samples_leaf;
    tree.num_classes = num_classes;
    tree.feature_names = std::move(feature_names);
    if (config.allowed_features.empty()) {
        tree.allowed_features.resize(features.cols());
        std::iota(tree.allowed_features.begin(), tree.allowed_features.end(), 0);
    } else {
        tree.allowed_features = config.allowed_features;
        std::sort(tree.allowed_features.begin(), tree.allowed_features.end());
        for (auto f : tree.allowed_features) {
            if (f >= features.cols()) throw ConfigError("allowed feature " + std::to_string(f) + " out of range");
        }
    }
    if (tree.allowed_features.empty()) throw ValueError("feature matrix has no columns");

    const TrainingView data{features, labels, num_classes};
    std::vector<std::size_t> rows(features.rows());
    std::iota(rows.begin(), rows.end(), 0);
    grow(tree, data, std::move(rows), 0, tree.allowed_features, criterion_for(config.algorithm));
    return tree;
}

void route_rows(DecisionTree& tree, const Matrix& features) {
    for (auto& node : tree.nodes) node.routed_rows.clear();
    for (std::size_t r = 0; r < features.rows(); ++r) {
        std::size_t id = 0;
        while (true) {
            auto& node = tree.nodes[id];
            node.routed_rows.push_back(r);
            if (node.is_leaf()) break;
            id = features(r, node.split->feature) <= node.split->threshold ? node.left : node.right;
        }
    }
}

RandomForest build_forest(const Matrix& features, std::span<const std::uint32_t> labels, std::size_t num_classes,
                          const ForestConfig& config, std::vector<std::string> feature_names) {
    if (config.tree_count < 1) throw ConfigError("a forest needs at least one tree");
    const std::size_t m = features.cols();
    RandomForest forest;
    forest.config = config;
    if (forest.config.subset_size == 0) {
        forest.config.subset_size = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(m))));
    }
    const std::size_t subset = forest.config.subset_size;
    if (subset > m) {
        throw ConfigError("feature subset size " + std::to_string(subset) + " exceeds the " + std::to_string(m) +
                          " available features");
    }
    for (std::size_t t = 0; t < config.tree_count; ++t) {
        Rng rng = Rng::stream(config.seed, t);
        std::vector<std::size_t> pool(m);
        std::iota(pool.begin(), pool.end(), 0);
        for (std::size_t i = 0; i < subset; ++i) std::swap(pool[i], pool[i + rng.below(m - i)]);
        pool.resize(subset);
        std::sort(pool.begin(), pool.end());

        TreeConfig tree_config{config.algorithm, config.max_depth, config.min_samples_leaf, std::move(pool)};
        forest.trees.push_back(build_tree(features, labels, num_classes, tree_config, feature_names));
    }
    return forest;
}

std::size_t num_classes(const Model& model) {
    return std::visit([](const auto& m) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, DecisionTree>) return m.num_classes;
        else return m.num_classes();
    }, model);
}

std::span<const DecisionTree> model_trees(const Model& model) {
    if (const auto* tree = std::get_if<DecisionTree>(&model)) return {tree, 1};
    return std::get<RandomForest>(model).trees;
}

std::size_t num_features(const Model& model) { return model_trees(model).front().num_features(); }

const std::vector<std::string>& feature_names(const Model& model) { return model_trees(model).front().feature_names; }

Prediction predict(const DecisionTree& tree, std::span<const double> row) {
    if (row.size() != tree.num_features()) {
        throw ValueError("row has " + std::to_string(row.size()) + " features, model expects " +
                         std::to_string(tree.num_features()));
    }
    for (std::size_t j = 0; j < row.size(); ++j) {
        if (std::isnan(row[j])) throw ValueError("NaN feature value", 0, j);
    }
    Prediction out;
    std::size_t id = 0;
    while (true) {
        const auto& node = tree.nodes[id];
        out.path.push_back(id);
        if (node.is_leaf()) {
            out.predicted_class = node.leaf_class;
            return out;
        }
        id = row[node.split->feature] <= node.split->threshold ? node.left : node.right;
    }
}

Prediction predict(const RandomForest& forest, std::span<const double> row) {
    std::vector<Prediction> votes;
    std::vector<std::size_t> tally(forest.num_classes(), 0);
    for (const auto& tree : forest.trees) {
        votes.push_back(predict(tree, row));
        ++tally[votes.back().predicted_class];
    }
    const auto winner = majority_class(tally);
    for (std::size_t t = 0; t < votes.size(); ++t) {
        if (votes[t].predicted_class == winner) {
            votes[t].tree_index = t;
            return votes[t];
        }
    }
    throw InternalError("no tree agrees with the forest vote");
}

Prediction predict(const Model& model, std::span<const double> row) {
    return std::visit([&](const auto& m) { return predict(m, row); }, model);
}

Metrics compute_metrics(std::span<const std::uint32_t> truth, std::span<const std::uint32_t> predicted,
                        std::size_t num_classes) {
    if (truth.empty()) throw ValueError("cannot evaluate on an empty set");
    if (truth.size() != predicted.size()) throw ValueError("truth and prediction lengths differ");
    std::vector<std::size_t> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] >= num_classes || predicted[i] >= num_classes) throw ValueError("class index out of range");
        if (truth[i] == predicted[i]) {
            ++correct;
            ++tp[truth[i]];
        } else {
            ++fp[predicted[i]];
            ++fn[truth[i]];
        }
    }
    Metrics m;
    m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
    m.per_class_f1.resize(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
        m.per_class_f1[c] = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
    }
    m.macro_f1 = std::accumulate(m.per_class_f1.begin(), m.per_class_f1.end(), 0.0) / static_cast<double>(num_classes);
    return m;
}

Metrics evaluate(const Model& model, const Matrix& features, std::span<const std::uint32_t> labels) {
    if (features.rows() != labels.size()) throw ValueError("test features and labels are misaligned");
    if (features.rows() == 0) throw ValueError("cannot evaluate on an empty test set");
    std::vector<std::uint32_t> predicted;
    predicted.reserve(features.rows());
    for (std::size_t r = 0; r < features.rows(); ++r) predicted.push_back(predict(model, features.row(r)).predicted_class);
    return compute_metrics(labels, predicted, num_classes(model));
}

}  // namespace peach
