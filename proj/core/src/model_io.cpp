#include "peach/error.hpp"
#include "peach/tree_induction.hpp"

#include <nlohmann/json.hpp>

#include <numeric>

namespace peach {

using nlohmann::json;

namespace {

constexpr const char* kModelFormat = "peach-model/1";

json node_json(const DecisionTree& tree, std::size_t id) {
    const auto& node = tree.nodes.at(id);
    json j;
    j["id"] = node.id;
    j["depth"] = node.depth;
    j["counts"] = node.class_counts;
    if (node.is_leaf()) {
        j["leaf_class"] = node.leaf_class;
    } else {
        j["feature"] = node.split->feature;
        j["threshold"] = node.split->threshold;
        j["criterion_value"] = node.split->criterion_value;
        j["children"] = json::array({node_json(tree, node.left), node_json(tree, node.right)});
    }
    return j;
}

json tree_json(const DecisionTree& tree) {
    json j;
    j["allowed_features"] = tree.allowed_features;
    j["rule_count"] = tree.rule_count();
    j["depth"] = tree.depth();
    j["root"] = node_json(tree, 0);
    return j;
}

void read_node(DecisionTree& tree, const json& j, std::size_t depth, Criterion criterion) {
    const std::size_t id = tree.nodes.size();
    if (j.at("id").get<std::size_t>() != id) throw FormatError("node ids must be in pre-order");
    tree.nodes.emplace_back();
    {
        auto& node = tree.nodes.back();
        node.id = id;
        node.depth = depth;
        node.class_counts = j.at("counts").get<std::vector<std::size_t>>();
        if (node.class_counts.size() != tree.num_classes) throw FormatError("node counts have the wrong class count");
        node.leaf_class = majority_class(node.class_counts);
    }
    if (!j.contains("children")) {
        const auto leaf_class = j.at("leaf_class").get<std::uint32_t>();
        if (leaf_class != tree.nodes[id].leaf_class) throw FormatError("leaf_class disagrees with the node's counts");
        return;
    }
    const auto& children = j.at("children");
    if (!children.is_array() || children.size() != 2) throw FormatError("internal nodes need exactly two children");
    SplitRule split;
    split.feature = j.at("feature").get<std::size_t>();
    split.threshold = j.at("threshold").get<double>();
    split.criterion_value = j.at("criterion_value").get<double>();
    split.criterion = criterion;
    if (split.feature >= tree.num_features()) throw FormatError("split feature out of range");
    tree.nodes[id].split = split;
    tree.nodes[id].left = tree.nodes.size();
    read_node(tree, children[0], depth + 1, criterion);
    tree.nodes[id].right = tree.nodes.size();
    read_node(tree, children[1], depth + 1, criterion);
}

DecisionTree tree_from(const json& j, Algorithm algorithm, std::size_t max_depth, std::size_t min_leaf,
                       std::size_t num_classes, const std::vector<std::string>& names) {
    DecisionTree tree;
    tree.algorithm = algorithm;
    tree.max_depth = max_depth;
    tree.min_samples_leaf = min_leaf;
    tree.num_classes = num_classes;
    tree.feature_names = names;
    tree.allowed_features = j.at("allowed_features").get<std::vector<std::size_t>>();
    read_node(tree, j.at("root"), 0, criterion_for(algorithm));
    if (tree.rule_count() != j.at("rule_count").get<std::size_t>()) throw FormatError("rule_count mismatch");
    return tree;
}

}  // namespace

std::string model_to_json(const ModelFile& file) {
    const auto trees = model_trees(file.model);
    const auto& first = trees.front();
    json j;
    j["format"] = kModelFormat;
    j["algorithm"] = to_string(first.algorithm);
    j["num_classes"] = first.num_classes;
    j["class_names"] = file.class_names;
    j["feature_names"] = first.feature_names;
    j["provenance"] = {{"reduction_sha256", file.reduction_hash}};
    if (const auto* forest = std::get_if<RandomForest>(&file.model)) {
        j["kind"] = "forest";
        j["config"] = {{"max_depth", forest->config.max_depth},
                       {"min_samples_leaf", forest->config.min_samples_leaf},
                       {"tree_count", forest->config.tree_count},
                       {"subset_size", forest->config.subset_size},
                       {"seed", forest->config.seed}};
    } else {
        j["kind"] = "tree";
        j["config"] = {{"max_depth", first.max_depth}, {"min_samples_leaf", first.min_samples_leaf}};
    }
    j["trees"] = json::array();
    for (const auto& tree : trees) j["trees"].push_back(tree_json(tree));
    return j.dump(1) + "\n";
}

ModelFile model_from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("malformed model file: ") + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != kModelFormat) throw FormatError("unsupported model format");
        ModelFile file;
        const auto algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
        const auto num_classes = j.at("num_classes").get<std::size_t>();
        const auto names = j.at("feature_names").get<std::vector<std::string>>();
        file.class_names = j.at("class_names").get<std::vector<std::string>>();
        file.reduction_hash = j.at("provenance").at("reduction_sha256").get<std::string>();
        const auto& config = j.at("config");
        const auto max_depth = config.at("max_depth").get<std::size_t>();
        const auto min_leaf = config.at("min_samples_leaf").get<std::size_t>();
        const auto& trees = j.at("trees");
        if (!trees.is_array() || trees.empty()) throw FormatError("model has no trees");
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "tree") {
            if (trees.size() != 1) throw FormatError("single-tree model lists several trees");
            file.model = tree_from(trees[0], algorithm, max_depth, min_leaf, num_classes, names);
        } else if (kind == "forest") {
            RandomForest forest;
            forest.config.algorithm = algorithm;
            forest.config.max_depth = max_depth;
            forest.config.min_samples_leaf = min_leaf;
            forest.config.tree_count = config.at("tree_count").get<std::size_t>();
            forest.config.subset_size = config.at("subset_size").get<std::size_t>();
            forest.config.seed = config.at("seed").get<std::uint64_t>();
            if (forest.config.tree_count != trees.size()) throw FormatError("tree_count differs from the tree list");
            for (const auto& t : trees) forest.trees.push_back(tree_from(t, algorithm, max_depth, min_leaf, num_classes, names));
            file.model = std::move(forest);
        } else {
            throw FormatError("unknown model kind \"" + kind + "\"");
        }
        return file;
    } catch (const json::exception& e) {
        throw FormatError(std::string("invalid model file: ") + e.what());
    }
}

}  // namespace peach
