#include "peach/explanation.hpp"

#include "peach/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <map>

namespace peach {

using nlohmann::json;

namespace {

constexpr const char* kGlobalFormat = "peach-global/1";

json metrics_json(const Metrics& m) {
    return {{"accuracy", m.accuracy}, {"macro_f1", m.macro_f1}, {"per_class_f1", m.per_class_f1}};
}

Metrics metrics_from(const json& j) {
    Metrics m;
    m.accuracy = j.at("accuracy").get<double>();
    m.macro_f1 = j.at("macro_f1").get<double>();
    m.per_class_f1 = j.at("per_class_f1").get<std::vector<double>>();
    return m;
}

json summary_json(const PrototypeSummary& s) {
    json entries = json::array();
    for (const auto& e : s.entries) {
        entries.push_back({{"word", e.word}, {"score", e.score}, {"pos", e.pos}, {"ner", e.ner},
                           {"pos_tags", e.pos_tags}, {"ner_tags", e.ner_tags}});
    }
    return {{"filter", s.filter_applied.to_string()}, {"annotated", s.annotated}, {"entries", std::move(entries)}};
}

PrototypeSummary summary_from(const json& j, std::size_t node_id) {
    PrototypeSummary s;
    s.node_id = node_id;
    s.filter_applied = TagFilter::parse(j.at("filter").get<std::string>());
    s.annotated = j.at("annotated").get<bool>();
    for (const auto& e : j.at("entries")) {
        PrototypeEntry entry;
        entry.word = e.at("word").get<std::string>();
        entry.score = e.at("score").get<double>();
        entry.pos = e.at("pos").get<std::string>();
        entry.ner = e.at("ner").get<std::string>();
        entry.pos_tags = e.at("pos_tags").get<std::vector<std::string>>();
        entry.ner_tags = e.at("ner_tags").get<std::vector<std::string>>();
        s.entries.push_back(std::move(entry));
    }
    return s;
}

json node_json(const ExplainedTree& tree, std::size_t id) {
    const auto& node = tree.nodes.at(id);
    json j;
    j["id"] = node.id;
    j["depth"] = node.depth;
    j["counts"] = node.class_counts;
    j["leaf_class"] = node.leaf_class;
    j["summary"] = node.summary ? summary_json(*node.summary) : json(nullptr);
    if (node.split) {
        j["split"] = {{"feature", node.split->feature},
                      {"feature_name", node.feature_name},
                      {"threshold", node.split->threshold},
                      {"criterion", to_string(node.split->criterion)},
                      {"criterion_value", node.split->criterion_value}};
        j["children"] = json::array({node_json(tree, node.left), node_json(tree, node.right)});
    } else {
        j["split"] = nullptr;
        j["children"] = json::array();
    }
    return j;
}

Criterion parse_criterion(const std::string& text) {
    for (auto c : {Criterion::info_gain, Criterion::gain_ratio, Criterion::gini}) {
        if (to_string(c) == text) return c;
    }
    throw FormatError("unknown criterion \"" + text + "\"");
}

void read_node(ExplainedTree& tree, const json& j, std::size_t depth) {
    const std::size_t id = tree.nodes.size();
    if (j.at("id").get<std::size_t>() != id) throw FormatError("explanation node ids must be in pre-order");
    ExplanationNode node;
    node.id = id;
    node.depth = j.at("depth").get<std::size_t>();
    if (node.depth != depth) throw FormatError("explanation node depth disagrees with its position");
    node.class_counts = j.at("counts").get<std::vector<std::size_t>>();
    node.leaf_class = j.at("leaf_class").get<std::uint32_t>();
    if (!j.at("summary").is_null()) node.summary = summary_from(j.at("summary"), id);
    const auto& split = j.at("split");
    const auto& children = j.at("children");
    tree.nodes.push_back(std::move(node));
    if (split.is_null()) {
        if (!children.empty()) throw FormatError("leaf node lists children");
        return;
    }
    if (children.size() != 2) throw FormatError("internal nodes need exactly two children");
    SplitRule s;
    s.feature = split.at("feature").get<std::size_t>();
    s.threshold = split.at("threshold").get<double>();
    s.criterion = parse_criterion(split.at("criterion").get<std::string>());
    s.criterion_value = split.at("criterion_value").get<double>();
    tree.nodes[id].split = s;
    tree.nodes[id].feature_name = split.at("feature_name").get<std::string>();
    tree.nodes[id].left = tree.nodes.size();
    read_node(tree, children[0], depth + 1);
    tree.nodes[id].right = tree.nodes.size();
    read_node(tree, children[1], depth + 1);
}

std::string dot_escape(std::string_view text) {
    std::string out;
    for (char c : text) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out;
}

PrototypeSummary shaped(const PrototypeSummary& summary, const TagFilter& filter, std::optional<std::size_t> topk) {
    PrototypeSummary out = filter_annotated(summary, filter);
    if (topk && out.entries.size() > *topk) out.entries.resize(*topk);
    return out;
}

}  // namespace

std::string GlobalExplanation::to_json() const {
    json j;
    j["format"] = kGlobalFormat;
    j["kind"] = kind;
    j["algorithm"] = algorithm;
    j["class_names"] = class_names;
    j["feature_names"] = feature_names;
    j["filter"] = filter.to_string();
    j["topk"] = topk ? json(*topk) : json(nullptr);
    j["provenance"] = {{"reduction_sha256", reduction_hash}, {"model_sha256", model_hash}};
    j["metrics"] = json::object();
    for (const auto& [name, m] : metrics) j["metrics"][name] = metrics_json(m);
    j["trees"] = json::array();
    for (const auto& tree : trees) {
        json t;
        t["tree_index"] = tree.tree_index;
        t["allowed_features"] = tree.allowed_features;
        std::size_t rules = 0;
        std::size_t depth = 0;
        for (const auto& node : tree.nodes) {
            if (!node.split) ++rules;
            depth = std::max(depth, node.depth);
        }
        t["rule_count"] = rules;
        t["depth"] = depth;
        t["root"] = node_json(tree, 0);
        j["trees"].push_back(std::move(t));
    }
    return j.dump(1) + "\n";
}

GlobalExplanation GlobalExplanation::from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("malformed global explanation: ") + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != kGlobalFormat) throw FormatError("unsupported explanation format");
        GlobalExplanation g;
        g.kind = j.at("kind").get<std::string>();
        g.algorithm = j.at("algorithm").get<std::string>();
        g.class_names = j.at("class_names").get<std::vector<std::string>>();
        g.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        g.filter = TagFilter::parse(j.at("filter").get<std::string>());
        if (!j.at("topk").is_null()) g.topk = j.at("topk").get<std::size_t>();
        g.reduction_hash = j.at("provenance").at("reduction_sha256").get<std::string>();
        g.model_hash = j.at("provenance").at("model_sha256").get<std::string>();
        for (const auto& [name, m] : j.at("metrics").items()) g.metrics.emplace(name, metrics_from(m));
        for (const auto& t : j.at("trees")) {
            ExplainedTree tree;
            tree.tree_index = t.at("tree_index").get<std::size_t>();
            tree.allowed_features = t.at("allowed_features").get<std::vector<std::size_t>>();
            read_node(tree, t.at("root"), 0);
            g.trees.push_back(std::move(tree));
        }
        return g;
    } catch (const json::exception& e) {
        throw FormatError(std::string("invalid global explanation: ") + e.what());
    }
}

std::string GlobalExplanation::to_dot(std::size_t words_per_node) const {
    std::string out = "digraph peach {\n  node [shape=box, fontname=\"Helvetica\"];\n";
    for (const auto& tree : trees) {
        const std::string prefix = "t" + std::to_string(tree.tree_index) + "n";
        for (const auto& node : tree.nodes) {
            std::string label;
            if (node.split) {
                label = node.feature_name + " <= " + json(node.split->threshold).dump();
            } else {
                const auto c = node.leaf_class;
                label = "class " + (c < class_names.size() ? class_names[c] : std::to_string(c));
            }
            if (node.summary) {
                const auto n = std::min(words_per_node, node.summary->entries.size());
                for (std::size_t i = 0; i < n; ++i) label += (i == 0 ? "\\n" : ", ") + node.summary->entries[i].word;
            }
            out += "  " + prefix + std::to_string(node.id) + " [label=\"" + dot_escape(label) + "\"];\n";
            if (node.split) {
                out += "  " + prefix + std::to_string(node.id) + " -> " + prefix + std::to_string(node.left) +
                       " [label=\"yes\"];\n";
                out += "  " + prefix + std::to_string(node.id) + " -> " + prefix + std::to_string(node.right) +
                       " [label=\"no\"];\n";
            }
        }
    }
    out += "}\n";
    return out;
}

GlobalExplanation global_explanation(const ModelFile& model, const PrototypeArtifact& prototypes,
                                     const GlobalOptions& options) {
    const auto trees = model_trees(model.model);
    if (prototypes.trees.size() != trees.size()) {
        throw IncompleteArtifactError("prototype artifact covers " + std::to_string(prototypes.trees.size()) +
                                      " trees but the model has " + std::to_string(trees.size()));
    }
    GlobalExplanation g;
    g.kind = std::holds_alternative<RandomForest>(model.model) ? "forest" : "tree";
    g.algorithm = to_string(trees.front().algorithm);
    g.class_names = model.class_names;
    g.feature_names = trees.front().feature_names;
    g.reduction_hash = model.reduction_hash;
    g.model_hash = options.model_hash;
    g.metrics = options.metrics;
    g.filter = options.filter;
    g.topk = options.topk;
    for (std::size_t t = 0; t < trees.size(); ++t) {
        ExplainedTree out;
        out.tree_index = t;
        out.allowed_features = trees[t].allowed_features;
        for (const auto& node : trees[t].nodes) {
            ExplanationNode e;
            e.id = node.id;
            e.depth = node.depth;
            e.class_counts = node.class_counts;
            e.leaf_class = node.leaf_class;
            e.split = node.split;
            if (node.split) e.feature_name = trees[t].feature_names.at(node.split->feature);
            e.left = node.left;
            e.right = node.right;
            const auto* summary = prototypes.find(t, node.id);
            if (summary) {
                e.summary = shaped(*summary, options.filter, options.topk);
            } else if (node.total() > 0) {
                throw IncompleteArtifactError("no prototype summary for populated node " + std::to_string(node.id) +
                                              " of tree " + std::to_string(t));
            }
            out.nodes.push_back(std::move(e));
        }
        g.trees.push_back(std::move(out));
    }
    return g;
}

std::string to_string(MatchKind kind) { return kind == MatchKind::exact ? "exact" : "synonym"; }

std::vector<WordMatch> match_words(std::span<const TextToken> doc_tokens, std::span<const std::string> cloud_words,
                                   const SynonymLexicon* lexicon) {
    std::map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> spans_of;
    for (const auto& token : doc_tokens) spans_of[token.word].emplace_back(token.begin, token.end);

    std::vector<WordMatch> matches;
    for (const auto& word : cloud_words) {
        WordMatch match;
        match.word = word;
        if (auto it = spans_of.find(word); it != spans_of.end()) {
            match.kind = MatchKind::exact;
            match.spans = it->second;
        } else if (lexicon && lexicon->find(word)) {
            match.kind = MatchKind::synonym;
            for (const auto& [token_word, spans] : spans_of) {
                if (lexicon->share_synset(token_word, word)) match.spans.insert(match.spans.end(), spans.begin(), spans.end());
            }
            std::sort(match.spans.begin(), match.spans.end());
        }
        if (!match.spans.empty()) matches.push_back(std::move(match));
    }
    return matches;
}

std::string LocalExplanation::to_json() const {
    json j;
    j["doc_id"] = doc_id.empty() ? json(nullptr) : json(doc_id);
    j["predicted_class"] = predicted_class;
    j["predicted_label"] = predicted_label;
    j["true_class"] = true_class ? json(*true_class) : json(nullptr);
    j["tree_index"] = tree_index;
    j["synonym_matching"] = synonym_matching;
    j["filter"] = filter.to_string();
    j["path"] = json::array();
    for (const auto& step : path) {
        json matches = json::array();
        for (const auto& m : step.matches) {
            json spans = json::array();
            for (const auto& [b, e] : m.spans) spans.push_back({b, e});
            matches.push_back({{"word", m.word}, {"kind", to_string(m.kind)}, {"spans", std::move(spans)}});
        }
        j["path"].push_back({{"node_id", step.node_id}, {"matches", std::move(matches)}});
    }
    return j.dump(1) + "\n";
}

LocalExplanation local_explanation(const ModelFile& model, const PrototypeArtifact& prototypes,
                                   const StopwordSet& stopwords, const SynonymLexicon* lexicon,
                                   const LocalRequest& request) {
    if (request.feature_row.empty()) {
        throw MissingResourceError("a local explanation needs the document's embedding or feature row");
    }
    const auto prediction = predict(model.model, request.feature_row);
    LocalExplanation out;
    out.doc_id = request.doc_id;
    out.predicted_class = prediction.predicted_class;
    out.predicted_label = prediction.predicted_class < model.class_names.size()
                              ? model.class_names[prediction.predicted_class]
                              : std::to_string(prediction.predicted_class);
    out.true_class = request.true_class;
    out.tree_index = prediction.tree_index;
    out.synonym_matching = lexicon != nullptr;
    out.filter = request.filter;

    const auto tokens = tokenize_normalize(request.text, stopwords);
    for (auto node_id : prediction.path) {
        const auto* summary = prototypes.find(prediction.tree_index, node_id);
        if (!summary) {
            throw IncompleteArtifactError("no prototype summary for node " + std::to_string(node_id) + " of tree " +
                                          std::to_string(prediction.tree_index));
        }
        const auto cloud = filter_annotated(*summary, request.filter);
        std::vector<std::string> words;
        words.reserve(cloud.entries.size());
        for (const auto& e : cloud.entries) words.push_back(e.word);
        out.path.push_back({node_id, match_words(tokens, words, lexicon)});
    }
    return out;
}

}  // namespace peach
