#include "peach/prototypes.hpp"

#include "peach/error.hpp"
#include "peach/hashing.hpp"
#include "peach/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace peach {

using nlohmann::json;

double CorpusStats::idf(const std::string& word) const {
    auto it = df.find(word);
    const double freq = it == df.end() ? 0.0 : static_cast<double>(it->second);
    return std::log((1.0 + static_cast<double>(N)) / (1.0 + freq)) + 1.0;
}

std::string CorpusStats::stopword_hash() const {
    std::string joined;
    for (const auto& w : stopwords) joined += w + "\n";
    return sha256_hex(joined);
}

CorpusStats build_corpus_stats(const Corpus& corpus, const StopwordSet& stopwords) {
    CorpusStats stats;
    stats.stopwords = stopwords;
    for (const auto& doc : corpus.documents) {
        if (doc.split != Split::train) continue;
        ++stats.N;
        std::set<std::string> seen;
        for (auto& token : tokenize_normalize(doc.text, stopwords)) seen.insert(std::move(token.word));
        for (const auto& word : seen) ++stats.df[word];
    }
    if (stats.N == 0) throw ValueError("corpus statistics need at least one training document");
    return stats;
}

TagFilter TagFilter::parse(std::string_view text) {
    TagFilter filter;
    if (text.empty() || text == "none") return filter;
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) throw ConfigError("filter must look like pos:TAG[,TAG] or ner:TAG[,TAG]");
    const auto kind = text.substr(0, colon);
    if (kind == "pos") {
        filter.kind = FilterKind::pos;
    } else if (kind == "ner") {
        filter.kind = FilterKind::ner;
    } else {
        throw ConfigError("filter kind must be pos or ner, got \"" + std::string(kind) + "\"");
    }
    auto rest = text.substr(colon + 1);
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        const auto tag = rest.substr(0, comma);
        if (tag.empty()) throw ConfigError("empty tag in filter \"" + std::string(text) + "\"");
        filter.tags.emplace(tag);
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
        if (rest.empty()) throw ConfigError("trailing comma in filter \"" + std::string(text) + "\"");
    }
    if (filter.tags.empty()) filter.kind = FilterKind::none;
    return filter;
}

std::string TagFilter::to_string() const {
    if (empty()) return "none";
    std::string out = kind == FilterKind::pos ? "pos:" : "ner:";
    bool first = true;
    for (const auto& tag : tags) {
        if (!first) out += ',';
        out += tag;
        first = false;
    }
    return out;
}

PrototypeSummary node_wordcloud(std::size_t node_id, std::span<const std::string_view> routed_texts,
                                const CorpusStats& stats, std::size_t k) {
    if (routed_texts.empty()) throw EmptyNodeError("node " + std::to_string(node_id) + " has no routed documents");
    std::unordered_map<std::string, std::size_t> tf;
    for (auto text : routed_texts) {
        for (auto& token : tokenize_normalize(text, stats.stopwords)) ++tf[std::move(token.word)];
    }
    PrototypeSummary summary;
    summary.node_id = node_id;
    summary.entries.reserve(tf.size());
    for (const auto& [word, count] : tf) {
        PrototypeEntry entry;
        entry.word = word;
        entry.score = static_cast<double>(count) * stats.idf(word);
        summary.entries.push_back(std::move(entry));
    }
    auto ranked = [](const PrototypeEntry& a, const PrototypeEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.word < b.word;
    };
    if (summary.entries.size() > k) {
        std::partial_sort(summary.entries.begin(), summary.entries.begin() + static_cast<std::ptrdiff_t>(k),
                          summary.entries.end(), ranked);
        summary.entries.resize(k);
    } else {
        std::sort(summary.entries.begin(), summary.entries.end(), ranked);
    }
    return summary;
}

namespace {

std::string majority(const std::map<std::string, std::size_t>& counts) {
    std::string best;
    std::size_t best_count = 0;
    for (const auto& [tag, count] : counts) {  // map order gives the lexicographic tie-break
        if (count > best_count) {
            best = tag;
            best_count = count;
        }
    }
    return best;
}

std::vector<std::string> keys(const std::map<std::string, std::size_t>& counts) {
    std::vector<std::string> out;
    for (const auto& [tag, count] : counts) out.push_back(tag);
    return out;
}

bool carries(const PrototypeEntry& entry, const TagFilter& filter) {
    const auto& tags = filter.kind == FilterKind::pos ? entry.pos_tags : entry.ner_tags;
    return std::any_of(tags.begin(), tags.end(), [&](const std::string& t) { return filter.tags.contains(t); });
}

}  // namespace

void annotate_summary(PrototypeSummary& summary, std::span<const std::string> routed_doc_ids,
                      const AnnotationSet& annotations) {
    std::unordered_map<std::string, std::pair<std::map<std::string, std::size_t>, std::map<std::string, std::size_t>>> tally;
    for (const auto& entry : summary.entries) tally[entry.word];
    const StopwordSet none;
    for (const auto& doc_id : routed_doc_ids) {
        const auto* tokens = annotations.find(doc_id);
        if (!tokens) throw MissingResourceError("no annotations for document \"" + doc_id + "\"");
        for (const auto& token : *tokens) {
            // Multi-token entities contribute each constituent token.
            for (const auto& piece : tokenize_normalize(token.surface, none)) {
                auto it = tally.find(piece.word);
                if (it == tally.end()) continue;
                ++it->second.first[token.pos];
                if (!token.ner.empty()) ++it->second.second[token.ner];
            }
        }
    }
    for (auto& entry : summary.entries) {
        const auto& [pos, ner] = tally.at(entry.word);
        entry.pos = majority(pos);
        entry.ner = majority(ner);
        entry.pos_tags = keys(pos);
        entry.ner_tags = keys(ner);
    }
    summary.annotated = true;
}

PrototypeSummary apply_filter(const PrototypeSummary& summary, const AnnotationSet* annotations,
                              std::span<const std::string> routed_doc_ids, const TagFilter& filter) {
    if (filter.empty()) return summary;
    if (!annotations) throw MissingResourceError("visualization filters need token annotations");
    PrototypeSummary annotated = summary;
    annotate_summary(annotated, routed_doc_ids, *annotations);
    return filter_annotated(annotated, filter);
}

PrototypeSummary filter_annotated(const PrototypeSummary& summary, const TagFilter& filter) {
    if (filter.empty()) return summary;
    if (!summary.annotated) throw MissingResourceError("prototype summaries were built without token annotations");
    PrototypeSummary out;
    out.node_id = summary.node_id;
    out.annotated = true;
    out.filter_applied = filter;
    std::copy_if(summary.entries.begin(), summary.entries.end(), std::back_inserter(out.entries),
                 [&](const PrototypeEntry& e) { return carries(e, filter); });
    return out;
}

const PrototypeSummary* PrototypeArtifact::find(std::size_t tree_index, std::size_t node_id) const {
    if (tree_index >= trees.size()) return nullptr;
    auto it = trees[tree_index].find(node_id);
    return it == trees[tree_index].end() ? nullptr : &it->second;
}

PrototypeArtifact summarize(const Model& model, const Matrix& train_features, std::span<const std::size_t> train_rows,
                            const DatasetBundle& bundle, std::size_t k, std::string model_hash) {
    if (train_features.rows() != train_rows.size()) throw ValueError("training features and row list are misaligned");
    const auto stats = build_corpus_stats(bundle.corpus, bundle.stopwords);
    PrototypeArtifact artifact;
    artifact.k = k;
    artifact.N = stats.N;
    artifact.vocabulary_size = stats.df.size();
    artifact.stopword_hash = stats.stopword_hash();
    artifact.model_hash = std::move(model_hash);
    artifact.annotated = bundle.annotations.has_value();

    for (const auto& original : model_trees(model)) {
        DecisionTree tree = original;
        route_rows(tree, train_features);
        auto& summaries = artifact.trees.emplace_back();
        for (const auto& node : tree.nodes) {
            if (node.routed_rows.empty()) continue;
            std::vector<std::string_view> texts;
            std::vector<std::string> ids;
            for (auto r : node.routed_rows) {
                const auto& doc = bundle.corpus.documents.at(train_rows[r]);
                texts.emplace_back(doc.text);
                ids.push_back(doc.doc_id);
            }
            auto summary = node_wordcloud(node.id, texts, stats, k);
            if (bundle.annotations) annotate_summary(summary, ids, *bundle.annotations);
            summaries.emplace(node.id, std::move(summary));
        }
    }
    return artifact;
}

// ---- serialization ----

namespace {

json entry_json(const PrototypeEntry& e) {
    return {{"word", e.word}, {"score", e.score}, {"pos", e.pos}, {"ner", e.ner}, {"pos_tags", e.pos_tags},
            {"ner_tags", e.ner_tags}};
}

PrototypeEntry entry_from(const json& j) {
    PrototypeEntry e;
    e.word = j.at("word").get<std::string>();
    e.score = j.at("score").get<double>();
    e.pos = j.at("pos").get<std::string>();
    e.ner = j.at("ner").get<std::string>();
    e.pos_tags = j.value("pos_tags", std::vector<std::string>{});
    e.ner_tags = j.value("ner_tags", std::vector<std::string>{});
    return e;
}

}  // namespace

std::string PrototypeArtifact::to_json() const {
    json j;
    j["format"] = "peach-prototypes/1";
    j["k"] = k;
    j["annotated"] = annotated;
    j["model_sha256"] = model_hash;
    j["stats"] = {{"N", N}, {"vocabulary_size", vocabulary_size}, {"stopword_sha256", stopword_hash}};
    j["trees"] = json::array();
    for (std::size_t t = 0; t < trees.size(); ++t) {
        json nodes = json::object();
        for (const auto& [id, summary] : trees[t]) {
            json entries = json::array();
            for (const auto& e : summary.entries) entries.push_back(entry_json(e));
            nodes[std::to_string(id)] = std::move(entries);
        }
        j["trees"].push_back({{"tree_index", t}, {"nodes", std::move(nodes)}});
    }
    return j.dump(1) + "\n";
}

PrototypeArtifact PrototypeArtifact::from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("malformed prototype artifact: ") + e.what());
    }
    try {
        PrototypeArtifact a;
        a.k = j.at("k").get<std::size_t>();
        a.annotated = j.at("annotated").get<bool>();
        a.model_hash = j.at("model_sha256").get<std::string>();
        const auto& stats = j.at("stats");
        a.N = stats.at("N").get<std::size_t>();
        a.vocabulary_size = stats.at("vocabulary_size").get<std::size_t>();
        a.stopword_hash = stats.at("stopword_sha256").get<std::string>();
        for (const auto& t : j.at("trees")) {
            auto& summaries = a.trees.emplace_back();
            for (const auto& [key, entries] : t.at("nodes").items()) {
                PrototypeSummary s;
                s.node_id = std::stoul(key);
                s.annotated = a.annotated;
                for (const auto& e : entries) s.entries.push_back(entry_from(e));
                summaries.emplace(s.node_id, std::move(s));
            }
        }
        return a;
    } catch (const json::exception& e) {
        throw FormatError(std::string("invalid prototype artifact: ") + e.what());
    }
}

}  // namespace peach
