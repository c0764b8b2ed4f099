#pragma once

#include "peach/ingestion.hpp"
#include "peach/matrix.hpp"
#include "peach/tree_induction.hpp"

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace peach {

// Document frequencies over the tokenized training documents.
struct CorpusStats {
    std::unordered_map<std::string, std::size_t> df;
    std::size_t N = 0;
    StopwordSet stopwords;

    // ln((1 + N) / (1 + df)) + 1
    double idf(const std::string& word) const;
    std::string stopword_hash() const;
};

// Throws ValueError when the corpus has no training documents.
CorpusStats build_corpus_stats(const Corpus& corpus, const StopwordSet& stopwords);

struct PrototypeEntry {
    std::string word;
    double score = 0.0;
    std::string pos;  // majority tag over occurrences in the node's documents
    std::string ner;
    std::vector<std::string> pos_tags;  // every tag observed, sorted
    std::vector<std::string> ner_tags;

    bool operator==(const PrototypeEntry&) const = default;
};

enum class FilterKind { none, pos, ner };

struct TagFilter {
    FilterKind kind = FilterKind::none;
    std::set<std::string> tags;

    bool empty() const noexcept { return kind == FilterKind::none || tags.empty(); }
    // "", "none", "pos:ADJ", "ner:ORG,LOC". Throws ConfigError on bad syntax.
    static TagFilter parse(std::string_view text);
    std::string to_string() const;

    bool operator==(const TagFilter&) const = default;
};

struct PrototypeSummary {
    std::size_t node_id = 0;
    std::vector<PrototypeEntry> entries;  // descending score, ties ascending by word
    TagFilter filter_applied;
    bool annotated = false;  // pos/ner fields filled from an AnnotationSet

    bool operator==(const PrototypeSummary&) const = default;
};

inline constexpr std::size_t kDefaultCloudSize = 100;

// Top-k words of the node's routed documents by summed raw tf times global idf.
// Throws EmptyNodeError when no documents are routed.
PrototypeSummary node_wordcloud(std::size_t node_id, std::span<const std::string_view> routed_texts,
                                const CorpusStats& stats, std::size_t k = kDefaultCloudSize);

// Records majority and observed POS/NER tags on each entry.
void annotate_summary(PrototypeSummary& summary, std::span<const std::string> routed_doc_ids,
                      const AnnotationSet& annotations);

// Keeps entries carrying a requested tag in at least one routed occurrence;
// order is preserved. Throws MissingResourceError without annotations.
PrototypeSummary apply_filter(const PrototypeSummary& summary, const AnnotationSet* annotations,
                              std::span<const std::string> routed_doc_ids, const TagFilter& filter);

// Same filter using the tags already recorded on an annotated summary.
PrototypeSummary filter_annotated(const PrototypeSummary& summary, const TagFilter& filter);

// Summaries for every populated node of every tree in a model.
struct PrototypeArtifact {
    std::size_t k = kDefaultCloudSize;
    std::size_t N = 0;
    std::size_t vocabulary_size = 0;
    std::string stopword_hash;
    std::string model_hash;
    bool annotated = false;
    std::vector<std::map<std::size_t, PrototypeSummary>> trees;

    const PrototypeSummary* find(std::size_t tree_index, std::size_t node_id) const;

    std::string to_json() const;
    static PrototypeArtifact from_json(std::string_view text);
};

// `train_features` holds the training rows in bundle order `train_rows`.
PrototypeArtifact summarize(const Model& model, const Matrix& train_features, std::span<const std::size_t> train_rows,
                            const DatasetBundle& bundle, std::size_t k = kDefaultCloudSize,
                            std::string model_hash = {});

}  // namespace peach
