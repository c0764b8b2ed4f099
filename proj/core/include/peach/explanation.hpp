#pragma once

#include "peach/ingestion.hpp"
#include "peach/prototypes.hpp"
#include "peach/text.hpp"
#include "peach/tree_induction.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace peach {

// ---- global explanation ----

struct ExplanationNode {
    std::size_t id = 0;
    std::size_t depth = 0;
    std::vector<std::size_t> class_counts;
    std::uint32_t leaf_class = 0;
    std::optional<SplitRule> split;
    std::string feature_name;  // of the split feature, empty on leaves
    std::size_t left = 0;
    std::size_t right = 0;
    std::optional<PrototypeSummary> summary;

    bool operator==(const ExplanationNode&) const = default;
};

struct ExplainedTree {
    std::size_t tree_index = 0;
    std::vector<std::size_t> allowed_features;
    std::vector<ExplanationNode> nodes;  // pre-order, id == index

    bool operator==(const ExplainedTree&) const = default;
};

struct GlobalExplanation {
    std::string kind;  // "tree" or "forest"
    std::string algorithm;
    std::vector<std::string> class_names;
    std::vector<std::string> feature_names;
    std::string reduction_hash;
    std::string model_hash;
    std::map<std::string, Metrics> metrics;  // e.g. "train", "test"
    TagFilter filter;
    std::optional<std::size_t> topk;
    std::vector<ExplainedTree> trees;

    bool operator==(const GlobalExplanation&) const = default;

    std::string to_json() const;
    static GlobalExplanation from_json(std::string_view text);
    // Graphviz rendering of the skeleton with the top words of each node.
    std::string to_dot(std::size_t words_per_node = 5) const;
};

struct GlobalOptions {
    TagFilter filter;
    std::optional<std::size_t> topk;
    std::map<std::string, Metrics> metrics;
    std::string model_hash;
};

// Throws IncompleteArtifactError when a populated node has no summary.
GlobalExplanation global_explanation(const ModelFile& model, const PrototypeArtifact& prototypes,
                                     const GlobalOptions& options = {});

// ---- local explanation ----

enum class MatchKind { exact, synonym };

std::string to_string(MatchKind kind);

struct WordMatch {
    std::string word;  // the cloud word
    MatchKind kind = MatchKind::exact;
    std::vector<std::pair<std::size_t, std::size_t>> spans;  // half-open byte ranges in the document

    bool operator==(const WordMatch&) const = default;
};

// For each cloud word in order: exact when a document token equals it,
// otherwise synonym when some token shares a synset with it. Words without
// any match are omitted. A null lexicon disables synonym matching.
std::vector<WordMatch> match_words(std::span<const TextToken> doc_tokens, std::span<const std::string> cloud_words,
                                   const SynonymLexicon* lexicon);

struct PathStep {
    std::size_t node_id = 0;
    std::vector<WordMatch> matches;

    bool operator==(const PathStep&) const = default;
};

struct LocalExplanation {
    std::string doc_id;  // empty for ad-hoc text
    std::uint32_t predicted_class = 0;
    std::string predicted_label;
    std::optional<std::uint32_t> true_class;
    std::size_t tree_index = 0;
    bool synonym_matching = false;
    TagFilter filter;
    std::vector<PathStep> path;

    bool operator==(const LocalExplanation&) const = default;

    std::string to_json() const;
};

struct LocalRequest {
    std::string doc_id;
    std::string_view text;
    std::span<const double> feature_row;
    std::optional<std::uint32_t> true_class;
    TagFilter filter;
};

// Routes the feature row, then matches the document against each path node's
// (optionally filtered) summary.
LocalExplanation local_explanation(const ModelFile& model, const PrototypeArtifact& prototypes,
                                   const StopwordSet& stopwords, const SynonymLexicon* lexicon,
                                   const LocalRequest& request);

}  // namespace peach
