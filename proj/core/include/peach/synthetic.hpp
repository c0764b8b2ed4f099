#pragma once

#include "peach/ingestion.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace peach {

// Labelled documents whose embeddings are built from latent group factors:
// columns come in blocks that share a factor, and class (or subclass) means
// shift those factors. Each class owns a planted vocabulary.
struct SyntheticConfig {
    std::size_t n = 600;
    std::size_t d = 64;
    std::size_t classes = 3;
    std::size_t groups = 8;           // column blocks sharing a latent factor
    std::size_t subclasses = 0;       // 0: one mean per class; otherwise random subclass means
    double separation = 6.0;          // class mean shift on the class's own group
    double column_noise = 0.5;
    double test_fraction = 0.25;
    std::size_t planted_per_doc = 5;  // class words per document
    std::size_t filler_per_doc = 10;
    std::uint64_t seed = 0;
};

struct SyntheticDataset {
    EmbeddingMatrix embeddings;
    Corpus corpus;
    AnnotationSet annotations;
    StopwordSet stopwords;
    SynonymLexicon lexicon;
    std::vector<std::vector<std::string>> planted;  // per class
    std::vector<std::uint32_t> subclass;            // per row; equals the label without subclasses
};

// Throws ConfigError on an impossible configuration (e.g. more than three
// classes, fewer columns than groups).
SyntheticDataset generate_synthetic(const SyntheticConfig& config);

DatasetBundle to_bundle(const SyntheticDataset& data);

// Writes embeddings.pem, corpus.jsonl, annotations.jsonl, stopwords.txt,
// lexicon.tsv and bundle.json into `dir`; returns the manifest path.
std::filesystem::path write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir);

}  // namespace peach
