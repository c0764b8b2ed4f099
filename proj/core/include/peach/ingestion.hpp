#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace peach {

enum class Split : std::uint8_t { train = 0, test = 1 };

std::string to_string(Split split);
Split parse_split(const std::string& text);

// n x d document embeddings with their labels. Values are float32 as stored on disk.
struct EmbeddingMatrix {
    std::size_t n = 0;
    std::size_t d = 0;
    std::vector<float> values;  // row-major, n * d
    std::vector<std::uint32_t> labels;
    std::vector<std::string> class_names;
    std::vector<Split> split;

    std::size_t num_classes() const noexcept { return class_names.size(); }
    std::span<const float> row(std::size_t a) const { return {values.data() + a * d, d}; }

    // Row indices belonging to one split, ascending.
    std::vector<std::size_t> rows_in(Split which) const;

    bool operator==(const EmbeddingMatrix&) const = default;
};

enum class EmbeddingFormat { binary, csv };

EmbeddingFormat parse_embedding_format(const std::string& text);

// Throws FormatError, ValueError (non-finite cell) or SchemaError (labels).
EmbeddingMatrix load_embeddings(const std::filesystem::path& path, EmbeddingFormat format);
EmbeddingMatrix parse_embeddings_binary(std::string_view bytes);
EmbeddingMatrix parse_embeddings_csv(std::string_view text);

std::string serialize_embeddings_binary(const EmbeddingMatrix& matrix);
std::string serialize_embeddings_csv(const EmbeddingMatrix& matrix);
void write_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path, EmbeddingFormat format);

// Checks the EmbeddingMatrix invariants; throws on the first violation.
void validate_embeddings(const EmbeddingMatrix& matrix);

struct Document {
    std::string doc_id;
    std::string text;
    std::uint32_t label = 0;
    Split split = Split::train;

    bool operator==(const Document&) const = default;
};

struct Corpus {
    std::vector<Document> documents;

    std::size_t size() const noexcept { return documents.size(); }
};

Corpus load_corpus(const std::filesystem::path& path);
Corpus parse_corpus(std::string_view jsonl);

struct AnnotatedToken {
    std::string surface;
    std::string pos;
    std::string ner;  // empty when the token is not part of an entity
};

struct AnnotationSet {
    std::unordered_map<std::string, std::vector<AnnotatedToken>> by_doc;
    std::set<std::string> pos_tagset;
    std::set<std::string> ner_tagset;

    const std::vector<AnnotatedToken>* find(const std::string& doc_id) const;
};

// Universal POS tags and the OntoNotes entity labels.
std::set<std::string> default_pos_tagset();
std::set<std::string> default_ner_tagset();

// Tagset manifest: one "pos<TAB>TAG" or "ner<TAB>TAG" entry per line.
std::pair<std::set<std::string>, std::set<std::string>> load_tagset_manifest(const std::filesystem::path& path);

AnnotationSet parse_annotations(std::string_view jsonl, std::set<std::string> pos_tagset,
                                std::set<std::string> ner_tagset);
AnnotationSet load_annotations(const std::filesystem::path& path,
                               const std::optional<std::filesystem::path>& tagset_manifest = std::nullopt);

using StopwordSet = std::set<std::string>;

StopwordSet parse_stopwords(std::string_view text);
StopwordSet load_stopwords(const std::filesystem::path& path);

struct SynonymLexicon {
    std::unordered_map<std::string, std::vector<std::string>> synsets;  // sorted, distinct ids

    const std::vector<std::string>* find(const std::string& word) const;
    bool share_synset(const std::string& a, const std::string& b) const;
};

SynonymLexicon parse_lexicon(std::string_view tsv);
SynonymLexicon load_lexicon(const std::filesystem::path& path);

struct DatasetBundle {
    EmbeddingMatrix embeddings;
    Corpus corpus;
    std::optional<AnnotationSet> annotations;
    StopwordSet stopwords;
    std::optional<SynonymLexicon> lexicon;

    // Row index of a document id, or nullopt.
    std::optional<std::size_t> find_row(const std::string& doc_id) const;
    std::vector<std::size_t> rows_in(Split which) const { return embeddings.rows_in(which); }

private:
    friend DatasetBundle validate_bundle(EmbeddingMatrix, Corpus, std::optional<AnnotationSet>, StopwordSet,
                                         std::optional<SynonymLexicon>);
    std::unordered_map<std::string, std::size_t> row_of_;
};

// Succeeds iff counts, order and labels align. Throws AlignmentError otherwise.
DatasetBundle validate_bundle(EmbeddingMatrix embeddings, Corpus corpus,
                              std::optional<AnnotationSet> annotations = std::nullopt,
                              StopwordSet stopwords = {},
                              std::optional<SynonymLexicon> lexicon = std::nullopt);

// Paths of the files that make up a bundle; persisted by `peach ingest`.
struct BundleManifest {
    std::filesystem::path embeddings;
    EmbeddingFormat format = EmbeddingFormat::binary;
    std::filesystem::path corpus;
    std::optional<std::filesystem::path> annotations;
    std::optional<std::filesystem::path> tagset;
    std::optional<std::filesystem::path> stopwords;
    std::optional<std::filesystem::path> lexicon;

    std::string to_json() const;
    // Relative paths in the manifest resolve against `base_dir`.
    static BundleManifest from_json(std::string_view text, const std::filesystem::path& base_dir);
    static BundleManifest load(const std::filesystem::path& path);
};

DatasetBundle load_bundle(const BundleManifest& manifest);

}  // namespace peach
