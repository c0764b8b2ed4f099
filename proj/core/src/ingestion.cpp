#include "peach/ingestion.hpp"

#include "peach/error.hpp"
#include "peach/hashing.hpp"
#include "peach/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <sstream>

namespace peach {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "embedding I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'P', 'E', 'M', '1'};

class ByteReader {
public:
    explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

    void read(void* out, std::size_t size, const char* what) {
        if (bytes_.size() - pos_ < size) throw FormatError(std::string("embedding file truncated while reading ") + what);
        std::memcpy(out, bytes_.data() + pos_, size);
        pos_ += size;
    }

    std::uint32_t u32(const char* what) {
        std::uint32_t v;
        read(&v, sizeof v, what);
        return v;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

void append(std::string& out, const void* data, std::size_t size) {
    out.append(static_cast<const char*>(data), size);
}

void append_u32(std::string& out, std::uint32_t v) { append(out, &v, sizeof v); }

std::vector<std::string_view> split_view(std::string_view line, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        parts.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

// Calls fn(line_number, line) for each line; line numbers are 1-based.
template <class Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t number = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        ++number;
        auto line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        fn(number, line);
        start = end + 1;
    }
}

template <class T>
T parse_number(std::string_view field, const std::string& context) {
    T value{};
    field = trim(field);
    const auto* first = field.data();
    const auto* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) throw FormatError("cannot parse '" + std::string(field) + "' " + context);
    return value;
}

std::string line_ctx(std::size_t line) { return "on line " + std::to_string(line); }

json parse_json_line(std::string_view line, std::size_t number) {
    try {
        return json::parse(line);
    } catch (const json::parse_error& e) {
        throw FormatError("malformed JSON " + line_ctx(number) + ": " + e.what());
    }
}

const json& require_field(const json& record, const char* field, std::size_t line) {
    if (!record.is_object() || !record.contains(field)) {
        throw SchemaError(std::string("missing field \"") + field + "\" " + line_ctx(line));
    }
    return record.at(field);
}

std::string require_string(const json& record, const char* field, std::size_t line) {
    const auto& v = require_field(record, field, line);
    if (!v.is_string()) throw SchemaError(std::string("field \"") + field + "\" must be a string " + line_ctx(line));
    return v.get<std::string>();
}

}  // namespace

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split parse_split(const std::string& text) {
    if (text == "train") return Split::train;
    if (text == "test") return Split::test;
    throw SchemaError("split must be \"train\" or \"test\", got \"" + text + "\"");
}

std::vector<std::size_t> EmbeddingMatrix::rows_in(Split which) const {
    std::vector<std::size_t> rows;
    for (std::size_t a = 0; a < n; ++a) {
        if (split[a] == which) rows.push_back(a);
    }
    return rows;
}

EmbeddingFormat parse_embedding_format(const std::string& text) {
    if (text == "binary") return EmbeddingFormat::binary;
    if (text == "csv") return EmbeddingFormat::csv;
    throw ConfigError("unknown embedding format \"" + text + "\" (expected binary or csv)");
}

void validate_embeddings(const EmbeddingMatrix& m) {
    if (m.values.size() != m.n * m.d) throw FormatError("embedding values do not form an n x d matrix");
    if (m.labels.size() != m.n || m.split.size() != m.n) throw FormatError("labels and split flags must have n entries");
    if (m.class_names.empty()) throw SchemaError("embedding matrix declares zero classes");
    for (std::size_t a = 0; a < m.n; ++a) {
        for (std::size_t j = 0; j < m.d; ++j) {
            if (!std::isfinite(m.values[a * m.d + j])) throw ValueError("non-finite embedding value", a, j);
        }
    }
    const std::size_t k = m.num_classes();
    std::vector<bool> seen_in_train(k, false);
    for (std::size_t a = 0; a < m.n; ++a) {
        if (m.labels[a] >= k) {
            throw SchemaError("label " + std::to_string(m.labels[a]) + " at row " + std::to_string(a) +
                              " is not below class count " + std::to_string(k));
        }
        if (m.split[a] == Split::train) seen_in_train[m.labels[a]] = true;
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (!seen_in_train[c]) throw SchemaError("class " + std::to_string(c) + " has no training rows");
    }
}

EmbeddingMatrix parse_embeddings_binary(std::string_view bytes) {
    ByteReader in(bytes);
    char magic[4];
    in.read(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad magic: expected PEM1");

    EmbeddingMatrix m;
    m.n = in.u32("n");
    m.d = in.u32("d");
    const std::uint32_t k = in.u32("k");
    // Guard against absurd headers before allocating.
    const std::size_t row_bytes = m.d * sizeof(float) + sizeof(std::uint32_t) + 1;
    if (m.n > in.remaining() / row_bytes) throw FormatError("embedding file shorter than its header declares");
    const std::size_t needed = m.n * row_bytes;
    if (in.remaining() < needed) throw FormatError("embedding file shorter than its header declares");

    m.values.resize(m.n * m.d);
    in.read(m.values.data(), m.values.size() * sizeof(float), "values");
    m.labels.resize(m.n);
    in.read(m.labels.data(), m.labels.size() * sizeof(std::uint32_t), "labels");
    m.split.resize(m.n);
    for (std::size_t a = 0; a < m.n; ++a) {
        std::uint8_t flag;
        in.read(&flag, 1, "split flags");
        if (flag > 1) throw FormatError("split flag at row " + std::to_string(a) + " must be 0 or 1");
        m.split[a] = static_cast<Split>(flag);
    }
    m.class_names.reserve(k);
    for (std::uint32_t c = 0; c < k; ++c) {
        const std::uint32_t len = in.u32("class name length");
        std::string name(len, '\0');
        in.read(name.data(), len, "class name");
        m.class_names.push_back(std::move(name));
    }
    if (in.remaining() != 0) throw FormatError("trailing bytes after class names");
    validate_embeddings(m);
    return m;
}

std::string serialize_embeddings_binary(const EmbeddingMatrix& m) {
    std::string out;
    out.reserve(16 + m.values.size() * 4 + m.n * 5);
    append(out, kMagic, 4);
    append_u32(out, static_cast<std::uint32_t>(m.n));
    append_u32(out, static_cast<std::uint32_t>(m.d));
    append_u32(out, static_cast<std::uint32_t>(m.class_names.size()));
    append(out, m.values.data(), m.values.size() * sizeof(float));
    append(out, m.labels.data(), m.labels.size() * sizeof(std::uint32_t));
    for (auto s : m.split) out.push_back(static_cast<char>(s));
    for (const auto& name : m.class_names) {
        append_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
    }
    return out;
}

// CSV layout: optional "# class_names=a,b,c" line, then the header
// doc_index,label,split,f0..f{d-1}, then one row per document.
EmbeddingMatrix parse_embeddings_csv(std::string_view text) {
    EmbeddingMatrix m;
    std::optional<std::vector<std::string>> declared_names;
    bool header_seen = false;
    std::uint32_t max_label = 0;

    for_each_line(text, [&](std::size_t number, std::string_view line) {
        if (trim(line).empty()) return;
        if (!header_seen && line.starts_with("#")) {
            constexpr std::string_view key = "# class_names=";
            if (line.starts_with(key)) {
                std::vector<std::string> names;
                for (auto part : split_view(line.substr(key.size()), ',')) names.emplace_back(trim(part));
                declared_names = std::move(names);
            }
            return;
        }
        const auto fields = split_view(line, ',');
        if (!header_seen) {
            if (fields.size() < 3 || trim(fields[0]) != "doc_index" || trim(fields[1]) != "label" ||
                trim(fields[2]) != "split") {
                throw FormatError("CSV header must start with doc_index,label,split");
            }
            m.d = fields.size() - 3;
            for (std::size_t j = 0; j < m.d; ++j) {
                if (trim(fields[3 + j]) != "f" + std::to_string(j)) {
                    throw FormatError("CSV header column " + std::to_string(3 + j) + " must be f" + std::to_string(j));
                }
            }
            header_seen = true;
            return;
        }
        if (fields.size() != m.d + 3) {
            throw FormatError("expected " + std::to_string(m.d + 3) + " fields " + line_ctx(number) + ", got " +
                              std::to_string(fields.size()));
        }
        const auto index = parse_number<std::size_t>(fields[0], line_ctx(number));
        if (index != m.n) throw FormatError("doc_index " + std::to_string(index) + " out of order " + line_ctx(number));
        const auto label = parse_number<std::uint32_t>(fields[1], line_ctx(number));
        max_label = std::max(max_label, label);
        m.labels.push_back(label);
        const auto split_field = trim(fields[2]);
        if (split_field == "train" || split_field == "0") {
            m.split.push_back(Split::train);
        } else if (split_field == "test" || split_field == "1") {
            m.split.push_back(Split::test);
        } else {
            throw FormatError("bad split value '" + std::string(split_field) + "' " + line_ctx(number));
        }
        for (std::size_t j = 0; j < m.d; ++j) {
            const auto value = parse_number<float>(fields[3 + j], line_ctx(number));
            if (!std::isfinite(value)) throw ValueError("non-finite embedding value", m.n, j);
            m.values.push_back(value);
        }
        ++m.n;
    });

    if (!header_seen) throw FormatError("CSV embedding file has no header");
    if (declared_names) {
        m.class_names = std::move(*declared_names);
    } else {
        for (std::uint32_t c = 0; c <= max_label && m.n > 0; ++c) m.class_names.push_back(std::to_string(c));
    }
    validate_embeddings(m);
    return m;
}

std::string serialize_embeddings_csv(const EmbeddingMatrix& m) {
    std::string out = "# class_names=";
    for (std::size_t c = 0; c < m.class_names.size(); ++c) {
        if (c) out += ',';
        out += m.class_names[c];
    }
    out += "\ndoc_index,label,split";
    for (std::size_t j = 0; j < m.d; ++j) out += ",f" + std::to_string(j);
    out += '\n';
    char buf[64];
    for (std::size_t a = 0; a < m.n; ++a) {
        out += std::to_string(a) + ',' + std::to_string(m.labels[a]) + ',' + to_string(m.split[a]);
        for (float v : m.row(a)) {
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
            out += ',';
            out.append(buf, ptr);
        }
        out += '\n';
    }
    return out;
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path, EmbeddingFormat format) {
    const auto bytes = read_file(path);
    return format == EmbeddingFormat::binary ? parse_embeddings_binary(bytes) : parse_embeddings_csv(bytes);
}

void write_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path, EmbeddingFormat format) {
    write_file(path, format == EmbeddingFormat::binary ? serialize_embeddings_binary(matrix)
                                                       : serialize_embeddings_csv(matrix));
}

Corpus parse_corpus(std::string_view jsonl) {
    Corpus corpus;
    std::set<std::string> ids;
    for_each_line(jsonl, [&](std::size_t number, std::string_view line) {
        if (trim(line).empty()) return;
        const json record = parse_json_line(line, number);
        Document doc;
        doc.doc_id = require_string(record, "doc_id", number);
        doc.text = require_string(record, "text", number);
        const auto& label = require_field(record, "label", number);
        if (!label.is_number_unsigned()) throw SchemaError("field \"label\" must be a non-negative integer " + line_ctx(number));
        doc.label = label.get<std::uint32_t>();
        doc.split = parse_split(require_string(record, "split", number));
        if (!ids.insert(doc.doc_id).second) throw SchemaError("duplicate doc_id \"" + doc.doc_id + "\" " + line_ctx(number));
        corpus.documents.push_back(std::move(doc));
    });
    return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) { return parse_corpus(read_file(path)); }

const std::vector<AnnotatedToken>* AnnotationSet::find(const std::string& doc_id) const {
    auto it = by_doc.find(doc_id);
    return it == by_doc.end() ? nullptr : &it->second;
}

std::set<std::string> default_pos_tagset() {
    return {"ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
            "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X", "SPACE"};
}

std::set<std::string> default_ner_tagset() {
    return {"PERSON", "NORP", "FAC", "ORG", "GPE", "LOC", "PRODUCT", "EVENT", "WORK_OF_ART",
            "LAW", "LANGUAGE", "DATE", "TIME", "PERCENT", "MONEY", "QUANTITY", "ORDINAL", "CARDINAL"};
}

std::pair<std::set<std::string>, std::set<std::string>> load_tagset_manifest(const std::filesystem::path& path) {
    std::set<std::string> pos, ner;
    for_each_line(read_file(path), [&](std::size_t number, std::string_view line) {
        line = trim(line);
        if (line.empty() || line.starts_with("#")) return;
        const auto parts = split_view(line, '\t');
        if (parts.size() != 2 || trim(parts[1]).empty()) throw FormatError("tagset manifest expects kind<TAB>tag " + line_ctx(number));
        const auto kind = trim(parts[0]);
        if (kind == "pos") {
            pos.emplace(trim(parts[1]));
        } else if (kind == "ner") {
            ner.emplace(trim(parts[1]));
        } else {
            throw FormatError("tagset kind must be pos or ner " + line_ctx(number));
        }
    });
    return {std::move(pos), std::move(ner)};
}

AnnotationSet parse_annotations(std::string_view jsonl, std::set<std::string> pos_tagset, std::set<std::string> ner_tagset) {
    AnnotationSet set;
    set.pos_tagset = std::move(pos_tagset);
    set.ner_tagset = std::move(ner_tagset);
    for_each_line(jsonl, [&](std::size_t number, std::string_view line) {
        if (trim(line).empty()) return;
        const json record = parse_json_line(line, number);
        const auto doc_id = require_string(record, "doc_id", number);
        const auto& tokens = require_field(record, "tokens", number);
        if (!tokens.is_array()) throw SchemaError("field \"tokens\" must be an array " + line_ctx(number));
        std::vector<AnnotatedToken> parsed;
        parsed.reserve(tokens.size());
        for (const auto& t : tokens) {
            AnnotatedToken token;
            token.surface = require_string(t, "surface", number);
            token.pos = require_string(t, "pos", number);
            if (t.contains("ner") && !t.at("ner").is_null()) token.ner = require_string(t, "ner", number);
            if (!set.pos_tagset.contains(token.pos)) throw SchemaError("undeclared POS tag \"" + token.pos + "\" " + line_ctx(number));
            if (!token.ner.empty() && !set.ner_tagset.contains(token.ner)) {
                throw SchemaError("undeclared NER tag \"" + token.ner + "\" " + line_ctx(number));
            }
            parsed.push_back(std::move(token));
        }
        if (!set.by_doc.emplace(doc_id, std::move(parsed)).second) {
            throw SchemaError("duplicate annotation record for \"" + doc_id + "\" " + line_ctx(number));
        }
    });
    return set;
}

AnnotationSet load_annotations(const std::filesystem::path& path, const std::optional<std::filesystem::path>& tagset_manifest) {
    if (tagset_manifest) {
        auto [pos, ner] = load_tagset_manifest(*tagset_manifest);
        return parse_annotations(read_file(path), std::move(pos), std::move(ner));
    }
    return parse_annotations(read_file(path), default_pos_tagset(), default_ner_tagset());
}

StopwordSet parse_stopwords(std::string_view text) {
    StopwordSet words;
    for_each_line(text, [&](std::size_t, std::string_view line) {
        line = trim(line);
        if (!line.empty()) words.insert(lowercase(line));
    });
    return words;
}

StopwordSet load_stopwords(const std::filesystem::path& path) { return parse_stopwords(read_file(path)); }

const std::vector<std::string>* SynonymLexicon::find(const std::string& word) const {
    auto it = synsets.find(word);
    return it == synsets.end() ? nullptr : &it->second;
}

bool SynonymLexicon::share_synset(const std::string& a, const std::string& b) const {
    const auto* sa = find(a);
    const auto* sb = find(b);
    if (!sa || !sb) return false;
    // Both lists are sorted.
    auto i = sa->begin();
    auto j = sb->begin();
    while (i != sa->end() && j != sb->end()) {
        if (*i == *j) return true;
        if (*i < *j) ++i; else ++j;
    }
    return false;
}

SynonymLexicon parse_lexicon(std::string_view tsv) {
    SynonymLexicon lexicon;
    for_each_line(tsv, [&](std::size_t number, std::string_view line) {
        if (trim(line).empty()) return;
        const auto parts = split_view(line, '\t');
        if (parts.size() != 2) throw FormatError("lexicon expects word<TAB>synset_ids " + line_ctx(number));
        const auto word = lowercase(trim(parts[0]));
        if (word.empty()) throw SchemaError("empty lexicon word " + line_ctx(number));
        auto& ids = lexicon.synsets[word];
        for (auto id : split_view(parts[1], ',')) {
            id = trim(id);
            if (id.empty()) throw SchemaError("empty synset id " + line_ctx(number));
            ids.emplace_back(id);
        }
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    });
    return lexicon;
}

SynonymLexicon load_lexicon(const std::filesystem::path& path) { return parse_lexicon(read_file(path)); }

std::optional<std::size_t> DatasetBundle::find_row(const std::string& doc_id) const {
    auto it = row_of_.find(doc_id);
    if (it == row_of_.end()) return std::nullopt;
    return it->second;
}

DatasetBundle validate_bundle(EmbeddingMatrix embeddings, Corpus corpus, std::optional<AnnotationSet> annotations,
                              StopwordSet stopwords, std::optional<SynonymLexicon> lexicon) {
    validate_embeddings(embeddings);
    if (embeddings.n != corpus.size()) {
        throw AlignmentError("embedding matrix has " + std::to_string(embeddings.n) + " rows but corpus has " +
                             std::to_string(corpus.size()) + " documents");
    }
    DatasetBundle bundle;
    for (std::size_t a = 0; a < embeddings.n; ++a) {
        const auto& doc = corpus.documents[a];
        if (doc.label != embeddings.labels[a]) {
            throw AlignmentError("label " + std::to_string(embeddings.labels[a]) + " in embeddings vs " +
                                     std::to_string(doc.label) + " in corpus",
                                 a);
        }
        if (doc.split != embeddings.split[a]) throw AlignmentError("split disagreement between embeddings and corpus", a);
        if (!bundle.row_of_.emplace(doc.doc_id, a).second) throw SchemaError("duplicate doc_id \"" + doc.doc_id + "\"");
    }
    if (annotations) {
        for (const auto& [doc_id, tokens] : annotations->by_doc) {
            if (!bundle.row_of_.contains(doc_id)) throw SchemaError("annotations reference unknown doc_id \"" + doc_id + "\"");
        }
    }
    bundle.embeddings = std::move(embeddings);
    bundle.corpus = std::move(corpus);
    bundle.annotations = std::move(annotations);
    bundle.stopwords = std::move(stopwords);
    bundle.lexicon = std::move(lexicon);
    return bundle;
}

std::string BundleManifest::to_json() const {
    json j;
    j["embeddings"] = embeddings.string();
    j["format"] = format == EmbeddingFormat::binary ? "binary" : "csv";
    j["corpus"] = corpus.string();
    auto put = [&](const char* key, const std::optional<std::filesystem::path>& p) {
        j[key] = p ? json(p->string()) : json(nullptr);
    };
    put("annotations", annotations);
    put("tagset", tagset);
    put("stopwords", stopwords);
    put("lexicon", lexicon);
    return j.dump(2) + "\n";
}

BundleManifest BundleManifest::from_json(std::string_view text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("malformed bundle manifest: ") + e.what());
    }
    static const std::set<std::string> known = {"embeddings", "format", "corpus", "annotations", "tagset", "stopwords", "lexicon"};
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) throw ConfigError("unknown key \"" + key + "\" in bundle manifest");
    }
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };
    auto optional_path = [&](const char* key) -> std::optional<std::filesystem::path> {
        if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
        return resolve(j.at(key).get<std::string>());
    };
    if (!j.contains("embeddings") || !j.contains("corpus")) throw ConfigError("bundle manifest needs embeddings and corpus");
    BundleManifest m;
    m.embeddings = resolve(j.at("embeddings").get<std::string>());
    m.format = parse_embedding_format(j.value("format", std::string("binary")));
    m.corpus = resolve(j.at("corpus").get<std::string>());
    m.annotations = optional_path("annotations");
    m.tagset = optional_path("tagset");
    m.stopwords = optional_path("stopwords");
    m.lexicon = optional_path("lexicon");
    return m;
}

BundleManifest BundleManifest::load(const std::filesystem::path& path) {
    return from_json(read_file(path), path.parent_path());
}

DatasetBundle load_bundle(const BundleManifest& manifest) {
    auto embeddings = load_embeddings(manifest.embeddings, manifest.format);
    auto corpus = load_corpus(manifest.corpus);
    std::optional<AnnotationSet> annotations;
    if (manifest.annotations) annotations = load_annotations(*manifest.annotations, manifest.tagset);
    StopwordSet stopwords;
    if (manifest.stopwords) stopwords = load_stopwords(*manifest.stopwords);
    std::optional<SynonymLexicon> lexicon;
    if (manifest.lexicon) lexicon = load_lexicon(*manifest.lexicon);
    return validate_bundle(std::move(embeddings), std::move(corpus), std::move(annotations), std::move(stopwords),
                           std::move(lexicon));
}

}  // namespace peach
