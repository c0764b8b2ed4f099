#include "peach/synthetic.hpp"

#include "peach/error.hpp"
#include "peach/hashing.hpp"
#include "peach/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <set>

namespace peach {

using nlohmann::json;

namespace {

struct WordInfo {
    const char* word;
    const char* pos;
    const char* ner;
};

const std::vector<std::vector<WordInfo>>& class_words() {
    static const std::vector<std::vector<WordInfo>> words = {
        {{"goal", "NOUN", ""}, {"match", "NOUN", ""}, {"team", "NOUN", ""}, {"score", "NOUN", ""},
         {"coach", "NOUN", ""}, {"stadium", "NOUN", ""}, {"athletic", "ADJ", ""}, {"victorious", "ADJ", ""}},
        {{"software", "NOUN", ""}, {"chip", "NOUN", ""}, {"network", "NOUN", ""}, {"device", "NOUN", ""},
         {"server", "NOUN", ""}, {"code", "NOUN", ""}, {"digital", "ADJ", ""}, {"wireless", "ADJ", ""}},
        {{"election", "NOUN", ""}, {"senate", "NOUN", ""}, {"policy", "NOUN", ""}, {"vote", "NOUN", ""},
         {"minister", "NOUN", ""}, {"campaign", "NOUN", ""}, {"partisan", "ADJ", ""}, {"legislative", "ADJ", ""}},
    };
    return words;
}

const std::vector<WordInfo>& filler_words() {
    static const std::vector<WordInfo> words = {
        {"year", "NOUN", ""},      {"people", "NOUN", ""},   {"time", "NOUN", ""},     {"day", "NOUN", ""},
        {"report", "NOUN", ""},    {"week", "NOUN", ""},     {"city", "NOUN", ""},     {"group", "NOUN", ""},
        {"plan", "NOUN", ""},      {"world", "NOUN", ""},    {"said", "VERB", ""},     {"made", "VERB", ""},
        {"announced", "VERB", ""}, {"expected", "VERB", ""}, {"showed", "VERB", ""},   {"reported", "VERB", ""},
        {"new", "ADJ", ""},        {"big", "ADJ", ""},       {"recent", "ADJ", ""},    {"local", "ADJ", ""},
        {"major", "ADJ", ""},      {"early", "ADJ", ""},     {"london", "PROPN", "GPE"}, {"paris", "PROPN", "GPE"},
        {"acme", "PROPN", "ORG"},  {"globex", "PROPN", "ORG"}, {"monday", "PROPN", "DATE"}, {"smith", "PROPN", "PERSON"},
        {"target", "NOUN", ""},    {"program", "NOUN", ""},  {"poll", "NOUN", ""},     {"large", "ADJ", ""},
    };
    return words;
}

const std::vector<WordInfo>& stop_words() {
    static const std::vector<WordInfo> words = {
        {"the", "DET", ""}, {"a", "DET", ""},   {"and", "CCONJ", ""}, {"of", "ADP", ""},
        {"to", "ADP", ""},  {"in", "ADP", ""},  {"on", "ADP", ""},    {"with", "ADP", ""},
        {"is", "AUX", ""},  {"was", "AUX", ""},
    };
    return words;
}

// word <TAB> synset pairs; each synset links one planted or filler word to a filler synonym.
const std::vector<std::pair<const char*, const char*>>& synonym_pairs() {
    static const std::vector<std::pair<const char*, const char*>> pairs = {
        {"goal", "goal.n.01"},     {"target", "goal.n.01"},   {"software", "software.n.01"},
        {"program", "software.n.01"}, {"election", "poll.n.01"}, {"poll", "poll.n.01"},
        {"big", "large.a.01"},     {"large", "large.a.01"},
    };
    return pairs;
}

std::string capitalized(std::string word) {
    if (!word.empty() && word[0] >= 'a' && word[0] <= 'z') word[0] = static_cast<char>(word[0] - 'a' + 'A');
    return word;
}

std::vector<std::vector<double>> factor_means(const SyntheticConfig& config, Rng& rng) {
    std::vector<std::vector<double>> means;
    if (config.subclasses == 0) {
        for (std::size_t c = 0; c < config.classes; ++c) {
            std::vector<double> mean(config.groups, 0.0);
            mean[c] = config.separation;
            means.push_back(std::move(mean));
        }
        return means;
    }
    // Distinct random corners of the +-separation/2 hypercube.
    const double half = config.separation / 2.0;
    std::set<std::vector<double>> used;
    while (means.size() < config.subclasses) {
        std::vector<double> mean(config.groups);
        for (auto& v : mean) v = rng.below(2) == 0 ? -half : half;
        if (used.insert(mean).second) means.push_back(std::move(mean));
    }
    return means;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticConfig& config) {
    if (config.classes < 2 || config.classes > class_words().size()) {
        throw ConfigError("synthetic data supports 2 or 3 classes");
    }
    if (config.groups < config.classes || config.groups > config.d) {
        throw ConfigError("synthetic groups must be at least the class count and at most d");
    }
    if (config.subclasses != 0 && config.subclasses < config.classes) {
        throw ConfigError("need at least one subclass per class");
    }
    if (config.subclasses > (std::size_t{1} << std::min<std::size_t>(config.groups, 30))) {
        throw ConfigError("too many subclasses for the number of groups");
    }
    const std::size_t modes = config.subclasses == 0 ? config.classes : config.subclasses;
    if (config.n < modes) throw ConfigError("synthetic n must cover every class and subclass");
    if (config.test_fraction < 0.0 || config.test_fraction >= 1.0) throw ConfigError("test_fraction must lie in [0, 1)");

    Rng rng(config.seed);
    const auto means = factor_means(config, rng);

    SyntheticDataset out;
    auto& e = out.embeddings;
    e.n = config.n;
    e.d = config.d;
    e.values.reserve(config.n * config.d);
    static const char* kNames[] = {"sports", "technology", "politics"};
    for (std::size_t c = 0; c < config.classes; ++c) e.class_names.emplace_back(kNames[c]);

    for (std::size_t c = 0; c < config.classes; ++c) {
        auto& list = out.planted.emplace_back();
        for (const auto& w : class_words()[c]) list.emplace_back(w.word);
    }
    for (const auto& w : stop_words()) out.stopwords.emplace(w.word);
    for (const auto& [word, synset] : synonym_pairs()) out.lexicon.synsets[word].emplace_back(synset);
    out.annotations.pos_tagset = default_pos_tagset();
    out.annotations.ner_tagset = default_ner_tagset();

    std::vector<double> factors(config.groups);
    for (std::size_t a = 0; a < config.n; ++a) {
        const auto mode = static_cast<std::uint32_t>(a % modes);
        const auto label = static_cast<std::uint32_t>(mode % config.classes);
        out.subclass.push_back(mode);
        e.labels.push_back(label);
        e.split.push_back(a >= modes && rng.uniform() < config.test_fraction ? Split::test : Split::train);

        for (std::size_t g = 0; g < config.groups; ++g) factors[g] = means[mode][g] + rng.normal();
        for (std::size_t j = 0; j < config.d; ++j) {
            const auto g = j * config.groups / config.d;
            e.values.push_back(static_cast<float>(factors[g] + config.column_noise * rng.normal()));
        }

        std::vector<const WordInfo*> picks;
        const auto& own = class_words()[label];
        for (std::size_t i = 0; i < config.planted_per_doc; ++i) picks.push_back(&own[rng.below(own.size())]);
        for (std::size_t i = 0; i < config.filler_per_doc; ++i) {
            picks.push_back(&filler_words()[rng.below(filler_words().size())]);
        }
        const auto stops = 2 + rng.below(3);
        for (std::size_t i = 0; i < stops; ++i) picks.push_back(&stop_words()[rng.below(stop_words().size())]);
        for (std::size_t i = picks.size(); i > 1; --i) std::swap(picks[i - 1], picks[rng.below(i)]);

        Document doc;
        char id[32];
        std::snprintf(id, sizeof id, "d%04zu", a);
        doc.doc_id = id;
        doc.label = label;
        doc.split = e.split.back();
        auto& tokens = out.annotations.by_doc[doc.doc_id];
        for (std::size_t i = 0; i < picks.size(); ++i) {
            std::string surface = picks[i]->word;
            if (i == 0 || std::string_view(picks[i]->pos) == "PROPN") surface = capitalized(surface);
            if (i > 0) doc.text += ' ';
            doc.text += surface;
            tokens.push_back({surface, picks[i]->pos, picks[i]->ner});
        }
        doc.text += '.';
        tokens.push_back({".", "PUNCT", ""});
        out.corpus.documents.push_back(std::move(doc));
    }
    return out;
}

DatasetBundle to_bundle(const SyntheticDataset& data) {
    return validate_bundle(data.embeddings, data.corpus, data.annotations, data.stopwords, data.lexicon);
}

std::filesystem::path write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_embeddings(data.embeddings, dir / "embeddings.pem", EmbeddingFormat::binary);

    std::string corpus;
    for (const auto& doc : data.corpus.documents) {
        corpus += json{{"doc_id", doc.doc_id}, {"text", doc.text}, {"label", doc.label}, {"split", to_string(doc.split)}}
                      .dump() +
                  "\n";
    }
    write_file(dir / "corpus.jsonl", corpus);

    std::string annotations;
    for (const auto& doc : data.corpus.documents) {
        json tokens = json::array();
        for (const auto& t : data.annotations.by_doc.at(doc.doc_id)) {
            tokens.push_back({{"surface", t.surface}, {"pos", t.pos}, {"ner", t.ner.empty() ? json(nullptr) : json(t.ner)}});
        }
        annotations += json{{"doc_id", doc.doc_id}, {"tokens", std::move(tokens)}}.dump() + "\n";
    }
    write_file(dir / "annotations.jsonl", annotations);

    std::string stopwords;
    for (const auto& w : data.stopwords) stopwords += w + "\n";
    write_file(dir / "stopwords.txt", stopwords);

    std::map<std::string, std::vector<std::string>> sorted(data.lexicon.synsets.begin(), data.lexicon.synsets.end());
    std::string lexicon;
    for (const auto& [word, ids] : sorted) {
        lexicon += word + "\t";
        for (std::size_t i = 0; i < ids.size(); ++i) lexicon += (i ? "," : "") + ids[i];
        lexicon += "\n";
    }
    write_file(dir / "lexicon.tsv", lexicon);

    BundleManifest manifest;
    manifest.embeddings = "embeddings.pem";
    manifest.format = EmbeddingFormat::binary;
    manifest.corpus = "corpus.jsonl";
    manifest.annotations = "annotations.jsonl";
    manifest.stopwords = "stopwords.txt";
    manifest.lexicon = "lexicon.tsv";
    const auto path = dir / "bundle.json";
    write_file(path, manifest.to_json());
    return path;
}

}  // namespace peach
