#include "peach/error.hpp"
#include "peach/hashing.hpp"
#include "peach/ingestion.hpp"

#include "generators.hpp"

#include <doctest.h>

#include <cstring>
#include <filesystem>

using namespace peach;

namespace {

void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }
void put_f32(std::string& out, float v) { out.append(reinterpret_cast<const char*>(&v), 4); }

// Hand-assembled file: n=2, d=3, k=2.
std::string tiny_binary() {
    std::string out = "PEM1";
    put_u32(out, 2);
    put_u32(out, 3);
    put_u32(out, 2);
    for (float v : {0.5f, -1.0f, 2.25f, 3.0f, 0.0f, -0.125f}) put_f32(out, v);
    put_u32(out, 0);
    put_u32(out, 1);
    out.push_back(0);
    out.push_back(0);
    put_u32(out, 3);
    out += "neg";
    put_u32(out, 3);
    out += "pos";
    return out;
}

EmbeddingMatrix random_matrix(testsupport::Gen& g, std::size_t n, std::size_t d, std::size_t k) {
    EmbeddingMatrix m;
    m.n = n;
    m.d = d;
    for (std::size_t c = 0; c < k; ++c) m.class_names.push_back("class " + std::to_string(c));
    for (std::size_t a = 0; a < n; ++a) {
        m.labels.push_back(static_cast<std::uint32_t>(a % k));
        m.split.push_back(a < k || g.coin(0.7) ? Split::train : Split::test);
        for (std::size_t j = 0; j < d; ++j) m.values.push_back(static_cast<float>(g.normal() * 100.0));
    }
    return m;
}

Corpus corpus_for(const EmbeddingMatrix& m) {
    Corpus c;
    for (std::size_t a = 0; a < m.n; ++a) c.documents.push_back({"d" + std::to_string(a), "text", m.labels[a], m.split[a]});
    return c;
}

}  // namespace

TEST_CASE("minimal binary file loads") {
    const auto m = parse_embeddings_binary(tiny_binary());
    CHECK(m.n == 2);
    CHECK(m.d == 3);
    CHECK(m.values == std::vector<float>{0.5f, -1.0f, 2.25f, 3.0f, 0.0f, -0.125f});
    CHECK(m.labels == std::vector<std::uint32_t>{0, 1});
    CHECK(m.class_names == std::vector<std::string>{"neg", "pos"});
    CHECK(serialize_embeddings_binary(m) == tiny_binary());
}

TEST_CASE("binary format errors") {
    auto bytes = tiny_binary();
    SUBCASE("bad magic") {
        bytes[0] = 'X';
        CHECK_THROWS_AS(parse_embeddings_binary(bytes), FormatError);
    }
    SUBCASE("truncated") { CHECK_THROWS_AS(parse_embeddings_binary(bytes.substr(0, bytes.size() - 2)), FormatError); }
    SUBCASE("truncated header") { CHECK_THROWS_AS(parse_embeddings_binary(bytes.substr(0, 9)), FormatError); }
    SUBCASE("trailing bytes") { CHECK_THROWS_AS(parse_embeddings_binary(bytes + "x"), FormatError); }
    SUBCASE("absurd n") {
        const std::uint32_t huge = 0xFFFFFFFFu;
        std::memcpy(bytes.data() + 4, &huge, 4);
        CHECK_THROWS_AS(parse_embeddings_binary(bytes), FormatError);
    }
    SUBCASE("label out of range") {
        const std::uint32_t bad = 5;
        std::memcpy(bytes.data() + 16 + 24 + 4, &bad, 4);
        CHECK_THROWS_AS(parse_embeddings_binary(bytes), SchemaError);
    }
    SUBCASE("NaN carries its location") {
        const float nan = std::numeric_limits<float>::quiet_NaN();
        std::memcpy(bytes.data() + 16 + 4 * 4, &nan, 4);  // row 1, column 1
        try {
            parse_embeddings_binary(bytes);
            FAIL("expected ValueError");
        } catch (const ValueError& e) {
            CHECK(e.has_location());
            CHECK(e.row() == 1);
            CHECK(e.column() == 1);
        }
    }
}

TEST_CASE("d = 768 needs no special casing") {
    testsupport::Gen g(1);
    const auto m = random_matrix(g, 4, 768, 2);
    const auto back = parse_embeddings_binary(serialize_embeddings_binary(m));
    CHECK(back.d == 768);
    CHECK(back == m);
}

TEST_CASE("csv nan cell is a located ValueError") {
    const std::string csv = "doc_index,label,split,f0,f1\n0,0,train,1.0,2.0\n1,0,train,nan,3\n";
    try {
        parse_embeddings_csv(csv);
        FAIL("expected ValueError");
    } catch (const ValueError& e) {
        CHECK(e.row() == 1);
        CHECK(e.column() == 0);
    }
}

TEST_CASE("csv defaults class names and accepts numeric split flags") {
    const auto m = parse_embeddings_csv("doc_index,label,split,f0\n0,1,0,1.5\n1,0,1,2\n2,0,train,3\n");
    CHECK(m.class_names == std::vector<std::string>{"0", "1"});
    CHECK(m.split == std::vector<Split>{Split::train, Split::test, Split::train});
    CHECK_THROWS_AS(parse_embeddings_csv("doc_index,label,f0\n"), FormatError);
    CHECK_THROWS_AS(parse_embeddings_csv("doc_index,label,split,f0\n0,0,train,1,2\n"), FormatError);
    CHECK_THROWS_AS(parse_embeddings_csv("doc_index,label,split,f0\n0,0,maybe,1\n"), FormatError);
}

TEST_CASE("property: binary and csv loaders agree bit for bit") {
    testsupport::Gen g(11);
    for (int trial = 0; trial < 25; ++trial) {
        const auto m = random_matrix(g, g.integer(4, 20), g.integer(1, 12), g.integer(1, 4));
        const auto from_bin = parse_embeddings_binary(serialize_embeddings_binary(m));
        const auto from_csv = parse_embeddings_csv(serialize_embeddings_csv(m));
        REQUIRE(from_bin == m);
        REQUIRE(from_csv == m);
        REQUIRE(std::memcmp(from_bin.values.data(), from_csv.values.data(), m.values.size() * 4) == 0);
        REQUIRE(serialize_embeddings_binary(from_bin) == serialize_embeddings_binary(m));
    }
}

TEST_CASE("class missing from train split is rejected") {
    const auto csv = "doc_index,label,split,f0\n0,0,train,1\n1,1,test,2\n";
    CHECK_THROWS_AS(parse_embeddings_csv(csv), SchemaError);
}

TEST_CASE("corpus loading") {
    SUBCASE("file order preserved") {
        const auto c = parse_corpus(R"({"doc_id":"b","text":"x","label":0,"split":"train"})"
                                    "\n"
                                    R"({"doc_id":"a","text":"y","label":1,"split":"test"})"
                                    "\n");
        REQUIRE(c.size() == 2);
        CHECK(c.documents[0].doc_id == "b");
        CHECK(c.documents[1].doc_id == "a");
        CHECK(c.documents[1].split == Split::test);
    }
    SUBCASE("duplicate doc_id") {
        CHECK_THROWS_AS(parse_corpus(R"({"doc_id":"d1","text":"x","label":0,"split":"train"})"
                                     "\n"
                                     R"({"doc_id":"d1","text":"y","label":0,"split":"train"})"),
                        SchemaError);
    }
    SUBCASE("missing label names the line") {
        try {
            parse_corpus(R"({"doc_id":"d1","text":"x","label":0,"split":"train"})"
                         "\n"
                         R"({"doc_id":"d2","text":"x","split":"train"})");
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }
    SUBCASE("malformed json") { CHECK_THROWS_AS(parse_corpus("{nope"), Error); }
}

TEST_CASE("bundle alignment") {
    testsupport::Gen g(5);
    auto m = random_matrix(g, 5, 3, 2);
    auto c = corpus_for(m);
    SUBCASE("aligned") {
        const auto b = validate_bundle(m, c);
        CHECK(b.find_row("d3") == std::optional<std::size_t>(3));
        CHECK_FALSE(b.find_row("nope"));
    }
    SUBCASE("count mismatch") {
        c.documents.pop_back();
        CHECK_THROWS_AS(validate_bundle(m, c), AlignmentError);
    }
    SUBCASE("label disagreement at row 3") {
        c.documents[3].label = 1 - c.documents[3].label;
        try {
            validate_bundle(m, c);
            FAIL("expected AlignmentError");
        } catch (const AlignmentError& e) {
            CHECK(e.has_row());
            CHECK(e.row() == 3);
        }
    }
    SUBCASE("annotations for unknown document") {
        AnnotationSet a;
        a.by_doc["ghost"] = {};
        CHECK_THROWS_AS(validate_bundle(m, c, a), SchemaError);
    }
}

TEST_CASE("annotations, stopwords and lexicon") {
    const auto a = parse_annotations(
        R"({"doc_id":"d1","tokens":[{"surface":"Acme","pos":"PROPN","ner":"ORG"},{"surface":"good","pos":"ADJ","ner":null}]})",
        default_pos_tagset(), default_ner_tagset());
    REQUIRE(a.find("d1"));
    CHECK(a.find("d1")->at(0).ner == "ORG");
    CHECK(a.find("d1")->at(1).ner.empty());
    CHECK(a.find("d2") == nullptr);
    CHECK_THROWS_AS(parse_annotations(R"({"doc_id":"d1","tokens":[{"surface":"x","pos":"BOGUS"}]})",
                                      default_pos_tagset(), default_ner_tagset()),
                    SchemaError);

    CHECK(parse_stopwords("the\n\nA\nof\n") == StopwordSet{"a", "of", "the"});

    const auto lex = parse_lexicon("film\ts1\nMovie\ts1,s2\nfun\ts3\n");
    CHECK(lex.share_synset("film", "movie"));
    CHECK_FALSE(lex.share_synset("film", "fun"));
    CHECK_FALSE(lex.share_synset("film", "unknown"));
    REQUIRE(lex.find("movie"));
    CHECK(*lex.find("movie") == std::vector<std::string>{"s1", "s2"});
    CHECK_THROWS_AS(parse_lexicon("word\t\n"), SchemaError);
    CHECK_THROWS_AS(parse_lexicon("no tab here\n"), FormatError);
}

TEST_CASE("tagset manifest restricts tags") {
    const auto dir = std::filesystem::temp_directory_path() / "peach_tagset_test";
    std::filesystem::create_directories(dir);
    write_file(dir / "tags.tsv", "pos\tADJ\npos\tNOUN\nner\tORG\n");
    const auto [pos, ner] = load_tagset_manifest(dir / "tags.tsv");
    CHECK(pos == std::set<std::string>{"ADJ", "NOUN"});
    CHECK(ner == std::set<std::string>{"ORG"});
    std::filesystem::remove_all(dir);
}

TEST_CASE("manifest round trip resolves relative paths") {
    const auto dir = std::filesystem::temp_directory_path() / "peach_manifest_test";
    std::filesystem::create_directories(dir);
    testsupport::Gen g(2);
    const auto m = random_matrix(g, 4, 2, 2);
    write_embeddings(m, dir / "e.csv", EmbeddingFormat::csv);
    std::string corpus;
    for (std::size_t a = 0; a < m.n; ++a) {
        corpus += R"({"doc_id":"d)" + std::to_string(a) + R"(","text":"t","label":)" + std::to_string(m.labels[a]) +
                  R"(,"split":")" + to_string(m.split[a]) + "\"}\n";
    }
    write_file(dir / "c.jsonl", corpus);
    write_file(dir / "b.json", R"({"embeddings":"e.csv","format":"csv","corpus":"c.jsonl"})");
    const auto manifest = BundleManifest::load(dir / "b.json");
    const auto bundle = load_bundle(manifest);
    CHECK(bundle.embeddings == m);
    CHECK_FALSE(bundle.annotations);
    CHECK_THROWS_AS(BundleManifest::from_json(R"({"embeddings":"e","corpus":"c","extra":1})", dir), ConfigError);
    std::filesystem::remove_all(dir);
}
