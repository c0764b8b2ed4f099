#include "peach/error.hpp"
#include "peach/hashing.hpp"
#include "peach/pipeline.hpp"
#include "peach/synthetic.hpp"
#include "peach/text.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>

using namespace peach;
namespace fs = std::filesystem;

using testsupport::materialize;
using testsupport::TempDir;

TEST_CASE("synthetic generator shape") {
    SyntheticConfig config;
    config.seed = 3;
    const auto data = generate_synthetic(config);
    CHECK(data.embeddings.n == 600);
    CHECK(data.embeddings.d == 64);
    CHECK(data.embeddings.num_classes() == 3);
    CHECK(data.corpus.size() == 600);
    CHECK_NOTHROW(validate_embeddings(data.embeddings));
    const auto bundle = to_bundle(data);
    CHECK(bundle.rows_in(Split::test).size() > 100);
    CHECK(bundle.rows_in(Split::test).size() < 200);

    // Every document carries at least one planted word of its own class.
    for (std::size_t a = 0; a < data.corpus.size(); ++a) {
        const auto& doc = data.corpus.documents[a];
        const auto tokens = tokenize_normalize(doc.text, data.stopwords);
        const auto& planted = data.planted[doc.label];
        CHECK(std::any_of(tokens.begin(), tokens.end(), [&](const TextToken& t) {
            return std::find(planted.begin(), planted.end(), t.word) != planted.end();
        }));
        REQUIRE(data.annotations.find(doc.doc_id));
    }

    const auto again = generate_synthetic(config);
    CHECK(again.embeddings == data.embeddings);
    CHECK(serialize_embeddings_binary(again.embeddings) == serialize_embeddings_binary(data.embeddings));

    config.classes = 4;
    CHECK_THROWS_AS(generate_synthetic(config), ConfigError);
}

TEST_CASE("subclass generator") {
    SyntheticConfig config;
    config.subclasses = 20;
    config.groups = 64;
    config.n = 300;
    const auto data = generate_synthetic(config);
    CHECK(*std::max_element(data.subclass.begin(), data.subclass.end()) == 19);
    const auto train = data.embeddings.rows_in(Split::train);
    for (std::uint32_t s = 0; s < 20; ++s) {
        CHECK(std::any_of(train.begin(), train.end(), [&](std::size_t r) { return data.subclass[r] == s; }));
        CHECK(data.embeddings.labels[s] == s % 3);
    }
}

TEST_CASE("workspace loads consistent artifacts") {
    TempDir dir("peach_pipeline_ws");
    SyntheticConfig synth;
    synth.n = 150;
    synth.seed = 9;
    TrainOptions train;
    train.max_depth = 4;
    const auto paths = materialize(dir.path, synth, train);
    const auto ws = Workspace::load(paths);
    CHECK(ws.reduction_hash == sha256_file(paths.reduction));
    CHECK(ws.model_hash == sha256_file(paths.model));
    CHECK(ws.features.n() == 150);
    CHECK(ws.metrics().count("train"));
    CHECK(ws.metrics().count("test"));
    CHECK(ws.predictions().size() == 150);

    const auto& doc = ws.bundle.corpus.documents[5];
    const auto e = ws.explain(doc.doc_id, {});
    CHECK(e.true_class == std::optional<std::uint32_t>(doc.label));
    CHECK(e.predicted_class == ws.predictions()[5]);
    CHECK_THROWS_AS(ws.explain("nope", {}), MissingResourceError);
    CHECK(ws.global({}, 3).trees.size() == 1);

    SUBCASE("stale reduction is rejected") {
        auto reduction = read_file(paths.reduction);
        write_file(paths.reduction, reduction + " ");
        CHECK_THROWS_AS(Workspace::load(paths), ConfigError);
    }
    SUBCASE("stale prototypes are rejected") {
        write_file(paths.model, read_file(paths.model) + "\n");
        auto p = paths;
        CHECK_THROWS_AS(Workspace::load(p), ConfigError);
    }
    SUBCASE("prototypes are optional") {
        auto p = paths;
        p.prototypes.reset();
        const auto bare = Workspace::load(p);
        CHECK_THROWS_AS(bare.explain(doc.doc_id, {}), MissingResourceError);
        CHECK_THROWS_AS(bare.global({}, {}), MissingResourceError);
    }
}

TEST_CASE("identical seeds give identical artifacts") {
    TempDir a("peach_pipeline_a");
    TempDir b("peach_pipeline_b");
    SyntheticConfig synth;
    synth.n = 120;
    synth.seed = 5;
    TrainOptions train;
    train.forest_size = 3;
    train.seed = 11;
    const auto pa = materialize(a.path, synth, train);
    const auto pb = materialize(b.path, synth, train);
    CHECK(read_file(pa.reduction) == read_file(pb.reduction));
    CHECK(read_file(pa.model) == read_file(pb.model));
    CHECK(read_file(*pa.prototypes) == read_file(*pb.prototypes));
    const auto wa = Workspace::load(pa);
    const auto wb = Workspace::load(pb);
    CHECK(wa.global({}, {}).to_json() == wb.global({}, {}).to_json());
    const auto& id = wa.bundle.corpus.documents[17].doc_id;
    CHECK(wa.explain(id, {}).to_json() == wb.explain(id, {}).to_json());
}

TEST_CASE("train_model uses only training rows") {
    SyntheticConfig synth;
    synth.n = 150;
    const auto p = testsupport::run_pipeline(synth, {}, {});
    const auto& tree = std::get<DecisionTree>(p.model.model);
    CHECK(tree.root().total() == p.bundle.rows_in(Split::train).size());
    const auto split = split_data(p.features, p.bundle.embeddings, Split::test);
    CHECK(split.rows == p.bundle.rows_in(Split::test));
    CHECK(split.features.rows() == split.rows.size());
}
