#include "peach/hashing.hpp"
#include "peach/pipeline.hpp"

#include "fixtures.hpp"
#include "process.hpp"

#include <doctest.h>

#include <filesystem>

using namespace peach;
using testsupport::quote;
using testsupport::run;
namespace fs = std::filesystem;

namespace {

const std::string kPeach = PEACH_CLI_PATH;
const std::string kSynth = PEACH_SYNTH_PATH;

std::string cli(const std::string& args) { return quote(kPeach) + " " + args + " 2>/dev/null"; }

struct Workdir {
    testsupport::TempDir tmp{"peach_cli_test"};
    fs::path dir = tmp.path;
    std::string bundle, reduction, model, prototypes;

    Workdir() {
        REQUIRE(run(quote(kSynth) + " --out " + quote(dir.string()) + " --n 120 --seed 3 >/dev/null").code == 0);
        bundle = (dir / "bundle.json").string();
        reduction = (dir / "reduction.json").string();
        model = (dir / "model.json").string();
        prototypes = (dir / "prototypes.json").string();
        REQUIRE(run(cli("reduce --bundle " + bundle + " --method pearson --percentile 0.9 --out " + reduction)).code == 0);
        REQUIRE(run(cli("train --bundle " + bundle + " --reduction " + reduction + " --algorithm cart --max-depth 4 --out " + model)).code == 0);
        REQUIRE(run(cli("summarize --bundle " + bundle + " --reduction " + reduction + " --model " + model +
                          " --k 20 --out " + prototypes)).code == 0);
    }

    std::string artifacts() const {
        return "--bundle " + bundle + " --reduction " + reduction + " --model " + model + " --prototypes " + prototypes;
    }
};

}  // namespace

TEST_CASE("pipeline through the command line") {
    Workdir w;
    const auto ws = Workspace::load({w.bundle, w.reduction, w.model, w.prototypes});

    const auto& doc = ws.bundle.corpus.documents[11];
    const auto local = run(cli("explain " + w.artifacts() + " --doc-id " + doc.doc_id));
    CHECK(local.code == 0);
    CHECK(local.out == ws.explain(doc.doc_id, {}).to_json());

    const auto filtered = run(cli("explain " + w.artifacts() + " --doc-id " + doc.doc_id + " --filter pos:NOUN"));
    CHECK(filtered.out == ws.explain(doc.doc_id, TagFilter::parse("pos:NOUN")).to_json());

    const auto global = run(cli("explain " + w.artifacts() + " --global --topk 4"));
    CHECK(global.code == 0);
    CHECK(global.out == ws.global({}, 4).to_json());

    const auto dot = run(cli("explain " + w.artifacts() + " --global --format dot"));
    CHECK(dot.out.rfind("digraph", 0) == 0);

    const auto csv = (w.dir / "predictions.csv").string();
    CHECK(run(cli("export " + w.artifacts() + " --what predictions --out " + csv)).code == 0);
    const auto text = read_file(csv);
    CHECK(text.rfind("doc_id,split,true_class,predicted_class\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 121);

    const auto exported = (w.dir / "global.json").string();
    CHECK(run(cli("export " + w.artifacts() + " --what global --out " + exported)).code == 0);
    CHECK(read_file(exported) == ws.global({}, {}).to_json());

    // Ad-hoc text needs a feature row or an embedding.
    const auto row = ws.features.values.row(0);
    std::string csv_row;
    for (std::size_t j = 0; j < row.size(); ++j) csv_row += (j ? "," : "") + std::to_string(row[j]);
    CHECK(run(cli("explain " + w.artifacts() + " --text 'goal team' --feature-row " + csv_row)).code == 0);
    CHECK(run(cli("explain " + w.artifacts() + " --text 'goal team'")).code == 1);
}

TEST_CASE("ingest writes a loadable manifest") {
    Workdir w;
    const auto out = (w.dir / "again.json").string();
    const auto r = run(cli("ingest --embeddings " + (w.dir / "embeddings.pem").string() + " --format binary --corpus " +
                             (w.dir / "corpus.jsonl").string() + " --annotations " +
                             (w.dir / "annotations.jsonl").string() + " --stopwords " +
                             (w.dir / "stopwords.txt").string() + " --lexicon " + (w.dir / "lexicon.tsv").string() +
                             " --out " + out));
    CHECK(r.code == 0);
    CHECK(r.out.rfind("bundle n=120", 0) == 0);
    const auto bundle = load_bundle(BundleManifest::load(out));
    CHECK(bundle.embeddings.n == 120);
    CHECK(bundle.lexicon);

    // Misaligned corpus: drop the last record.
    auto corpus = read_file(w.dir / "corpus.jsonl");
    corpus.erase(corpus.rfind('\n', corpus.size() - 2) + 1);
    write_file(w.dir / "short.jsonl", corpus);
    CHECK(run(cli("ingest --embeddings " + (w.dir / "embeddings.pem").string() + " --corpus " +
                    (w.dir / "short.jsonl").string() + " --out " + out)).code == 1);
}

TEST_CASE("same seed gives byte-identical artifacts") {
    Workdir w;
    for (const std::string method : {"kmeans --clusters 6", "cnn --target-dim 4 --pool2 auto --epochs 3"}) {
        const auto a = (w.dir / "ra.json").string();
        const auto b = (w.dir / "rb.json").string();
        REQUIRE(run(cli("reduce --bundle " + w.bundle + " --method " + method + " --seed 9 --out " + a)).code == 0);
        REQUIRE(run(cli("reduce --bundle " + w.bundle + " --method " + method + " --seed 9 --out " + b)).code == 0);
        CHECK(read_file(a) == read_file(b));
        CHECK(read_file(w.dir / "ra.pfm") == read_file(w.dir / "rb.pfm"));
    }
    const auto ma = (w.dir / "ma.json").string();
    const auto mb = (w.dir / "mb.json").string();
    const std::string train = "train --bundle " + w.bundle + " --reduction " + w.reduction + " --forest 5 --seed 4 --out ";
    REQUIRE(run(cli(train + ma)).code == 0);
    REQUIRE(run("PEACH_SEED=4 " + cli(train + mb)).code == 0);
    CHECK(read_file(ma) == read_file(mb));
}

TEST_CASE("exit codes") {
    Workdir w;
    SUBCASE("usage errors exit 2") {
        CHECK(run(cli("")).code == 2);
        CHECK(run(cli("frobnicate")).code == 2);
        CHECK(run(cli("reduce --bundle " + w.bundle)).code == 2);
        CHECK(run(cli("reduce --bundle " + w.bundle + " --method magic --out x")).code == 2);
        CHECK(run(cli("explain " + w.artifacts() + " --doc-id d0001 --global")).code == 2);
        CHECK(run("PEACH_SEED=abc " + cli("train --bundle " + w.bundle + " --reduction " + w.reduction +
                                              " --out " + (w.dir / "m.json").string())).code == 2);
    }
    SUBCASE("engine errors exit 1") {
        CHECK(run(cli("reduce --bundle " + (w.dir / "absent.json").string() + " --out x.json")).code == 1);
        // Kernel 2 stride 2 everywhere cannot end at 31 outputs from 64 inputs.
        CHECK(run(cli("reduce --bundle " + w.bundle + " --method cnn --target-dim 31 --out " +
                        (w.dir / "cnn.json").string())).code == 1);
        CHECK(run(cli("explain " + w.artifacts() + " --doc-id no-such-doc")).code == 1);
        CHECK(run(cli("explain " + w.artifacts() + " --global --filter color:red")).code == 1);
        write_file(w.model, read_file(w.model) + " ");
        CHECK(run(cli("explain " + w.artifacts() + " --global")).code == 1);
    }
    SUBCASE("help exits 0") { CHECK(run(cli("--help") + " >/dev/null").code == 0); }
}

TEST_CASE("config file supplies options") {
    Workdir w;
    const auto config = (w.dir / "train.toml").string();
    const auto out = (w.dir / "cfg-model.json").string();
    write_file(config, "[train]\nbundle = \"" + w.bundle + "\"\nreduction = \"" + w.reduction +
                           "\"\nalgorithm = \"id3\"\nmax-depth = 2\nout = \"" + out + "\"\n");
    const auto r = run(cli("--config " + config + " train"));
    CHECK(r.code == 0);
    const auto model = model_from_json(read_file(out));
    CHECK(std::get<DecisionTree>(model.model).algorithm == Algorithm::id3);
    CHECK(std::get<DecisionTree>(model.model).depth() <= 2);

    write_file(config, "[train]\nbogus = 1\n");
    CHECK(run(cli("--config " + config + " train")).code == 2);
}
