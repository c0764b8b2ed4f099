#include "peach/cnn_reducer.hpp"
#include "peach/feature_reduction.hpp"
#include "peach/prototypes.hpp"
#include "peach/random.hpp"
#include "peach/synthetic.hpp"
#include "peach/tree_induction.hpp"

#include <benchmark/benchmark.h>

#include <numeric>

using namespace peach;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = rng.normal();
    return m;
}

std::vector<std::uint32_t> random_labels(std::size_t n, std::size_t k, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::uint32_t> y(n);
    for (auto& v : y) v = static_cast<std::uint32_t>(rng.below(k));
    return y;
}

// Columns are the 768 embedding dimensions; rows are documents.
void BM_PearsonMatrix(benchmark::State& state) {
    const auto columns = random_matrix(static_cast<std::size_t>(state.range(0)), 768, 1);
    for (auto _ : state) benchmark::DoNotOptimize(pearson_matrix(columns));
}
BENCHMARK(BM_PearsonMatrix)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_KMeans(benchmark::State& state) {
    const auto columns = random_matrix(500, 768, 2);
    KMeansOptions options;
    options.m = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(kmeans_cluster(columns, options));
}
BENCHMARK(BM_KMeans)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_BestSplit(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto x = random_matrix(n, 32, 3);
    const auto y = random_labels(n, 4, 4);
    std::vector<std::size_t> rows(n), features(32);
    std::iota(rows.begin(), rows.end(), 0);
    std::iota(features.begin(), features.end(), 0);
    const TrainingView view{x, y, 4};
    for (auto _ : state) benchmark::DoNotOptimize(best_split(view, rows, features, Criterion::gini));
}
BENCHMARK(BM_BestSplit)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);

void BM_BuildTree(benchmark::State& state) {
    const auto x = random_matrix(5000, 32, 5);
    const auto y = random_labels(5000, 4, 6);
    TreeConfig config;
    config.algorithm = static_cast<Algorithm>(state.range(0));
    config.max_depth = 10;
    for (auto _ : state) benchmark::DoNotOptimize(build_tree(x, y, 4, config));
}
BENCHMARK(BM_BuildTree)
    ->Arg(static_cast<int>(Algorithm::id3))
    ->Arg(static_cast<int>(Algorithm::c45))
    ->Arg(static_cast<int>(Algorithm::cart))
    ->Unit(benchmark::kMillisecond);

void BM_NodeWordcloud(benchmark::State& state) {
    SyntheticConfig config;
    config.n = static_cast<std::size_t>(state.range(0));
    const auto bundle = to_bundle(generate_synthetic(config));
    const auto stats = build_corpus_stats(bundle.corpus, bundle.stopwords);
    std::vector<std::string_view> texts;
    for (const auto& doc : bundle.corpus.documents) texts.emplace_back(doc.text);
    for (auto _ : state) benchmark::DoNotOptimize(node_wordcloud(0, texts, stats, 25));
}
BENCHMARK(BM_NodeWordcloud)->Arg(600)->Arg(5000)->Unit(benchmark::kMillisecond);

void BM_CnnLossGrad(benchmark::State& state) {
    CnnConfig config;
    config.m_target = 48;
    const CnnNetwork net(resolve_cnn_layout(config, 768), 4);
    Rng rng(7);
    const auto params = net.initialize(rng);
    const auto x = random_matrix(32, 768, 8);
    const auto y = random_labels(32, 4, 9);
    std::vector<std::size_t> rows(32);
    std::iota(rows.begin(), rows.end(), 0);
    std::vector<double> grad(net.parameter_count());
    for (auto _ : state) benchmark::DoNotOptimize(net.loss(params, x, y, rows, grad));
}
BENCHMARK(BM_CnnLossGrad)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
