#include "peach/error.hpp"
#include "peach/tree_induction.hpp"

#include "checks.hpp"
#include "generators.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

using namespace peach;
using Counts = std::vector<std::size_t>;

namespace {

Matrix column(std::vector<double> values) {
    const auto n = values.size();
    return Matrix(n, 1, std::move(values));
}

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

void check_structure(const DecisionTree& tree, std::size_t n) {
    std::size_t leaves = 0;
    std::vector<int> seen(n, 0);
    for (const auto& node : tree.nodes) {
        REQUIRE(node.depth <= tree.max_depth);
        REQUIRE(node.leaf_class == majority_class(node.class_counts));
        REQUIRE(std::accumulate(node.class_counts.begin(), node.class_counts.end(), std::size_t{0}) ==
                node.routed_rows.size());
        if (node.is_leaf()) {
            ++leaves;
            for (auto r : node.routed_rows) ++seen[r];
            continue;
        }
        const auto& l = tree.nodes[node.left];
        const auto& r = tree.nodes[node.right];
        REQUIRE(l.depth == node.depth + 1);
        REQUIRE(r.depth == node.depth + 1);
        std::vector<std::size_t> joined;
        std::merge(l.routed_rows.begin(), l.routed_rows.end(), r.routed_rows.begin(), r.routed_rows.end(),
                   std::back_inserter(joined));
        REQUIRE(joined == node.routed_rows);
        REQUIRE(std::set<std::size_t>(joined.begin(), joined.end()).size() == joined.size());
        if (node.split->criterion == Criterion::gini) {
            REQUIRE(node.split->criterion_value <= gini_impurity(node.class_counts) + 1e-12);
        } else {
            REQUIRE(node.split->criterion_value > 0.0);
        }
    }
    REQUIRE(tree.rule_count() == leaves);
    REQUIRE(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
}

}  // namespace

TEST_CASE("entropy, gain and gini closed forms") {
    CHECK(entropy(Counts{5, 5}) == 1.0);
    CHECK(entropy(Counts{10, 0}) == 0.0);
    CHECK(entropy(Counts{1, 1, 1, 1}) == 2.0);
    CHECK_THROWS_AS(entropy(Counts{0, 0}), ValueError);

    CHECK(information_gain(Counts{2, 2}, {{2, 0}, {0, 2}}) == 1.0);
    CHECK(information_gain(Counts{2, 2}, {{1, 1}, {1, 1}}) == 0.0);
    CHECK(information_gain(Counts{3, 1}, {{2, 0}, {1, 1}}) == doctest::Approx(0.311278).epsilon(1e-6));
    CHECK(information_gain(Counts{3, 1}, {{2, 0}, {1, 1}}) ==
          doctest::Approx(oracle::entropy({3, 1}) - 0.5).epsilon(1e-15));
    CHECK_THROWS_AS(information_gain(Counts{2, 2}, {{2, 0}, {0, 1}}), ValueError);

    CHECK(split_info(4, Counts{2, 2}) == 1.0);
    CHECK(split_info(4, Counts{4, 0}) == 0.0);
    CHECK(split_info(4, Counts{3, 1}) == doctest::Approx(0.811278).epsilon(1e-6));
    CHECK_THROWS_AS(split_info(4, Counts{3, 2}), ValueError);

    CHECK(gain_ratio(Counts{2, 2}, {{2, 0}, {0, 2}}) == 1.0);
    CHECK(gain_ratio(Counts{2, 2}, {{2, 2}, {0, 0}}) == 0.0);
    CHECK(gain_ratio(Counts{3, 1}, {{2, 0}, {1, 1}}) == doctest::Approx(0.311278).epsilon(1e-6));

    CHECK(gini_impurity(Counts{7, 0}) == 0.0);
    CHECK(gini_impurity(Counts{5, 5}) == 0.5);
    CHECK(gini_impurity(Counts{1, 1, 1, 1}) == 0.75);
    CHECK_THROWS_AS(gini_impurity(Counts{0}), ValueError);
    CHECK(weighted_gini({{2, 0}, {1, 1}}) == doctest::Approx(0.25));
}

TEST_CASE("best split examples") {
    const auto x = column({1, 2, 8, 9});
    const std::vector<std::uint32_t> y{0, 0, 1, 1};
    const TrainingView view{x, y, 2};
    const auto rows = all_rows(4);
    const std::vector<std::size_t> f0{0};
    for (auto c : {Criterion::info_gain, Criterion::gain_ratio, Criterion::gini}) {
        const auto s = best_split(view, rows, f0, c);
        REQUIRE(s);
        CHECK(s->threshold == 5.0);
        CHECK(s->feature == 0);
    }
    CHECK(best_split(view, rows, f0, Criterion::info_gain)->criterion_value == 1.0);

    const std::vector<std::uint32_t> same{1, 1, 1, 1};
    CHECK_FALSE(best_split(TrainingView{x, same, 2}, rows, f0, Criterion::gini));

    Matrix two(4, 2);
    for (std::size_t r = 0; r < 4; ++r) {
        two(r, 0) = 3.0;
        two(r, 1) = x(r, 0);
    }
    const std::vector<std::size_t> both{0, 1};
    CHECK(best_split(TrainingView{two, y, 2}, rows, both, Criterion::info_gain)->feature == 1);
    CHECK_THROWS_AS(best_split(view, rows, std::vector<std::size_t>{}, Criterion::gini), ValueError);
}

TEST_CASE("candidate thresholds are midpoints and capped") {
    const auto x = column({1, 1, 2, 4});
    const std::vector<std::uint32_t> y{0, 1, 0, 1};
    CHECK(candidate_thresholds(TrainingView{x, y, 2}, all_rows(4), 0) == std::vector<double>{1.5, 3.0});

    std::vector<double> many(500);
    for (std::size_t i = 0; i < many.size(); ++i) many[i] = static_cast<double>(i);
    const auto big = column(many);
    const std::vector<std::uint32_t> labels(500, 0);
    const auto c = candidate_thresholds(TrainingView{big, labels, 1}, all_rows(500), 0);
    CHECK(c.size() == kMaxCandidateThresholds);
    CHECK(std::is_sorted(c.begin(), c.end()));
    for (double t : c) CHECK(t - std::floor(t) == 0.5);
}

TEST_CASE("property: split choice equals brute force at every node") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto failure = checks::tree_matches_oracle(seed);
        REQUIRE_MESSAGE(failure.empty(), failure);
    }
}

TEST_CASE("tree building examples") {
    SUBCASE("pure labels give one leaf") {
        const auto t = build_tree(column({1, 2, 3}), std::vector<std::uint32_t>{2, 2, 2}, 3, {});
        CHECK(t.nodes.size() == 1);
        CHECK(t.rule_count() == 1);
        CHECK(t.root().leaf_class == 2);
    }
    SUBCASE("one separating feature gives a stump") {
        const auto x = column({1, 2, 8, 9});
        const std::vector<std::uint32_t> y{0, 0, 1, 1};
        const auto t = build_tree(x, y, 2, {});
        CHECK(t.depth() == 1);
        CHECK(evaluate(t, x, y).accuracy == 1.0);
    }
    SUBCASE("depth bound with majority leaves on nested data") {
        // 32 alternating runs of two on one feature: at least 31 thresholds, so depth 5 or more.
        Matrix x(64, 1);
        std::vector<std::uint32_t> y(64);
        for (std::size_t r = 0; r < 64; ++r) {
            x(r, 0) = static_cast<double>(r);
            y[r] = static_cast<std::uint32_t>((r / 2) % 2);
        }
        TreeConfig config;
        config.max_depth = 3;
        const auto t = build_tree(x, y, 2, config);
        CHECK(t.depth() <= 3);
        check_structure(t, 64);
        const auto full = build_tree(x, y, 2, {});
        CHECK(full.depth() >= 5);
        CHECK(evaluate(full, x, y).accuracy == 1.0);
    }
    SUBCASE("misaligned labels") {
        CHECK_THROWS_AS(build_tree(column({1, 2}), std::vector<std::uint32_t>{0}, 2, {}), ValueError);
    }
}

TEST_CASE("property: depth bound, routing partition and leaf majority") {
    testsupport::Gen g(99);
    for (int trial = 0; trial < 60; ++trial) {
        const auto n = g.integer(2, 80);
        const auto k = g.integer(2, 4);
        const auto x = g.coin() ? g.normal_matrix(n, g.integer(1, 6)) : g.grid_matrix(n, g.integer(1, 6), 4);
        const auto y = g.labels(n, k);
        TreeConfig config;
        config.algorithm = static_cast<Algorithm>(g.integer(0, 2));
        config.max_depth = g.integer(1, 20);
        config.min_samples_leaf = g.integer(1, 3);
        const auto t = build_tree(x, y, k, config);
        check_structure(t, n);
        for (const auto& node : t.nodes) {
            if (node.is_leaf()) continue;
            REQUIRE(t.nodes[node.left].routed_rows.size() >= config.min_samples_leaf);
            REQUIRE(t.nodes[node.right].routed_rows.size() >= config.min_samples_leaf);
        }
        // Rebuilding yields the same tree.
        const auto again = build_tree(x, y, k, config);
        REQUIRE(model_to_json({again, {}, ""}) == model_to_json({t, {}, ""}));
    }
}

TEST_CASE("prediction routes ties left") {
    const auto x = column({1, 2, 8, 9});
    const auto t = build_tree(x, std::vector<std::uint32_t>{0, 0, 1, 1}, 2, {});
    CHECK(predict(t, std::vector<double>{5.0}).predicted_class == 0);
    CHECK(predict(t, std::vector<double>{5.0000001}).predicted_class == 1);
    CHECK(predict(t, std::vector<double>{5.0}).path == std::vector<std::size_t>{0, 1});
    CHECK_THROWS_AS(predict(t, std::vector<double>{std::nan("")}), ValueError);
    CHECK_THROWS_AS(predict(t, std::vector<double>{1.0, 2.0}), ValueError);

    const auto leaf = build_tree(x, std::vector<std::uint32_t>{1, 1, 1, 1}, 2, {});
    const auto p = predict(leaf, std::vector<double>{3.0});
    CHECK(p.predicted_class == 1);
    CHECK(p.path.size() == 1);
}

TEST_CASE("forest voting and determinism") {
    // Three stumps on one feature with thresholds 1.5, 2.5 and 3.5.
    const auto x = column({1, 2, 3, 4});
    auto stump = [&](std::vector<std::uint32_t> labels) { return build_tree(x, labels, 2, {}); };
    RandomForest forest;
    forest.trees = {stump({0, 1, 1, 1}), stump({0, 0, 1, 1}), stump({0, 0, 0, 1})};
    for (auto& t : forest.trees) t.allowed_features = {0};
    forest.config.tree_count = 3;
    // At 2.2 the trees vote {1, 0, 0}; at 3.2 they vote {1, 1, 0}.
    CHECK(predict(forest, std::vector<double>{2.2}).predicted_class == 0);
    CHECK(predict(forest, std::vector<double>{2.2}).tree_index == 1);
    CHECK(predict(forest, std::vector<double>{3.2}).predicted_class == 1);
    CHECK(predict(forest, std::vector<double>{3.2}).tree_index == 0);

    // Two trees split 1-1: the lower class wins.
    RandomForest tie;
    tie.trees = {stump({0, 1, 1, 1}), stump({0, 0, 0, 1})};
    CHECK(predict(tie, std::vector<double>{2.2}).predicted_class == 0);

    testsupport::Gen g(5);
    const auto data = g.normal_matrix(60, 9);
    const auto y = g.labels(60, 3);
    ForestConfig config;
    config.tree_count = 5;
    config.seed = 42;
    const auto a = build_forest(data, y, 3, config);
    const auto b = build_forest(data, y, 3, config);
    CHECK(model_to_json({a, {}, ""}) == model_to_json({b, {}, ""}));
    for (const auto& t : a.trees) {
        CHECK(t.allowed_features.size() == 3);
        for (const auto& node : t.nodes) {
            if (node.split) {
                CHECK(std::find(t.allowed_features.begin(), t.allowed_features.end(), node.split->feature) !=
                      t.allowed_features.end());
            }
        }
    }

    for (std::size_t count : {1, 5, 10}) {
        config.tree_count = count;
        CHECK(build_forest(data, y, 3, config).trees.size() == count);
    }

    ForestConfig single;
    single.subset_size = 9;
    const auto one = build_forest(data, y, 3, single);
    const auto tree = build_tree(data, y, 3, {});
    for (std::size_t r = 0; r < 60; ++r) CHECK(predict(one, data.row(r)).predicted_class == predict(tree, data.row(r)).predicted_class);

    config.subset_size = 10;
    CHECK_THROWS_AS(build_forest(data, y, 3, config), ConfigError);
}

TEST_CASE("metrics") {
    const std::vector<std::uint32_t> truth{0, 1, 0, 1};
    const auto perfect = compute_metrics(truth, truth, 2);
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.macro_f1 == 1.0);

    const auto zeros = compute_metrics(truth, std::vector<std::uint32_t>{0, 0, 0, 0}, 2);
    CHECK(zeros.accuracy == 0.5);
    CHECK(zeros.per_class_f1[0] == doctest::Approx(2.0 / 3.0));
    CHECK(zeros.per_class_f1[1] == 0.0);
    CHECK(zeros.macro_f1 == doctest::Approx(1.0 / 3.0));

    testsupport::Gen g(12);
    for (int trial = 0; trial < 20; ++trial) {
        const auto n = g.integer(1, 40);
        auto t = g.labels(n, 3);
        auto p = g.labels(n, 3);
        const auto before = compute_metrics(t, p, 3);
        std::vector<std::size_t> order = all_rows(n);
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[g.integer(0, i - 1)]);
        std::vector<std::uint32_t> t2, p2;
        for (auto i : order) {
            t2.push_back(t[i]);
            p2.push_back(p[i]);
        }
        REQUIRE(compute_metrics(t2, p2, 3) == before);
    }
    CHECK_THROWS_AS(compute_metrics({}, {}, 2), ValueError);
}

TEST_CASE("model file round trip") {
    testsupport::Gen g(77);
    const auto x = g.normal_matrix(120, 6);
    const auto y = g.labels(120, 3);
    TreeConfig tc;
    tc.algorithm = Algorithm::c45;
    ForestConfig fc;
    fc.tree_count = 4;
    fc.seed = 3;
    for (const Model& model : {Model(build_tree(x, y, 3, tc)), Model(build_forest(x, y, 3, fc))}) {
        const ModelFile file{model, {"a", "b", "c"}, "abc123"};
        const auto text = model_to_json(file);
        const auto back = model_from_json(text);
        CHECK(model_to_json(back) == text);
        CHECK(back.class_names == file.class_names);
        CHECK(back.reduction_hash == "abc123");
        for (int i = 0; i < 300; ++i) {
            std::vector<double> row(6);
            for (auto& v : row) v = g.normal() * 2;
            const auto p = predict(model, row);
            const auto q = predict(back.model, row);
            REQUIRE(p.predicted_class == q.predicted_class);
            REQUIRE(p.path == q.path);
        }
    }
    CHECK_THROWS_AS(model_from_json("{}"), Error);
    CHECK_THROWS_AS(model_from_json("not json"), Error);
}
