#include "peach/error.hpp"
#include "peach/tree_induction.hpp"

#include <cmath>
#include <numeric>

namespace peach {

namespace {

std::size_t sum(std::span<const std::size_t> counts) { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

void check_partition(std::span<const std::size_t> parent, const std::vector<std::vector<std::size_t>>& children) {
    std::vector<std::size_t> merged(parent.size(), 0);
    for (const auto& child : children) {
        if (child.size() != parent.size()) throw ValueError("child count vector has the wrong number of classes");
        for (std::size_t c = 0; c < child.size(); ++c) merged[c] += child[c];
    }
    if (!std::equal(merged.begin(), merged.end(), parent.begin())) {
        throw ValueError("child class counts do not partition the parent counts");
    }
}

}  // namespace

double entropy(std::span<const std::size_t> class_counts) {
    const std::size_t total = sum(class_counts);
    if (total == 0) throw ValueError("entropy of an empty set");
    const double n = static_cast<double>(total);
    double h = 0.0;
    for (auto c : class_counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        h -= p * std::log2(p);
    }
    return h;
}

double information_gain(std::span<const std::size_t> parent_counts, const std::vector<std::vector<std::size_t>>& child_counts) {
    check_partition(parent_counts, child_counts);
    const double n = static_cast<double>(sum(parent_counts));
    double conditional = 0.0;
    for (const auto& child : child_counts) {
        const std::size_t size = sum(child);
        if (size == 0) continue;
        conditional += static_cast<double>(size) / n * entropy(child);
    }
    return entropy(parent_counts) - conditional;
}

double split_info(std::size_t parent_total, std::span<const std::size_t> child_totals) {
    if (parent_total == 0) throw ValueError("split info of an empty set");
    if (sum(child_totals) != parent_total) throw ValueError("child totals do not sum to the parent total");
    const double n = static_cast<double>(parent_total);
    double s = 0.0;
    for (auto t : child_totals) {
        if (t == 0) continue;
        const double p = static_cast<double>(t) / n;
        s -= p * std::log2(p);
    }
    return s;
}

double gain_ratio(std::span<const std::size_t> parent_counts, const std::vector<std::vector<std::size_t>>& child_counts) {
    const double ig = information_gain(parent_counts, child_counts);
    std::vector<std::size_t> totals;
    for (const auto& child : child_counts) totals.push_back(sum(child));
    const double si = split_info(sum(parent_counts), totals);
    return si > 0.0 ? ig / si : 0.0;
}

double gini_impurity(std::span<const std::size_t> class_counts) {
    const std::size_t total = sum(class_counts);
    if (total == 0) throw ValueError("Gini impurity of an empty set");
    const double n = static_cast<double>(total);
    double s = 0.0;
    for (auto c : class_counts) {
        const double p = static_cast<double>(c) / n;
        s += p * p;
    }
    return 1.0 - s;
}

double weighted_gini(const std::vector<std::vector<std::size_t>>& child_counts) {
    std::size_t total = 0;
    for (const auto& child : child_counts) total += sum(child);
    if (total == 0) throw ValueError("weighted Gini of an empty split");
    double g = 0.0;
    for (const auto& child : child_counts) {
        const std::size_t size = sum(child);
        if (size == 0) continue;
        g += static_cast<double>(size) / static_cast<double>(total) * gini_impurity(child);
    }
    return g;
}

Criterion criterion_for(Algorithm algorithm) {
    switch (algorithm) {
        case Algorithm::id3: return Criterion::info_gain;
        case Algorithm::c45: return Criterion::gain_ratio;
        case Algorithm::cart: return Criterion::gini;
    }
    return Criterion::gini;
}

std::string to_string(Criterion criterion) {
    switch (criterion) {
        case Criterion::info_gain: return "info_gain";
        case Criterion::gain_ratio: return "gain_ratio";
        case Criterion::gini: return "gini";
    }
    return "?";
}

std::string to_string(Algorithm algorithm) {
    switch (algorithm) {
        case Algorithm::id3: return "id3";
        case Algorithm::c45: return "c4.5";
        case Algorithm::cart: return "cart";
    }
    return "?";
}

Algorithm parse_algorithm(const std::string& text) {
    if (text == "id3" || text == "ID3") return Algorithm::id3;
    if (text == "c4.5" || text == "c45" || text == "C4.5" || text == "C45") return Algorithm::c45;
    if (text == "cart" || text == "CART") return Algorithm::cart;
    throw ConfigError("unknown tree algorithm \"" + text + "\"");
}

}  // namespace peach
