#pragma once

// Shared test fixtures: random instance generators and independent oracles.
// Oracles re-derive expected values by brute force along their own code
// paths; they never call into the implementation being checked.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "rfvar/dataset.hpp"
#include "rfvar/forest.hpp"
#include "rfvar/random.hpp"

namespace rfvar::test {

// |a - b| <= tol * max(1, |a|, |b|): relative with a unit floor so values
// near zero do not blow the ratio up.
inline bool close_rel(double a, double b, double tol) {
    const double scale = std::max({1.0, std::abs(a), std::abs(b)});
    return std::abs(a - b) <= tol * scale;
}

inline Dataset random_dataset(std::mt19937_64& rng, std::size_t n, std::size_t p) {
    std::vector<double> features(n * p);
    std::vector<double> response(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j)
            features[i * p + j] = uniform_unit(rng);
        response[i] = 3.0 * features[i * p] + standard_normal(rng);
    }
    return make_dataset(n, p, std::move(features), std::move(response));
}

// ---------------------------------------------------------------------------
// best-cut oracle: exhaustive enumeration of every midpoint candidate with
// fresh per-candidate sums
// ---------------------------------------------------------------------------

struct OracleCut {
    std::size_t feature;
    double threshold;
    double criterion;
};

inline std::optional<OracleCut> oracle_best_cut(const Dataset& data,
                                                const std::vector<std::uint32_t>& cell,
                                                std::vector<std::size_t> features,
                                                std::size_t min_leaf) {
    bool constant = true;
    for (std::uint32_t row : cell)
        if (data.y(row) != data.y(cell.front())) constant = false;
    if (constant) return std::nullopt;
    if (cell.size() < 2 * min_leaf) return std::nullopt;

    std::sort(features.begin(), features.end());
    features.erase(std::unique(features.begin(), features.end()), features.end());

    std::optional<OracleCut> best;
    const std::size_t m = cell.size();
    for (std::size_t f : features) {
        std::vector<std::uint32_t> order(cell);
        std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
            if (data.x(a, f) != data.x(b, f)) return data.x(a, f) < data.x(b, f);
            return a < b;
        });
        double sum_total = 0.0;
        for (std::uint32_t row : order) sum_total += data.y(row);
        for (std::size_t k = 1; k < m; ++k) {
            const double lo = data.x(order[k - 1], f);
            const double hi = data.x(order[k], f);
            if (lo == hi) continue;
            if (k < min_leaf || m - k < min_leaf) continue;
            double sum_left = 0.0;
            for (std::size_t t = 0; t < k; ++t) sum_left += data.y(order[t]);
            const double sum_right = sum_total - sum_left;
            double crit = (sum_left * sum_left / static_cast<double>(k) +
                           sum_right * sum_right / static_cast<double>(m - k) -
                           sum_total * sum_total / static_cast<double>(m)) /
                          static_cast<double>(m);
            if (crit < 0.0) crit = 0.0;
            if (!best || crit > best->criterion)
                best = OracleCut{f, (lo + hi) * 0.5, crit};
        }
    }
    return best;
}

// Definitional two-pass criterion (within-cell SSE minus post-split SSE,
// both over N). A second algebraic route used to cross-check values to
// tolerance rather than bit-exactly.
inline std::optional<double> oracle_cut_value_definitional(
    const Dataset& data, const std::vector<std::uint32_t>& cell, std::size_t feature,
    double threshold, std::size_t min_leaf) {
    std::vector<std::uint32_t> left, right;
    for (std::uint32_t row : cell)
        (data.x(row, feature) < threshold ? left : right).push_back(row);
    if (left.size() < min_leaf || right.size() < min_leaf) return std::nullopt;
    auto mean_of = [&](const std::vector<std::uint32_t>& rows) {
        double s = 0.0;
        for (std::uint32_t r : rows) s += data.y(r);
        return s / static_cast<double>(rows.size());
    };
    const double parent_mean = mean_of(cell);
    const double left_mean = mean_of(left);
    const double right_mean = mean_of(right);
    double sse_parent = 0.0, sse_children = 0.0;
    for (std::uint32_t r : cell) {
        const double d = data.y(r) - parent_mean;
        sse_parent += d * d;
    }
    for (std::uint32_t r : left) {
        const double d = data.y(r) - left_mean;
        sse_children += d * d;
    }
    for (std::uint32_t r : right) {
        const double d = data.y(r) - right_mean;
        sse_children += d * d;
    }
    const double n = static_cast<double>(cell.size());
    return sse_parent / n - sse_children / n;
}

// ---------------------------------------------------------------------------
// forest-side oracles
// ---------------------------------------------------------------------------

// Independent routing walker.
inline std::size_t oracle_route_leaf(const Tree& tree, const double* x) {
    std::size_t idx = 0;
    for (;;) {
        const TreeNode& node = tree.nodes[idx];
        if (node.feature < 0) return idx;
        idx = static_cast<std::size_t>(
            x[node.feature] < node.threshold ? node.left : node.right);
    }
}

// Plain (all-trees) prediction through the in-bag weight decomposition:
// sum_j w_j y_j with w_j = (1/M) sum_t multiplicity / leaf count.
inline double oracle_predict_weight_form(const Forest& forest, const Dataset& data,
                                         const double* x) {
    std::vector<double> w(data.n_rows, 0.0);
    const double m = static_cast<double>(forest.trees.size());
    for (const Tree& tree : forest.trees) {
        const TreeNode& leaf = tree.nodes[oracle_route_leaf(tree, x)];
        for (std::uint32_t j : leaf.members)
            w[j] += 1.0 / (m * static_cast<double>(leaf.count));
    }
    double pred = 0.0;
    for (std::size_t j = 0; j < data.n_rows; ++j) pred += w[j] * data.y(j);
    return pred;
}

// Leaf partition of arbitrary rows as sorted row lists keyed by leaf, for
// partition-invariance comparisons.
inline std::vector<std::vector<std::uint32_t>> leaf_partition(
    const Tree& tree, const Dataset& data, const std::vector<std::uint32_t>& rows) {
    std::vector<std::vector<std::uint32_t>> buckets(tree.nodes.size());
    for (std::uint32_t row : rows)
        buckets[oracle_route_leaf(tree, data.row(row))].push_back(row);
    std::vector<std::vector<std::uint32_t>> out;
    for (auto& b : buckets)
        if (!b.empty()) out.push_back(std::move(b));
    return out;
}

} // namespace rfvar::test
