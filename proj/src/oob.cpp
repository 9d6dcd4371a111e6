#include "rfvar/oob.hpp"

#include <algorithm>
#include <cmath>

#include "rfvar/errors.hpp"
#include "rfvar/parallel.hpp"

namespace rfvar {

OOBCoverage oob_coverage(const Forest& forest, std::size_t n) {
    if (forest.trees.empty()) throw InputError("forest has no trees");
    const std::size_t num_trees = forest.trees.size();
    std::vector<std::uint32_t> inbag_trees(n, 0);
    std::vector<std::uint8_t> flag(n);
    for (const Tree& tree : forest.trees) {
        std::fill(flag.begin(), flag.end(), 0);
        for (std::uint32_t row : tree.inbag)
            if (row < n) flag[row] = 1;
        for (std::size_t i = 0; i < n; ++i) inbag_trees[i] += flag[i];
    }

    OOBCoverage cov;
    cov.z_counts.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        cov.z_counts[i] = static_cast<std::uint32_t>(num_trees) - inbag_trees[i];
        if (cov.z_counts[i] == 0) cov.uncovered.push_back(static_cast<std::uint32_t>(i));
    }

    const double nn = static_cast<double>(n);
    const double a_n = static_cast<double>(forest.config.subsample_size);
    cov.p_n_theoretical = forest.config.resampling == Resampling::without_replacement
                              ? 1.0 - a_n / nn
                              : std::pow(1.0 - 1.0 / nn, a_n);
    return cov;
}

std::size_t OOBPredictions::n_covered() const {
    std::size_t k = 0;
    for (std::uint8_t c : covered) k += c ? 1 : 0;
    return k;
}

std::optional<double> oob_predict_traversal(const Forest& forest, const Dataset& data,
                                            std::size_t row) {
    if (row >= data.n_rows) throw std::invalid_argument("row index out of range");
    double sum = 0.0;
    std::size_t z = 0;
    const double* x = data.row(row);
    for (const Tree& tree : forest.trees) {
        if (tree.in_bag(static_cast<std::uint32_t>(row))) continue;
        sum += tree.predict(x);
        ++z;
    }
    if (z == 0) return std::nullopt;
    return sum / static_cast<double>(z);
}

OOBPredictions oob_predict_all(const Forest& forest, const Dataset& data) {
    const std::size_t n = data.n_rows;
    std::vector<double> acc(n, 0.0);
    std::vector<std::uint32_t> cnt(n, 0);
    std::vector<std::uint8_t> flag(n);
    for (const Tree& tree : forest.trees) {
        std::fill(flag.begin(), flag.end(), 0);
        for (std::uint32_t row : tree.inbag)
            if (row < n) flag[row] = 1;
        for (std::size_t i = 0; i < n; ++i) {
            if (flag[i]) continue;
            acc[i] += tree.predict(data.row(i));
            ++cnt[i];
        }
    }
    OOBPredictions out;
    out.values.assign(n, 0.0);
    out.covered.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (cnt[i] == 0) continue;
        out.values[i] = acc[i] / static_cast<double>(cnt[i]);
        out.covered[i] = 1;
    }
    return out;
}

namespace {

// Leaf mean recomputed from a replacement response, same accumulation order
// as the build-time leaf value.
double substituted_leaf_value(const TreeNode& leaf, std::span<const double> ys) {
    double sum = 0.0;
    for (std::uint32_t row : leaf.members) sum += ys[row];
    return sum / static_cast<double>(leaf.count);
}

} // namespace

OOBPredictions oob_predict_with_responses(const Forest& forest, const Dataset& data,
                                          std::span<const double> substituted_response) {
    if (substituted_response.size() != data.n_rows)
        throw std::invalid_argument("substituted response length must equal n");
    const std::size_t n = data.n_rows;
    std::vector<double> acc(n, 0.0);
    std::vector<std::uint32_t> cnt(n, 0);
    std::vector<std::uint8_t> flag(n);
    for (const Tree& tree : forest.trees) {
        std::fill(flag.begin(), flag.end(), 0);
        for (std::uint32_t row : tree.inbag)
            if (row < n) flag[row] = 1;
        for (std::size_t i = 0; i < n; ++i) {
            if (flag[i]) continue;
            const TreeNode& leaf = tree.nodes[tree.leaf_index(data.row(i))];
            acc[i] += substituted_leaf_value(leaf, substituted_response);
            ++cnt[i];
        }
    }
    OOBPredictions out;
    out.values.assign(n, 0.0);
    out.covered.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (cnt[i] == 0) continue;
        out.values[i] = acc[i] / static_cast<double>(cnt[i]);
        out.covered[i] = 1;
    }
    return out;
}

double OOBWeightMatrix::row_sum(std::size_t i) const {
    double s = 0.0;
    for (const auto& [j, w] : rows[i]) s += w;
    return s;
}

double OOBWeightMatrix::row_sum_sq(std::size_t i,
                                   std::span<const std::uint8_t> column_mask) const {
    double s = 0.0;
    for (const auto& [j, w] : rows[i]) {
        if (!column_mask.empty() && !column_mask[j]) continue;
        s += w * w;
    }
    return s;
}

std::vector<double> OOBWeightMatrix::multiply(std::span<const double> v) const {
    if (v.size() != n) throw std::invalid_argument("vector length must equal n");
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (const auto& [j, w] : rows[i]) s += w * v[j];
        out[i] = s;
    }
    return out;
}

OOBWeightMatrix oob_weight_matrix(const Forest& forest, const Dataset& data,
                                  unsigned threads) {
    const std::size_t n = data.n_rows;
    OOBWeightMatrix mat;
    mat.n = n;
    mat.rows.resize(n);
    mat.covered.assign(n, 0);

    // Row-parallel: each row accumulates its OOB trees in tree order into a
    // dense per-worker scratch, so values do not depend on the thread count.
    const unsigned workers = resolve_threads(threads);
    parallel_for(workers, workers, [&](std::size_t w) {
        std::vector<double> acc(n, 0.0);
        std::vector<std::uint32_t> touched;
        for (std::size_t i = w; i < n; i += workers) {
            touched.clear();
            std::uint32_t z = 0;
            const double* x = data.row(i);
            for (const Tree& tree : forest.trees) {
                if (tree.in_bag(static_cast<std::uint32_t>(i))) continue;
                ++z;
                const TreeNode& leaf = tree.nodes[tree.leaf_index(x)];
                const double unit = 1.0 / static_cast<double>(leaf.count);
                for (std::uint32_t j : leaf.members) {
                    if (acc[j] == 0.0) touched.push_back(j);
                    acc[j] += unit;
                }
            }
            if (z == 0) continue;
            mat.covered[i] = 1;
            std::sort(touched.begin(), touched.end());
            auto& row = mat.rows[i];
            row.reserve(touched.size());
            const double dz = static_cast<double>(z);
            for (std::uint32_t j : touched) {
                row.emplace_back(j, acc[j] / dz);
                acc[j] = 0.0;
            }
        }
    });
    return mat;
}

} // namespace rfvar
