#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "rfvar/forest.hpp"

namespace rfvar {

// Out-of-bag tree counts per training row. Z_i ~ Bin(M, p_n) where p_n is
// the per-tree probability that row i misses the subsample.
struct OOBCoverage {
    std::vector<std::uint32_t> z_counts;  // length n
    double p_n_theoretical = 0.0;
    std::vector<std::uint32_t> uncovered; // rows with Z == 0, ascending

    std::size_t n_covered() const { return z_counts.size() - uncovered.size(); }
};

OOBCoverage oob_coverage(const Forest& forest, std::size_t n);

// OOB predictions for all rows. values[i] is meaningful only where
// covered[i] != 0.
struct OOBPredictions {
    std::vector<double> values;
    std::vector<std::uint8_t> covered;

    std::size_t n_covered() const;
};

// Mean prediction at X_row over exactly the trees whose subsample excludes
// row. nullopt when no tree leaves the row out.
std::optional<double> oob_predict_traversal(const Forest& forest, const Dataset& data,
                                            std::size_t row);

// All rows at once; entry i equals oob_predict_traversal(i) bit for bit.
OOBPredictions oob_predict_all(const Forest& forest, const Dataset& data);

// OOB predictions with every leaf value recomputed as the mean of
// `substituted_response` over the leaf's in-bag members. This is the direct
// tree-substitution route of the parametric bootstrap; with the original
// response it reproduces oob_predict_all exactly.
OOBPredictions oob_predict_with_responses(const Forest& forest, const Dataset& data,
                                          std::span<const double> substituted_response);

// Sparse row-stochastic matrix W with m_oob(X_i) = sum_j W[i][j] * Y_j for
// covered i. Row i averages, over i's OOB trees, the per-tree leaf
// co-membership weights multiplicity / leaf count.
struct OOBWeightMatrix {
    std::size_t n = 0;
    // rows[i]: (column, weight) pairs, ascending column, weights > 0.
    std::vector<std::vector<std::pair<std::uint32_t, double>>> rows;
    std::vector<std::uint8_t> covered;

    double row_sum(std::size_t i) const;
    // sum_j W[i][j]^2, optionally restricted to a column mask.
    double row_sum_sq(std::size_t i, std::span<const std::uint8_t> column_mask = {}) const;
    // W * v; uncovered rows yield 0.
    std::vector<double> multiply(std::span<const double> v) const;
};

// Assembled row-parallel with per-row accumulation in tree order, so the
// result is bit-identical for any thread count.
OOBWeightMatrix oob_weight_matrix(const Forest& forest, const Dataset& data,
                                  unsigned threads = 1);

} // namespace rfvar
