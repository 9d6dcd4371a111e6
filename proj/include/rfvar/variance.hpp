#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rfvar/oob.hpp"

namespace rfvar {

// Parametric bootstrap settings. The noise variance is never free: it is
// always the current OOB residual variance estimate.
struct BootstrapConfig {
    std::size_t B = 0; // replications; 0 = closed-form correction only
    enum class Noise { normal } noise = Noise::normal;
    std::uint64_t bootstrap_seed = 0;
};

// All residual variance estimates for one fitted forest.
struct VarianceReport {
    double sigma2_rf = 0.0;          // OOB residual variance
    double sigma2_fast = 0.0;        // sigma2_rf * (1 - 1/a_n^2)
    double sigma2_boot_mc = 0.0;     // sigma2_rf - r_hat_B   (NaN when B = 0)
    double sigma2_boot_closed = 0.0; // sigma2_rf - r_infinity
    double r_hat_B = 0.0;            // Monte-Carlo correction (NaN when B = 0)
    double r_infinity = 0.0;         // closed-form correction (B -> infinity)
    double lower_bound = 0.0;        // sigma2_rf / a_n^2
    std::size_t n_covered = 0;
    std::size_t B = 0;
    bool ordering_ok = false;        // sigma2_rf >= sigma2_fast >= sigma2_boot_closed
    double clamped_boot = 0.0;       // max(0, sigma2_boot_closed)
    std::vector<std::string> warnings;
};

// OOB residuals Y_i - m_oob(X_i) over covered rows, ascending row order.
// Throws InputError when fewer than 2 rows are covered.
std::vector<std::pair<std::uint32_t, double>> oob_residuals(const Dataset& data,
                                                            const OOBPredictions& oob);

// Mean-centered second moment with divisor n_covered.
double oob_residual_variance(std::span<const std::pair<std::uint32_t, double>> residuals);

// Linear-form bootstrap refit: W * y_star. Equals the direct
// tree-substitution route (oob_predict_with_responses) up to rounding.
std::vector<double> bootstrap_refit(const OOBWeightMatrix& weights,
                                    std::span<const double> y_star);

struct McEstimate {
    double value = 0.0;
    double se = 0.0; // sample sd of per-replicate terms / sqrt(B)
};

// Monte-Carlo correction term: average over B replicates of the mean squared
// OOB perturbation when responses are replaced by boot_targets plus N(0,
// sigma2_rf) noise on covered rows. boot_targets must hold m_oob on covered
// rows (the uncovered fallback is the caller's policy; estimate_all uses the
// observed response there). Replicates may run in parallel; the reduction is
// in replicate order, so results are thread-count independent.
McEstimate r_hat_b_mc(const OOBWeightMatrix& weights,
                      std::span<const double> boot_targets,
                      std::span<const double> m_oob,
                      std::span<const std::uint8_t> covered,
                      double sigma2_rf, const BootstrapConfig& config,
                      unsigned threads = 1);

// Exact B -> infinity expectation of the correction term given the data:
//   (1/n_cov) sum_i [ ((W t)_i - m_oob_i)^2 + sigma2_rf * sum_j W_ij^2 ]
// with the variance sum restricted to covered j (only those receive noise).
double r_infinity(const OOBWeightMatrix& weights,
                  std::span<const double> boot_targets,
                  std::span<const double> m_oob,
                  std::span<const std::uint8_t> covered,
                  double sigma2_rf);

// Full pipeline: coverage, OOB predictions, weight matrix, plain / fast /
// bootstrap-corrected estimates. Throws InputError when fewer than 2 rows
// are covered or more than 20% of rows are uncovered.
VarianceReport estimate_all(const Forest& forest, const Dataset& data,
                            const BootstrapConfig& boot, unsigned threads = 1);

} // namespace rfvar
