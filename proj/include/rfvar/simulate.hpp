#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rfvar/forest.hpp"
#include "rfvar/variance.hpp"

namespace rfvar {

// One additive component m_j(x_j).
struct Component {
    enum class Kind { zero, linear, sine, quadratic } kind = Kind::zero;
    double a = 0.0; // slope / amplitude / coefficient
    double b = 0.0; // sine frequency (cycles on [0,1])

    double eval(double x) const;
};

// Additive ground truth m(x) = sum_j m_j(x_j) with X ~ Uniform[0,1]^p and
// centered Gaussian noise of known variance sigma^2.
struct SimulationModel {
    std::vector<Component> components;
    double sigma = 1.0;

    std::size_t p() const { return components.size(); }
    double mean_at(const double* x) const;

    static SimulationModel zero(std::size_t p = 5, double sigma = 1.0);
    // p = 5: 4 sin(2 pi x1) + 2 x2^2 + x3, two pure-noise features.
    static SimulationModel canonical(double sigma = 1.0);
    static SimulationModel linear(std::size_t p = 3, double sigma = 1.0);
    // Throws ConfigError for unknown names; accepts zero|canonical|linear.
    static SimulationModel by_name(const std::string& name, double sigma,
                                   std::size_t p);
};

struct GeneratedData {
    Dataset data;
    std::vector<double> m_true; // m(X_i), retained for diagnostics
};

// X row-major uniform, then eps_i ~ N(0, sigma^2), row by row; deterministic
// per seed.
GeneratedData generate_dataset(const SimulationModel& model, std::size_t n,
                               std::uint64_t seed);

enum class SubsampleSchedule {
    practical, // a_n = ceil(0.632 n)
    theory     // a_n = ceil(n^0.45), so a_n^2 / n -> 0
};

std::size_t schedule_subsample(SubsampleSchedule schedule, std::size_t n);
std::string schedule_name(SubsampleSchedule schedule);

// Sweep description. The forest template supplies num_trees, mtry,
// min_leaf_size and resampling; subsample_size and max_leaves come from the
// schedule at each n.
struct ExperimentPlan {
    SimulationModel model;
    std::string model_name = "canonical";
    std::vector<std::size_t> n_grid;
    std::size_t reps = 2;
    ForestConfig forest;
    SubsampleSchedule schedule = SubsampleSchedule::practical;
    BootstrapConfig boot;
    std::uint64_t plan_seed = 0;
    unsigned threads = 1;

    // Throws ConfigError: reps >= 2, n_grid nonempty strictly increasing,
    // theory schedule must have a_n^2/n decreasing along the grid.
    void validate() const;
};

// One (cell, rep) outcome. Reproducible from (plan_seed, cell, rep) alone.
struct RepRecord {
    std::size_t n = 0;
    std::size_t num_trees = 0;
    std::size_t subsample_size = 0;
    std::size_t rep = 0;
    double sigma2_true = 0.0;
    VarianceReport report;
    bool failed = false;
    std::string error;
};

struct EstimatorAggregate {
    double mean_bias = 0.0;
    double median_bias = 0.0;
    double mse = 0.0;
    double sd = 0.0;
    double median_abs_bias = 0.0;
};

struct CellAggregate {
    std::size_t n = 0;
    std::size_t subsample_size = 0;
    std::size_t n_failed = 0;
    EstimatorAggregate rf, fast, boot_closed;
    double freq_rf_ge_fast = 0.0;
    double freq_fast_ge_boot_closed = 0.0;
    double median_bound_ratio = 0.0; // r_infinity / (sigma2_rf / a_n^2)
    double min_bound_ratio = 0.0;
};

struct ExperimentResult {
    std::vector<RepRecord> records;
    std::vector<CellAggregate> cells; // one per n, grid order
    bool median_abs_bias_rf_decreasing = false;
    bool ordering_rf_ge_fast_always = false;
    bool ordering_fast_ge_boot_always = false;
};

// Aggregates recomputable from the records; tested that way.
CellAggregate aggregate_cell(std::span<const RepRecord> cell_records);
ExperimentResult aggregate_sweep(std::vector<RepRecord> records,
                                 std::span<const std::size_t> n_grid);

// reps independent (dataset, forest) draws per grid point, all estimators
// recorded against the known sigma^2. Per-cell estimation failures are
// recorded, not thrown.
ExperimentResult run_consistency_sweep(const ExperimentPlan& plan);

// Same cells, aggregated for the ordering / lower-bound study.
ExperimentResult run_ordering_study(const ExperimentPlan& plan);

// Monte-Carlo spread of sigma2_rf and of a probe OOB prediction (row 0 of a
// fixed dataset) across independent forests, per tree count.
struct MConvergenceRow {
    std::size_t num_trees = 0;
    double sd_sigma2_rf = 0.0;
    double sd_probe_oob = 0.0;
};

std::vector<MConvergenceRow> run_m_convergence(const SimulationModel& model,
                                               std::size_t n,
                                               std::span<const std::size_t> m_grid,
                                               std::size_t reps,
                                               std::uint64_t seed,
                                               const ForestConfig& forest_template,
                                               unsigned threads = 1);

} // namespace rfvar
