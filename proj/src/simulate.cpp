#include "rfvar/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "rfvar/errors.hpp"
#include "rfvar/random.hpp"

namespace rfvar {

namespace {
constexpr double two_pi = 6.283185307179586476925286766559;

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size();
    if (k == 0) return std::numeric_limits<double>::quiet_NaN();
    return k % 2 == 1 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

double sample_sd(std::span<const double> v) {
    const double k = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= k;
    double ss = 0.0;
    for (double x : v) {
        const double d = x - mean;
        ss += d * d;
    }
    return std::sqrt(ss / (k - 1.0));
}
} // namespace

double Component::eval(double x) const {
    switch (kind) {
        case Kind::zero: return 0.0;
        case Kind::linear: return a * x;
        case Kind::sine: return a * std::sin(two_pi * b * x);
        case Kind::quadratic: return a * x * x;
    }
    return 0.0;
}

double SimulationModel::mean_at(const double* x) const {
    double s = 0.0;
    for (std::size_t j = 0; j < components.size(); ++j) s += components[j].eval(x[j]);
    return s;
}

SimulationModel SimulationModel::zero(std::size_t p, double sigma) {
    SimulationModel m;
    m.components.assign(p, Component{});
    m.sigma = sigma;
    return m;
}

SimulationModel SimulationModel::canonical(double sigma) {
    SimulationModel m;
    m.components = {
        {Component::Kind::sine, 4.0, 1.0},
        {Component::Kind::quadratic, 2.0, 0.0},
        {Component::Kind::linear, 1.0, 0.0},
        {Component::Kind::zero, 0.0, 0.0},
        {Component::Kind::zero, 0.0, 0.0},
    };
    m.sigma = sigma;
    return m;
}

SimulationModel SimulationModel::linear(std::size_t p, double sigma) {
    SimulationModel m;
    m.components.assign(p, Component{Component::Kind::linear, 2.0, 0.0});
    m.sigma = sigma;
    return m;
}

SimulationModel SimulationModel::by_name(const std::string& name, double sigma,
                                         std::size_t p) {
    if (name == "zero") return zero(p == 0 ? 5 : p, sigma);
    if (name == "canonical") return canonical(sigma);
    if (name == "linear") return linear(p == 0 ? 3 : p, sigma);
    throw ConfigError("unknown simulation model: " + name);
}

GeneratedData generate_dataset(const SimulationModel& model, std::size_t n,
                               std::uint64_t seed) {
    if (n < 2) throw ConfigError("simulated dataset needs n >= 2");
    const std::size_t p = model.p();
    if (p < 1) throw ConfigError("simulation model needs p >= 1");
    if (!(model.sigma >= 0.0) || !std::isfinite(model.sigma))
        throw ConfigError("sigma must be finite and >= 0");

    std::mt19937_64 rng(seed);
    std::vector<double> features(n * p);
    std::vector<double> response(n);
    std::vector<double> m_true(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j)
            features[i * p + j] = uniform_unit(rng);
        m_true[i] = model.mean_at(features.data() + i * p);
        response[i] = m_true[i] + model.sigma * standard_normal(rng);
    }
    GeneratedData out;
    out.data = make_dataset(n, p, std::move(features), std::move(response));
    out.m_true = std::move(m_true);
    return out;
}

std::size_t schedule_subsample(SubsampleSchedule schedule, std::size_t n) {
    const double nn = static_cast<double>(n);
    const double raw = schedule == SubsampleSchedule::practical
                           ? std::ceil(0.632 * nn)
                           : std::ceil(std::pow(nn, 0.45));
    return std::min<std::size_t>(n, std::max<std::size_t>(1, static_cast<std::size_t>(raw)));
}

std::string schedule_name(SubsampleSchedule schedule) {
    return schedule == SubsampleSchedule::practical ? "practical" : "theory";
}

void ExperimentPlan::validate() const {
    if (model.p() < 1) throw ConfigError("model needs p >= 1");
    if (!(model.sigma >= 0.0) || !std::isfinite(model.sigma))
        throw ConfigError("sigma must be finite and >= 0");
    if (reps < 2) throw ConfigError("reps must be >= 2");
    if (n_grid.empty()) throw ConfigError("n_grid must not be empty");
    for (std::size_t k = 0; k < n_grid.size(); ++k) {
        if (n_grid[k] < 2) throw ConfigError("every n in n_grid must be >= 2");
        if (k > 0 && n_grid[k] <= n_grid[k - 1])
            throw ConfigError("n_grid must be strictly increasing");
    }
    if (forest.num_trees < 1) throw ConfigError("num_trees must be >= 1");
    if (schedule == SubsampleSchedule::theory) {
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t n : n_grid) {
            const double a_n = static_cast<double>(schedule_subsample(schedule, n));
            const double ratio = a_n * a_n / static_cast<double>(n);
            if (ratio >= prev)
                throw ConfigError("theory schedule needs a_n^2/n decreasing along n_grid");
            prev = ratio;
        }
    }
}

namespace {

RepRecord run_one(const ExperimentPlan& plan, std::size_t cell, std::size_t rep) {
    RepRecord rec;
    rec.n = plan.n_grid[cell];
    rec.rep = rep;
    rec.sigma2_true = plan.model.sigma * plan.model.sigma;

    const std::uint64_t rec_seed = derive_seed(derive_seed(plan.plan_seed, cell), rep);
    ForestConfig cfg = plan.forest;
    cfg.subsample_size = schedule_subsample(plan.schedule, rec.n);
    cfg.max_leaves = plan.forest.max_leaves == 0
                         ? cfg.subsample_size
                         : std::min(plan.forest.max_leaves, cfg.subsample_size);
    cfg.master_seed = derive_seed(rec_seed, 2);
    rec.num_trees = cfg.num_trees;
    rec.subsample_size = cfg.subsample_size;

    BootstrapConfig boot = plan.boot;
    boot.bootstrap_seed = derive_seed(rec_seed, 3);

    try {
        const GeneratedData gen =
            generate_dataset(plan.model, rec.n, derive_seed(rec_seed, 1));
        const Forest forest = build_forest(gen.data, cfg, plan.threads);
        rec.report = estimate_all(forest, gen.data, boot, plan.threads);
    } catch (const std::exception& e) {
        rec.failed = true;
        rec.error = e.what();
    }
    return rec;
}

} // namespace

CellAggregate aggregate_cell(std::span<const RepRecord> cell_records) {
    CellAggregate agg;
    if (cell_records.empty()) return agg;
    agg.n = cell_records.front().n;
    agg.subsample_size = cell_records.front().subsample_size;

    std::vector<double> bias_rf, bias_fast, bias_boot, ratios;
    std::size_t ord1 = 0, ord2 = 0, valid = 0;
    for (const RepRecord& rec : cell_records) {
        if (rec.failed) {
            ++agg.n_failed;
            continue;
        }
        ++valid;
        const VarianceReport& r = rec.report;
        bias_rf.push_back(r.sigma2_rf - rec.sigma2_true);
        bias_fast.push_back(r.sigma2_fast - rec.sigma2_true);
        bias_boot.push_back(r.sigma2_boot_closed - rec.sigma2_true);
        ord1 += r.sigma2_rf >= r.sigma2_fast ? 1 : 0;
        ord2 += r.sigma2_fast >= r.sigma2_boot_closed ? 1 : 0;
        ratios.push_back(r.lower_bound > 0.0
                             ? r.r_infinity / r.lower_bound
                             : std::numeric_limits<double>::infinity());
    }
    auto fill = [](std::span<const double> bias, EstimatorAggregate& out) {
        if (bias.empty()) {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            out = {nan, nan, nan, nan, nan};
            return;
        }
        const double k = static_cast<double>(bias.size());
        double mean = 0.0, mse = 0.0;
        std::vector<double> abs_bias;
        abs_bias.reserve(bias.size());
        for (double b : bias) {
            mean += b;
            mse += b * b;
            abs_bias.push_back(std::abs(b));
        }
        out.mean_bias = mean / k;
        out.mse = mse / k;
        out.median_bias = median_of(std::vector<double>(bias.begin(), bias.end()));
        out.median_abs_bias = median_of(std::move(abs_bias));
        out.sd = bias.size() > 1 ? sample_sd(bias) : 0.0;
    };
    fill(bias_rf, agg.rf);
    fill(bias_fast, agg.fast);
    fill(bias_boot, agg.boot_closed);
    if (valid > 0) {
        agg.freq_rf_ge_fast = static_cast<double>(ord1) / static_cast<double>(valid);
        agg.freq_fast_ge_boot_closed =
            static_cast<double>(ord2) / static_cast<double>(valid);
        agg.median_bound_ratio = median_of(ratios);
        agg.min_bound_ratio = *std::min_element(ratios.begin(), ratios.end());
    }
    return agg;
}

ExperimentResult aggregate_sweep(std::vector<RepRecord> records,
                                 std::span<const std::size_t> n_grid) {
    ExperimentResult result;
    result.records = std::move(records);
    result.cells.reserve(n_grid.size());
    for (std::size_t n : n_grid) {
        std::vector<RepRecord> cell_records;
        for (const RepRecord& rec : result.records)
            if (rec.n == n) cell_records.push_back(rec);
        result.cells.push_back(aggregate_cell(cell_records));
    }

    bool decreasing = !result.cells.empty();
    for (std::size_t k = 1; k < result.cells.size(); ++k) {
        // NaN medians from fully failed cells flunk this comparison too
        if (!(result.cells[k].rf.median_abs_bias <
              result.cells[k - 1].rf.median_abs_bias))
            decreasing = false;
    }
    result.median_abs_bias_rf_decreasing = decreasing;

    bool ord1 = true, ord2 = true;
    for (const RepRecord& rec : result.records) {
        if (rec.failed) {
            ord1 = ord2 = false;
            continue;
        }
        ord1 = ord1 && rec.report.sigma2_rf >= rec.report.sigma2_fast;
        ord2 = ord2 && rec.report.sigma2_fast >= rec.report.sigma2_boot_closed;
    }
    result.ordering_rf_ge_fast_always = ord1;
    result.ordering_fast_ge_boot_always = ord2;
    return result;
}

ExperimentResult run_consistency_sweep(const ExperimentPlan& plan) {
    plan.validate();
    std::vector<RepRecord> records;
    records.reserve(plan.n_grid.size() * plan.reps);
    for (std::size_t cell = 0; cell < plan.n_grid.size(); ++cell)
        for (std::size_t rep = 0; rep < plan.reps; ++rep)
            records.push_back(run_one(plan, cell, rep));
    return aggregate_sweep(std::move(records), plan.n_grid);
}

ExperimentResult run_ordering_study(const ExperimentPlan& plan) {
    // same cells as the consistency sweep; the ordering view lives in the
    // per-cell frequencies and bound ratios plus the dedicated writers
    return run_consistency_sweep(plan);
}

std::vector<MConvergenceRow> run_m_convergence(const SimulationModel& model,
                                               std::size_t n,
                                               std::span<const std::size_t> m_grid,
                                               std::size_t reps,
                                               std::uint64_t seed,
                                               const ForestConfig& forest_template,
                                               unsigned threads) {
    if (reps < 2) throw ConfigError("m-convergence needs reps >= 2 for sd estimates");
    if (m_grid.empty()) throw ConfigError("m_grid must not be empty");
    for (std::size_t k = 1; k < m_grid.size(); ++k)
        if (m_grid[k] <= m_grid[k - 1])
            throw ConfigError("m_grid must be strictly increasing");

    const GeneratedData gen = generate_dataset(model, n, derive_seed(seed, 0));
    std::vector<MConvergenceRow> rows;
    rows.reserve(m_grid.size());
    for (std::size_t mi = 0; mi < m_grid.size(); ++mi) {
        std::vector<double> sigma2(reps), probe(reps);
        for (std::size_t rep = 0; rep < reps; ++rep) {
            ForestConfig cfg = forest_template;
            cfg.num_trees = m_grid[mi];
            cfg.master_seed = derive_seed(derive_seed(seed, mi + 1), rep);
            const Forest forest = build_forest(gen.data, cfg, threads);
            const OOBPredictions oob = oob_predict_all(forest, gen.data);
            if (!oob.covered[0])
                throw InputError("probe row has no OOB tree; increase the tree count");
            probe[rep] = oob.values[0];
            sigma2[rep] = oob_residual_variance(oob_residuals(gen.data, oob));
        }
        rows.push_back({m_grid[mi], sample_sd(sigma2), sample_sd(probe)});
    }
    return rows;
}

} // namespace rfvar
