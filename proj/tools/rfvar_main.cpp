#include <cmath>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rfvar/errors.hpp"
#include "rfvar/io.hpp"
#include "rfvar/simulate.hpp"

namespace {

struct ForestFlags {
    std::size_t trees = 500;
    std::size_t mtry = 0;
    std::size_t subsample_size = 0;
    double subsample_frac = 0.0;
    std::size_t max_leaves = 0;
    std::size_t min_leaf = 1;
    bool with_replacement = false;
    std::uint64_t seed = 0;
    unsigned threads = 0; // 0 = auto
    bool threads_given = false;
};

void add_common_flags(CLI::App* cmd, ForestFlags& flags, bool sweep_mode) {
    cmd->add_option("--trees", flags.trees, "Number of trees M")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--mtry", flags.mtry,
                    "Split features per expansion (default max(1, ceil(p/3)))")
        ->check(CLI::PositiveNumber);
    if (!sweep_mode) {
        cmd->add_option("--subsample-size", flags.subsample_size,
                        "In-bag points per tree a_n (default ceil(0.632 n))")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--subsample-frac", flags.subsample_frac,
                        "a_n as a fraction of n, in (0, 1]")
            ->check(CLI::Range(1e-9, 1.0));
        cmd->add_option("--max-leaves", flags.max_leaves,
                        "Leaf budget per tree t_n (default a_n, fully grown)")
            ->check(CLI::PositiveNumber);
    }
    cmd->add_option("--min-leaf", flags.min_leaf, "Minimum in-bag points per leaf")
        ->check(CLI::PositiveNumber);
    cmd->add_flag("--with-replacement", flags.with_replacement,
                  "Bootstrap resampling with replacement (default: without)");
    cmd->add_option("--seed", flags.seed, "Master seed");
    auto* threads_opt =
        cmd->add_option("--threads", flags.threads,
                        "Worker threads; 0 = auto (env RFVAR_THREADS overrides the "
                        "default, never the output)");
    cmd->callback([&flags, threads_opt]() { flags.threads_given = threads_opt->count() > 0; });
}

unsigned resolve_thread_flag(const ForestFlags& flags) {
    if (flags.threads_given) return flags.threads;
    if (const char* env = std::getenv("RFVAR_THREADS")) {
        char* end = nullptr;
        const unsigned long v = std::strtoul(env, &end, 10);
        if (end && *end == '\0') return static_cast<unsigned>(v);
    }
    return flags.threads;
}

rfvar::ForestConfig to_config(const ForestFlags& flags, std::size_t n) {
    rfvar::ForestConfig cfg;
    cfg.num_trees = flags.trees;
    cfg.mtry = flags.mtry;
    if (flags.subsample_size > 0 && flags.subsample_frac > 0.0)
        throw rfvar::ConfigError("--subsample-size and --subsample-frac are exclusive");
    cfg.subsample_size = flags.subsample_size;
    if (flags.subsample_frac > 0.0)
        cfg.subsample_size = static_cast<std::size_t>(
            std::ceil(flags.subsample_frac * static_cast<double>(n)));
    cfg.max_leaves = flags.max_leaves;
    cfg.min_leaf_size = flags.min_leaf;
    cfg.resampling = flags.with_replacement ? rfvar::Resampling::with_replacement
                                            : rfvar::Resampling::without_replacement;
    cfg.master_seed = flags.seed;
    return cfg;
}

void emit(const std::string& path, const std::string& content) {
    if (path.empty())
        std::cout << content << '\n';
    else
        rfvar::write_text_file(path, content);
}

struct FitArgs {
    ForestFlags forest;
    std::string input;
    std::string target;
    std::string output;
    std::string export_forest;
    std::string export_weights;
    std::size_t boot_reps = 0;
    std::uint64_t boot_seed = 0;
};

int run_fit(const FitArgs& args) {
    const rfvar::Dataset data = rfvar::read_csv_dataset(args.input, args.target);
    const rfvar::ForestConfig cfg = to_config(args.forest, data.n_rows);
    const unsigned threads = resolve_thread_flag(args.forest);

    const rfvar::Forest forest = rfvar::build_forest(data, cfg, threads);
    rfvar::BootstrapConfig boot;
    boot.B = args.boot_reps;
    boot.bootstrap_seed = args.boot_seed;
    const rfvar::VarianceReport report =
        rfvar::estimate_all(forest, data, boot, threads);

    emit(args.output, rfvar::report_to_json(report));
    if (!args.export_forest.empty())
        rfvar::write_text_file(args.export_forest, rfvar::forest_to_json(forest));
    if (!args.export_weights.empty()) {
        const rfvar::OOBWeightMatrix weights =
            rfvar::oob_weight_matrix(forest, data, threads);
        rfvar::write_text_file(args.export_weights, rfvar::weights_to_csv(weights));
    }
    return 0;
}

struct SweepArgs {
    ForestFlags forest;
    std::string model = "canonical";
    double sigma = 1.0;
    std::size_t p = 0;
    std::vector<std::size_t> n_grid;
    std::size_t n_single = 0;
    std::size_t reps = 20;
    std::string schedule = "practical";
    std::size_t boot_reps = 0;
    std::string out_csv;
    std::string out_json;
};

rfvar::ExperimentPlan to_plan(const SweepArgs& args) {
    rfvar::ExperimentPlan plan;
    plan.model = rfvar::SimulationModel::by_name(args.model, args.sigma, args.p);
    plan.model_name = args.model;
    plan.n_grid = args.n_grid;
    if (plan.n_grid.empty() && args.n_single > 0) plan.n_grid = {args.n_single};
    plan.reps = args.reps;
    plan.forest = to_config(args.forest, /*n=*/0);
    if (args.schedule == "practical")
        plan.schedule = rfvar::SubsampleSchedule::practical;
    else if (args.schedule == "theory")
        plan.schedule = rfvar::SubsampleSchedule::theory;
    else
        throw rfvar::ConfigError("unknown schedule: " + args.schedule);
    plan.boot.B = args.boot_reps;
    plan.plan_seed = args.forest.seed;
    plan.threads = resolve_thread_flag(args.forest);
    return plan;
}

void add_sweep_flags(CLI::App* cmd, SweepArgs& args) {
    add_common_flags(cmd, args.forest, /*sweep_mode=*/true);
    cmd->add_option("--model", args.model, "zero | canonical | linear");
    cmd->add_option("--sigma", args.sigma, "True noise sd")->check(CLI::NonNegativeNumber);
    cmd->add_option("--p", args.p, "Feature count for zero/linear models");
    cmd->add_option("--n-grid", args.n_grid, "Comma-separated sample sizes")
        ->delimiter(',');
    cmd->add_option("--n", args.n_single, "Single sample size (shorthand)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--reps", args.reps, "Replications per grid point")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--schedule", args.schedule, "practical | theory");
    cmd->add_option("--boot-reps", args.boot_reps,
                    "Monte-Carlo bootstrap replications (0 = closed form only)");
}

int run_simulate(const SweepArgs& args) {
    const rfvar::ExperimentPlan plan = to_plan(args);
    const rfvar::ExperimentResult result = rfvar::run_consistency_sweep(plan);
    emit(args.out_csv.empty() ? "rfvar_simulate.csv" : args.out_csv,
         rfvar::records_to_csv(result.records));
    emit(args.out_json.empty() ? "rfvar_simulate.json" : args.out_json,
         rfvar::sweep_to_json(result, plan));
    return 0;
}

int run_ordering(const SweepArgs& args) {
    const rfvar::ExperimentPlan plan = to_plan(args);
    const rfvar::ExperimentResult result = rfvar::run_ordering_study(plan);
    emit(args.out_csv.empty() ? "rfvar_ordering.csv" : args.out_csv,
         rfvar::ordering_to_csv(result.records));
    emit(args.out_json.empty() ? "rfvar_ordering.json" : args.out_json,
         rfvar::ordering_to_json(result, plan));
    return 0;
}

struct MConvArgs {
    ForestFlags forest;
    std::string model = "canonical";
    double sigma = 1.0;
    std::size_t p = 0;
    std::size_t n = 200;
    std::vector<std::size_t> m_grid = {100, 400};
    std::size_t reps = 20;
    std::string out_csv;
};

int run_mconv(const MConvArgs& args) {
    const rfvar::SimulationModel model =
        rfvar::SimulationModel::by_name(args.model, args.sigma, args.p);
    const rfvar::ForestConfig cfg = to_config(args.forest, args.n);
    const std::vector<rfvar::MConvergenceRow> rows = rfvar::run_m_convergence(
        model, args.n, args.m_grid, args.reps, args.forest.seed, cfg,
        resolve_thread_flag(args.forest));
    emit(args.out_csv.empty() ? "rfvar_mconv.csv" : args.out_csv,
         rfvar::mconvergence_to_csv(rows));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Random forest regression with OOB residual variance estimation"};
    app.require_subcommand(1);

    FitArgs fit_args;
    CLI::App* fit = app.add_subcommand(
        "fit", "Fit a forest on a CSV and write a variance report");
    add_common_flags(fit, fit_args.forest, /*sweep_mode=*/false);
    fit->add_option("--input", fit_args.input, "Training CSV with header")
        ->required();
    fit->add_option("--target", fit_args.target, "Response column name")->required();
    fit->add_option("--output", fit_args.output,
                    "Report JSON path (default: stdout)");
    fit->add_option("--boot-reps", fit_args.boot_reps,
                    "Monte-Carlo bootstrap replications (0 = closed form only)");
    fit->add_option("--boot-seed", fit_args.boot_seed, "Bootstrap noise seed");
    fit->add_option("--export-forest", fit_args.export_forest,
                    "Write the fitted forest as JSON");
    fit->add_option("--export-weights", fit_args.export_weights,
                    "Write the OOB weight matrix as CSV");

    SweepArgs sim_args;
    CLI::App* simulate = app.add_subcommand(
        "simulate", "Consistency sweep over synthetic data with known sigma^2");
    add_sweep_flags(simulate, sim_args);
    simulate->add_option("--out-csv", sim_args.out_csv, "Per-rep CSV path");
    simulate->add_option("--out-json", sim_args.out_json, "Aggregate JSON path");

    SweepArgs ord_args;
    CLI::App* ordering = app.add_subcommand(
        "ordering", "Estimator ordering and lower-bound ratio study");
    add_sweep_flags(ordering, ord_args);
    ordering->add_option("--out-csv", ord_args.out_csv, "Per-rep CSV path");
    ordering->add_option("--out-json", ord_args.out_json, "Aggregate JSON path");

    MConvArgs mconv_args;
    CLI::App* mconv = app.add_subcommand(
        "mconv", "Monte-Carlo spread of OOB quantities vs tree count");
    add_common_flags(mconv, mconv_args.forest, /*sweep_mode=*/true);
    mconv->add_option("--model", mconv_args.model, "zero | canonical | linear");
    mconv->add_option("--sigma", mconv_args.sigma, "True noise sd")
        ->check(CLI::NonNegativeNumber);
    mconv->add_option("--p", mconv_args.p, "Feature count for zero/linear models");
    mconv->add_option("--n", mconv_args.n, "Sample size")->check(CLI::PositiveNumber);
    mconv->add_option("--m-grid", mconv_args.m_grid, "Comma-separated tree counts")
        ->delimiter(',');
    mconv->add_option("--reps", mconv_args.reps, "Forests per tree count");
    mconv->add_option("--out-csv", mconv_args.out_csv, "Output CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 3;
    }

    try {
        if (fit->parsed()) return run_fit(fit_args);
        if (simulate->parsed()) return run_simulate(sim_args);
        if (ordering->parsed()) return run_ordering(ord_args);
        if (mconv->parsed()) return run_mconv(mconv_args);
    } catch (const rfvar::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 3;
    } catch (const rfvar::InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
