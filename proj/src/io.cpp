#include "rfvar/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "rfvar/errors.hpp"

namespace rfvar {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

// Minimal JSON emitter. nlohmann is used for parsing; emission is manual so
// doubles carry 17 significant digits and keys keep declaration order.
class JsonWriter {
public:
    void begin_object() { prefix(); out_ += '{'; post_open(); }
    void end_object() { out_ += '}'; after_value(); }
    void begin_array() { prefix(); out_ += '['; post_open(); }
    void end_array() { out_ += ']'; after_value(); }

    void key(std::string_view k) {
        prefix();
        write_string(k);
        out_ += ':';
        need_comma_ = false;
    }
    void number(double v) {
        prefix();
        out_ += std::isfinite(v) ? format_double(v) : "null";
        after_value();
    }
    void integer(std::uint64_t v) {
        prefix();
        out_ += std::to_string(v);
        after_value();
    }
    void integer(std::int64_t v) {
        prefix();
        out_ += std::to_string(v);
        after_value();
    }
    void boolean(bool v) {
        prefix();
        out_ += v ? "true" : "false";
        after_value();
    }
    void string(std::string_view s) {
        prefix();
        write_string(s);
        after_value();
    }

    std::string take() { return std::move(out_); }

private:
    void prefix() {
        if (need_comma_) out_ += ',';
    }
    void post_open() { need_comma_ = false; }
    void after_value() { need_comma_ = true; }
    void write_string(std::string_view s) {
        out_ += '"';
        for (char c : s) {
            switch (c) {
                case '"': out_ += "\\\""; break;
                case '\\': out_ += "\\\\"; break;
                case '\n': out_ += "\\n"; break;
                case '\r': out_ += "\\r"; break;
                case '\t': out_ += "\\t"; break;
                default:
                    if (static_cast<unsigned char>(c) < 0x20) {
                        char buf[8];
                        std::snprintf(buf, sizeof buf, "\\u%04x", c);
                        out_ += buf;
                    } else {
                        out_ += c;
                    }
            }
        }
        out_ += '"';
    }

    std::string out_;
    bool need_comma_ = false;
};

double parse_cell(const std::string& cell, std::size_t line_no,
                  const std::string& column) {
    if (cell.empty())
        throw InputError("empty cell in column '" + column + "' on line " +
                         std::to_string(line_no));
    const char* begin = cell.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end != begin + cell.size())
        throw InputError("non-numeric cell '" + cell + "' in column '" + column +
                         "' on line " + std::to_string(line_no));
    if (!std::isfinite(v))
        throw InputError("non-finite cell '" + cell + "' in column '" + column +
                         "' on line " + std::to_string(line_no));
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

} // namespace

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (!in.good() && !in.eof()) throw InputError("read failure: " + path);
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open file for writing: " + path);
    out << content;
    if (!out.good()) throw InputError("write failure: " + path);
}

Dataset read_csv_dataset(const std::string& path, const std::string& target_column) {
    const std::string text = read_text_file(path);
    std::vector<std::string> lines;
    std::string line;
    std::stringstream ss(text);
    while (std::getline(ss, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    if (lines.empty()) throw InputError("empty CSV file: " + path);

    const std::vector<std::string> header = split_csv_line(lines[0]);
    std::size_t target_index = header.size();
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] == target_column) target_index = j;
    if (target_index == header.size())
        throw InputError("target column not found: " + target_column);
    if (header.size() < 2)
        throw InputError("CSV needs the target column plus at least one feature");

    const std::size_t n = lines.size() - 1;
    const std::size_t p = header.size() - 1;
    std::vector<double> features;
    features.reserve(n * p);
    std::vector<double> response;
    response.reserve(n);
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const std::vector<std::string> cells = split_csv_line(lines[r]);
        if (cells.size() != header.size())
            throw InputError("line " + std::to_string(r + 1) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(header.size()));
        for (std::size_t j = 0; j < cells.size(); ++j) {
            const double v = parse_cell(cells[j], r + 1, header[j]);
            if (j == target_index)
                response.push_back(v);
            else
                features.push_back(v);
        }
    }
    std::vector<std::string> names;
    for (std::size_t j = 0; j < header.size(); ++j)
        if (j != target_index) names.push_back(header[j]);

    if (n < 2) throw InputError("CSV needs at least 2 data rows");
    return make_dataset(n, p, std::move(features), std::move(response),
                        std::move(names));
}

std::string forest_to_json(const Forest& forest) {
    JsonWriter w;
    w.begin_object();
    w.key("format_version");
    w.integer(std::uint64_t{1});
    w.key("config");
    w.begin_object();
    w.key("num_trees");
    w.integer(static_cast<std::uint64_t>(forest.config.num_trees));
    w.key("mtry");
    w.integer(static_cast<std::uint64_t>(forest.config.mtry));
    w.key("subsample_size");
    w.integer(static_cast<std::uint64_t>(forest.config.subsample_size));
    w.key("max_leaves");
    w.integer(static_cast<std::uint64_t>(forest.config.max_leaves));
    w.key("min_leaf_size");
    w.integer(static_cast<std::uint64_t>(forest.config.min_leaf_size));
    w.key("resampling");
    w.string(forest.config.resampling == Resampling::without_replacement
                 ? "without_replacement"
                 : "with_replacement");
    w.key("master_seed");
    w.integer(static_cast<std::uint64_t>(forest.config.master_seed));
    w.end_object();
    w.key("n_rows");
    w.integer(static_cast<std::uint64_t>(forest.n_rows));
    w.key("trees");
    w.begin_array();
    for (const Tree& tree : forest.trees) {
        w.begin_object();
        w.key("seed");
        w.integer(static_cast<std::uint64_t>(tree.seed));
        w.key("inbag");
        w.begin_array();
        for (std::uint32_t row : tree.inbag) w.integer(static_cast<std::uint64_t>(row));
        w.end_array();
        w.key("nodes");
        w.begin_array();
        for (const TreeNode& node : tree.nodes) {
            w.begin_object();
            if (node.is_leaf()) {
                w.key("value");
                w.number(node.value);
                w.key("members");
                w.begin_array();
                for (std::uint32_t row : node.members)
                    w.integer(static_cast<std::uint64_t>(row));
                w.end_array();
            } else {
                w.key("feature");
                w.integer(static_cast<std::int64_t>(node.feature));
                w.key("threshold");
                w.number(node.threshold);
                w.key("left");
                w.integer(static_cast<std::int64_t>(node.left));
                w.key("right");
                w.integer(static_cast<std::int64_t>(node.right));
            }
            w.end_object();
        }
        w.end_array();
        w.end_object();
    }
    w.end_array();
    w.end_object();
    return w.take();
}

Forest forest_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("invalid forest JSON: ") + e.what());
    }
    try {
        if (doc.at("format_version").get<int>() != 1)
            throw InputError("unsupported forest format_version");
        Forest forest;
        const auto& cfg = doc.at("config");
        forest.config.num_trees = cfg.at("num_trees").get<std::size_t>();
        forest.config.mtry = cfg.at("mtry").get<std::size_t>();
        forest.config.subsample_size = cfg.at("subsample_size").get<std::size_t>();
        forest.config.max_leaves = cfg.at("max_leaves").get<std::size_t>();
        forest.config.min_leaf_size = cfg.at("min_leaf_size").get<std::size_t>();
        const std::string resampling = cfg.at("resampling").get<std::string>();
        if (resampling == "without_replacement")
            forest.config.resampling = Resampling::without_replacement;
        else if (resampling == "with_replacement")
            forest.config.resampling = Resampling::with_replacement;
        else
            throw InputError("unknown resampling mode: " + resampling);
        forest.config.master_seed = cfg.at("master_seed").get<std::uint64_t>();
        forest.n_rows = doc.at("n_rows").get<std::size_t>();

        for (const auto& jt : doc.at("trees")) {
            Tree tree;
            tree.seed = jt.at("seed").get<std::uint64_t>();
            for (const auto& ji : jt.at("inbag"))
                tree.inbag.push_back(ji.get<std::uint32_t>());
            // OOB lookups binary-search this
            if (!std::is_sorted(tree.inbag.begin(), tree.inbag.end()))
                throw InputError("tree inbag must be sorted");
            for (const auto& jn : jt.at("nodes")) {
                TreeNode node;
                if (jn.contains("value")) {
                    node.feature = -1;
                    node.value = jn.at("value").get<double>();
                    for (const auto& jm : jn.at("members"))
                        node.members.push_back(jm.get<std::uint32_t>());
                    node.count = static_cast<std::uint32_t>(node.members.size());
                } else {
                    node.feature = jn.at("feature").get<std::int32_t>();
                    node.threshold = jn.at("threshold").get<double>();
                    node.left = jn.at("left").get<std::int32_t>();
                    node.right = jn.at("right").get<std::int32_t>();
                }
                tree.nodes.push_back(std::move(node));
            }
            if (tree.nodes.empty()) throw InputError("tree with no nodes");
            const std::int32_t node_count = static_cast<std::int32_t>(tree.nodes.size());
            for (const TreeNode& node : tree.nodes) {
                if (node.is_leaf()) {
                    if (node.members.empty()) throw InputError("leaf with no members");
                    continue;
                }
                if (node.left < 0 || node.left >= node_count || node.right < 0 ||
                    node.right >= node_count)
                    throw InputError("node child index out of range");
            }
            forest.trees.push_back(std::move(tree));
        }
        if (forest.trees.empty() || forest.trees.size() != forest.config.num_trees)
            throw InputError("tree count does not match config.num_trees");
        return forest;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("invalid forest JSON: ") + e.what());
    }
}

std::string report_to_json(const VarianceReport& report) {
    JsonWriter w;
    w.begin_object();
    w.key("sigma2_rf");
    w.number(report.sigma2_rf);
    w.key("sigma2_fast");
    w.number(report.sigma2_fast);
    w.key("sigma2_boot_mc");
    w.number(report.sigma2_boot_mc);
    w.key("sigma2_boot_closed");
    w.number(report.sigma2_boot_closed);
    w.key("r_hat_B");
    w.number(report.r_hat_B);
    w.key("r_infinity");
    w.number(report.r_infinity);
    w.key("lower_bound");
    w.number(report.lower_bound);
    w.key("n_covered");
    w.integer(static_cast<std::uint64_t>(report.n_covered));
    w.key("B");
    w.integer(static_cast<std::uint64_t>(report.B));
    w.key("ordering_ok");
    w.boolean(report.ordering_ok);
    w.key("clamped_boot");
    w.number(report.clamped_boot);
    w.key("warnings");
    w.begin_array();
    for (const std::string& warning : report.warnings) w.string(warning);
    w.end_array();
    w.end_object();
    return w.take();
}

std::string weights_to_csv(const OOBWeightMatrix& weights) {
    std::string out = "i,j,weight\n";
    for (std::size_t i = 0; i < weights.n; ++i) {
        if (!weights.covered[i]) continue;
        for (const auto& [j, w] : weights.rows[i]) {
            out += std::to_string(i);
            out += ',';
            out += std::to_string(j);
            out += ',';
            out += format_double(w);
            out += '\n';
        }
    }
    return out;
}

std::string records_to_csv(const std::vector<RepRecord>& records) {
    std::string out =
        "n,M,a_n,rep,sigma2_true,sigma2_rf,sigma2_fast,sigma2_boot_mc,"
        "sigma2_boot_closed,r_hat_B,r_infinity,n_covered\n";
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const RepRecord& rec : records) {
        const VarianceReport& r = rec.report;
        out += std::to_string(rec.n) + ',' + std::to_string(rec.num_trees) + ',' +
               std::to_string(rec.subsample_size) + ',' + std::to_string(rec.rep) +
               ',';
        out += format_double(rec.sigma2_true) + ',';
        out += format_double(rec.failed ? nan : r.sigma2_rf) + ',';
        out += format_double(rec.failed ? nan : r.sigma2_fast) + ',';
        out += format_double(rec.failed ? nan : r.sigma2_boot_mc) + ',';
        out += format_double(rec.failed ? nan : r.sigma2_boot_closed) + ',';
        out += format_double(rec.failed ? nan : r.r_hat_B) + ',';
        out += format_double(rec.failed ? nan : r.r_infinity) + ',';
        out += std::to_string(rec.failed ? 0 : r.n_covered);
        out += '\n';
    }
    return out;
}

namespace {

void write_estimator_aggregate(JsonWriter& w, const EstimatorAggregate& agg) {
    w.begin_object();
    w.key("mean_bias");
    w.number(agg.mean_bias);
    w.key("median_bias");
    w.number(agg.median_bias);
    w.key("mse");
    w.number(agg.mse);
    w.key("sd");
    w.number(agg.sd);
    w.key("median_abs_bias");
    w.number(agg.median_abs_bias);
    w.end_object();
}

void write_plan_header(JsonWriter& w, const ExperimentPlan& plan) {
    w.key("model");
    w.string(plan.model_name);
    w.key("sigma2_true");
    w.number(plan.model.sigma * plan.model.sigma);
    w.key("schedule");
    w.string(schedule_name(plan.schedule));
    w.key("reps");
    w.integer(static_cast<std::uint64_t>(plan.reps));
    w.key("num_trees");
    w.integer(static_cast<std::uint64_t>(plan.forest.num_trees));
    w.key("boot_B");
    w.integer(static_cast<std::uint64_t>(plan.boot.B));
    w.key("plan_seed");
    w.integer(static_cast<std::uint64_t>(plan.plan_seed));
    w.key("n_grid");
    w.begin_array();
    for (std::size_t n : plan.n_grid) w.integer(static_cast<std::uint64_t>(n));
    w.end_array();
}

void write_check(JsonWriter& w, const char* name, bool pass) {
    w.begin_object();
    w.key("name");
    w.string(name);
    w.key("pass");
    w.boolean(pass);
    w.end_object();
}

} // namespace

std::string sweep_to_json(const ExperimentResult& result, const ExperimentPlan& plan) {
    JsonWriter w;
    w.begin_object();
    write_plan_header(w, plan);
    w.key("cells");
    w.begin_array();
    for (const CellAggregate& cell : result.cells) {
        w.begin_object();
        w.key("n");
        w.integer(static_cast<std::uint64_t>(cell.n));
        w.key("a_n");
        w.integer(static_cast<std::uint64_t>(cell.subsample_size));
        w.key("n_failed");
        w.integer(static_cast<std::uint64_t>(cell.n_failed));
        w.key("sigma2_rf");
        write_estimator_aggregate(w, cell.rf);
        w.key("sigma2_fast");
        write_estimator_aggregate(w, cell.fast);
        w.key("sigma2_boot_closed");
        write_estimator_aggregate(w, cell.boot_closed);
        w.key("freq_rf_ge_fast");
        w.number(cell.freq_rf_ge_fast);
        w.key("freq_fast_ge_boot_closed");
        w.number(cell.freq_fast_ge_boot_closed);
        w.key("median_bound_ratio");
        w.number(cell.median_bound_ratio);
        w.key("min_bound_ratio");
        w.number(cell.min_bound_ratio);
        w.end_object();
    }
    w.end_array();
    w.key("checks");
    w.begin_array();
    write_check(w, "median_abs_bias_rf_decreasing", result.median_abs_bias_rf_decreasing);
    write_check(w, "ordering_rf_ge_fast_always", result.ordering_rf_ge_fast_always);
    write_check(w, "ordering_fast_ge_boot_closed_always", result.ordering_fast_ge_boot_always);
    w.end_array();
    w.end_object();
    return w.take();
}

std::string ordering_to_csv(const std::vector<RepRecord>& records) {
    std::string out =
        "n,a_n,rep,sigma2_rf,sigma2_fast,sigma2_boot_closed,r_infinity,"
        "lower_bound,bound_ratio,rf_ge_fast,fast_ge_boot\n";
    for (const RepRecord& rec : records) {
        if (rec.failed) continue;
        const VarianceReport& r = rec.report;
        const double ratio = r.lower_bound > 0.0
                                 ? r.r_infinity / r.lower_bound
                                 : std::numeric_limits<double>::infinity();
        out += std::to_string(rec.n) + ',' + std::to_string(rec.subsample_size) +
               ',' + std::to_string(rec.rep) + ',';
        out += format_double(r.sigma2_rf) + ',';
        out += format_double(r.sigma2_fast) + ',';
        out += format_double(r.sigma2_boot_closed) + ',';
        out += format_double(r.r_infinity) + ',';
        out += format_double(r.lower_bound) + ',';
        out += format_double(ratio) + ',';
        out += r.sigma2_rf >= r.sigma2_fast ? "1," : "0,";
        out += r.sigma2_fast >= r.sigma2_boot_closed ? "1" : "0";
        out += '\n';
    }
    return out;
}

std::string ordering_to_json(const ExperimentResult& result, const ExperimentPlan& plan) {
    JsonWriter w;
    w.begin_object();
    write_plan_header(w, plan);
    w.key("cells");
    w.begin_array();
    for (const CellAggregate& cell : result.cells) {
        w.begin_object();
        w.key("n");
        w.integer(static_cast<std::uint64_t>(cell.n));
        w.key("a_n");
        w.integer(static_cast<std::uint64_t>(cell.subsample_size));
        w.key("n_failed");
        w.integer(static_cast<std::uint64_t>(cell.n_failed));
        w.key("freq_rf_ge_fast");
        w.number(cell.freq_rf_ge_fast);
        w.key("freq_fast_ge_boot_closed");
        w.number(cell.freq_fast_ge_boot_closed);
        w.key("median_bound_ratio");
        w.number(cell.median_bound_ratio);
        w.key("min_bound_ratio");
        w.number(cell.min_bound_ratio);
        w.end_object();
    }
    w.end_array();
    w.key("checks");
    w.begin_array();
    write_check(w, "ordering_rf_ge_fast_always", result.ordering_rf_ge_fast_always);
    write_check(w, "ordering_fast_ge_boot_closed_always", result.ordering_fast_ge_boot_always);
    w.end_array();
    w.end_object();
    return w.take();
}

std::string mconvergence_to_csv(const std::vector<MConvergenceRow>& rows) {
    std::string out = "M,sd_sigma2_rf,sd_probe_oob\n";
    for (const MConvergenceRow& row : rows) {
        out += std::to_string(row.num_trees) + ',';
        out += format_double(row.sd_sigma2_rf) + ',';
        out += format_double(row.sd_probe_oob);
        out += '\n';
    }
    return out;
}

} // namespace rfvar
