#include "rfvar/forest.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>

#include "rfvar/errors.hpp"
#include "rfvar/parallel.hpp"
#include "rfvar/random.hpp"

namespace rfvar {

namespace {

struct CellEntry {
    double value;
    double y;
    std::uint32_t row;
};

// Cell sorted along one feature. Ties on the value break by row index so the
// accumulation order below is a total function of the cell contents.
void fill_sorted(const Dataset& data, std::span<const std::uint32_t> cell,
                 std::size_t feature, std::vector<CellEntry>& out) {
    out.clear();
    out.reserve(cell.size());
    for (std::uint32_t row : cell)
        out.push_back({data.x(row, feature), data.y(row), row});
    std::sort(out.begin(), out.end(), [](const CellEntry& a, const CellEntry& b) {
        if (a.value != b.value) return a.value < b.value;
        return a.row < b.row;
    });
}

double forward_sum_y(const std::vector<CellEntry>& entries) {
    double s = 0.0;
    for (const auto& e : entries) s += e.y;
    return s;
}

// Cut criterion when the first n_left sorted entries go left. Algebraically
// identical to (within-cell SSE - post-split SSE) / N; this form needs only
// the forward response sums. sum_left must be accumulated in sorted order
// and sum_right derived as sum_total - sum_left so that every evaluation of
// the same boundary yields the same bits. Rounding can push a mathematically
// zero reduction a hair negative; that is clamped.
double criterion_at(double sum_left, double sum_total, std::size_t n_left,
                    std::size_t n_total) {
    const double n = static_cast<double>(n_total);
    const double sum_right = sum_total - sum_left;
    const double crit = (sum_left * sum_left / static_cast<double>(n_left) +
                         sum_right * sum_right / static_cast<double>(n_total - n_left) -
                         sum_total * sum_total / n) /
                        n;
    return crit < 0.0 ? 0.0 : crit;
}

bool response_constant(const Dataset& data, std::span<const std::uint32_t> cell) {
    const double first = data.y(cell.front());
    for (std::uint32_t row : cell)
        if (data.y(row) != first) return false;
    return true;
}

std::vector<std::uint32_t> subsample_with(std::mt19937_64& rng, std::size_t n,
                                          const ForestConfig& cfg) {
    return cfg.resampling == Resampling::without_replacement
               ? sample_without_replacement(rng, n, cfg.subsample_size)
               : sample_with_replacement(rng, n, cfg.subsample_size);
}

std::optional<SplitCandidate> best_cut_scan(const Dataset& data,
                                            std::span<const std::uint32_t> cell,
                                            std::span<const std::size_t> features_sorted,
                                            std::size_t min_leaf_size,
                                            std::vector<CellEntry>& entries) {
    const std::size_t n_total = cell.size();
    std::optional<SplitCandidate> best;
    for (std::size_t feature : features_sorted) {
        fill_sorted(data, cell, feature, entries);
        const double sum_total = forward_sum_y(entries);
        double sum_left = 0.0;
        for (std::size_t k = 1; k < n_total; ++k) {
            sum_left += entries[k - 1].y;
            if (entries[k].value == entries[k - 1].value) continue; // no boundary here
            if (k < min_leaf_size || n_total - k < min_leaf_size) continue;
            const double crit = criterion_at(sum_left, sum_total, k, n_total);
            // strict improvement keeps the lowest feature, then the lowest
            // threshold, on criterion ties
            if (!best || crit > best->criterion) {
                best = SplitCandidate{feature,
                                      (entries[k - 1].value + entries[k].value) * 0.5,
                                      crit};
            }
        }
    }
    return best;
}

} // namespace

ForestConfig ForestConfig::resolved(std::size_t n, std::size_t p) const {
    ForestConfig c = *this;
    if (c.mtry == 0) c.mtry = std::max<std::size_t>(1, (p + 2) / 3);
    if (c.subsample_size == 0) {
        c.subsample_size = c.resampling == Resampling::without_replacement
                               ? static_cast<std::size_t>(std::ceil(0.632 * static_cast<double>(n)))
                               : n;
    }
    if (c.max_leaves == 0) c.max_leaves = c.subsample_size;
    return c;
}

void ForestConfig::validate(std::size_t n, std::size_t p) const {
    if (num_trees < 1) throw ConfigError("num_trees must be >= 1");
    if (mtry < 1 || mtry > p) throw ConfigError("mtry must lie in [1, p]");
    if (subsample_size < 1 || subsample_size > n)
        throw ConfigError("subsample_size must lie in [1, n]");
    if (max_leaves < 1 || max_leaves > subsample_size)
        throw ConfigError("max_leaves must lie in [1, subsample_size]");
    if (min_leaf_size < 1) throw ConfigError("min_leaf_size must be >= 1");
}

std::size_t Tree::num_leaves() const {
    std::size_t k = 0;
    for (const auto& node : nodes) k += node.is_leaf() ? 1 : 0;
    return k;
}

std::size_t Tree::leaf_index(const double* x) const {
    std::size_t idx = 0;
    while (!nodes[idx].is_leaf()) {
        const TreeNode& node = nodes[idx];
        idx = static_cast<std::size_t>(x[node.feature] < node.threshold ? node.left
                                                                        : node.right);
    }
    return idx;
}

bool Tree::in_bag(std::uint32_t row) const {
    return std::binary_search(inbag.begin(), inbag.end(), row);
}

double Forest::predict(const double* x) const {
    double sum = 0.0;
    for (const Tree& tree : trees) sum += tree.predict(x);
    return sum / static_cast<double>(trees.size());
}

std::vector<std::uint32_t> draw_subsample(std::size_t n, const ForestConfig& config,
                                          std::uint64_t tree_seed) {
    ForestConfig cfg = config;
    if (cfg.subsample_size == 0) {
        cfg.subsample_size = cfg.resampling == Resampling::without_replacement
                                 ? static_cast<std::size_t>(std::ceil(0.632 * static_cast<double>(n)))
                                 : n;
    }
    if (cfg.subsample_size < 1 || cfg.subsample_size > n)
        throw ConfigError("subsample_size must lie in [1, n]");
    std::mt19937_64 rng(tree_seed);
    return subsample_with(rng, n, cfg);
}

std::optional<double> evaluate_cut(const Dataset& data,
                                   std::span<const std::uint32_t> cell,
                                   std::size_t feature, double threshold,
                                   std::size_t min_leaf_size) {
    if (cell.empty()) throw std::invalid_argument("evaluate_cut: empty cell");
    if (!std::isfinite(threshold))
        throw std::invalid_argument("evaluate_cut: non-finite threshold");
    if (feature >= data.n_cols)
        throw std::invalid_argument("evaluate_cut: feature index out of range");
    if (min_leaf_size < 1) min_leaf_size = 1;

    std::vector<CellEntry> entries;
    fill_sorted(data, cell, feature, entries);
    const std::size_t n_total = entries.size();
    std::size_t n_left = 0;
    double sum_left = 0.0;
    for (const auto& e : entries) {
        if (!(e.value < threshold)) break;
        sum_left += e.y;
        ++n_left;
    }
    if (n_left < min_leaf_size || n_total - n_left < min_leaf_size)
        return std::nullopt;
    return criterion_at(sum_left, forward_sum_y(entries), n_left, n_total);
}

std::optional<SplitCandidate> best_cut(const Dataset& data,
                                       std::span<const std::uint32_t> cell,
                                       std::span<const std::size_t> feature_subset,
                                       std::size_t min_leaf_size) {
    if (cell.empty()) throw std::invalid_argument("best_cut: empty cell");
    if (feature_subset.empty())
        throw std::invalid_argument("best_cut: empty feature subset");
    if (min_leaf_size < 1) min_leaf_size = 1;
    if (cell.size() < 2 * min_leaf_size) return std::nullopt;
    if (response_constant(data, cell)) return std::nullopt;

    std::vector<std::size_t> features(feature_subset.begin(), feature_subset.end());
    std::sort(features.begin(), features.end());
    features.erase(std::unique(features.begin(), features.end()), features.end());
    for (std::size_t f : features)
        if (f >= data.n_cols)
            throw std::invalid_argument("best_cut: feature index out of range");

    std::vector<CellEntry> entries;
    return best_cut_scan(data, cell, features, min_leaf_size, entries);
}

namespace {

struct PendingCell {
    std::int32_t node_index;
    std::vector<std::uint32_t> members;
};

void finalize_leaf(TreeNode& node, std::vector<std::uint32_t>&& members,
                   const Dataset& data) {
    double sum = 0.0;
    for (std::uint32_t row : members) sum += data.y(row);
    node.feature = -1;
    node.count = static_cast<std::uint32_t>(members.size());
    node.value = sum / static_cast<double>(members.size());
    node.members = std::move(members);
}

// Renumber the level-order construction into preorder (root stays 0).
void reorder_preorder(std::vector<TreeNode>& nodes) {
    std::vector<std::int32_t> order;
    order.reserve(nodes.size());
    std::vector<std::int32_t> stack{0};
    while (!stack.empty()) {
        const std::int32_t idx = stack.back();
        stack.pop_back();
        order.push_back(idx);
        const TreeNode& node = nodes[static_cast<std::size_t>(idx)];
        if (!node.is_leaf()) {
            stack.push_back(node.right);
            stack.push_back(node.left); // popped first
        }
    }
    std::vector<std::int32_t> new_index(nodes.size());
    for (std::size_t k = 0; k < order.size(); ++k)
        new_index[static_cast<std::size_t>(order[k])] = static_cast<std::int32_t>(k);
    std::vector<TreeNode> out(nodes.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        out[k] = std::move(nodes[static_cast<std::size_t>(order[k])]);
        if (!out[k].is_leaf()) {
            out[k].left = new_index[static_cast<std::size_t>(out[k].left)];
            out[k].right = new_index[static_cast<std::size_t>(out[k].right)];
        }
    }
    nodes = std::move(out);
}

} // namespace

Tree build_tree(const Dataset& data, const ForestConfig& config,
                std::uint64_t tree_seed) {
    const ForestConfig cfg = config.resolved(data.n_rows, data.n_cols);
    cfg.validate(data.n_rows, data.n_cols);

    std::mt19937_64 rng(tree_seed);
    Tree tree;
    tree.seed = tree_seed;
    tree.inbag = subsample_with(rng, data.n_rows, cfg);

    tree.nodes.reserve(2 * cfg.max_leaves);
    tree.nodes.emplace_back();
    std::deque<PendingCell> queue;
    queue.push_back({0, tree.inbag});
    std::size_t leaves = 1;

    std::vector<CellEntry> entries;
    std::vector<std::size_t> features;

    while (!queue.empty()) {
        PendingCell cell = std::move(queue.front());
        queue.pop_front();
        std::vector<std::uint32_t>& members = cell.members;

        std::optional<SplitCandidate> cut;
        // cells that cannot possibly split are finalized without consuming
        // randomness; expandable cells draw one fresh feature subset and are
        // not retried if every drawn feature is constant
        const bool expandable = leaves < cfg.max_leaves &&
                                members.size() >= 2 * cfg.min_leaf_size &&
                                !response_constant(data, members);
        if (expandable) {
            const auto drawn = sample_without_replacement(rng, data.n_cols, cfg.mtry);
            features.assign(drawn.begin(), drawn.end());
            cut = best_cut_scan(data, members, features, cfg.min_leaf_size, entries);
        }
        if (!cut) {
            finalize_leaf(tree.nodes[static_cast<std::size_t>(cell.node_index)],
                          std::move(members), data);
            continue;
        }

        std::vector<std::uint32_t> left, right; // row order preserved
        for (std::uint32_t row : members) {
            if (data.x(row, cut->feature) < cut->threshold)
                left.push_back(row);
            else
                right.push_back(row);
        }
        const std::int32_t left_index = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        TreeNode& node = tree.nodes[static_cast<std::size_t>(cell.node_index)];
        node.feature = static_cast<std::int32_t>(cut->feature);
        node.threshold = cut->threshold;
        node.left = left_index;
        node.right = left_index + 1;
        queue.push_back({left_index, std::move(left)});
        queue.push_back({left_index + 1, std::move(right)});
        ++leaves;
    }

    reorder_preorder(tree.nodes);
    return tree;
}

Forest build_forest(const Dataset& data, const ForestConfig& config,
                    unsigned threads) {
    data.validate();
    const ForestConfig cfg = config.resolved(data.n_rows, data.n_cols);
    cfg.validate(data.n_rows, data.n_cols);

    Forest forest;
    forest.config = cfg;
    forest.n_rows = data.n_rows;
    forest.trees.resize(cfg.num_trees);
    parallel_for(cfg.num_trees, threads, [&](std::size_t j) {
        forest.trees[j] = build_tree(data, cfg, derive_seed(cfg.master_seed, j));
    });
    return forest;
}

} // namespace rfvar
