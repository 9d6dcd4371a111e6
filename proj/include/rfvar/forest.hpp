#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rfvar/dataset.hpp"

namespace rfvar {

enum class Resampling { without_replacement, with_replacement };

// Forest hyper-parameters. Zero-valued sizes mean "use the default for this
// dataset" and are filled in by resolved():
//   mtry           -> max(1, ceil(p / 3))
//   subsample_size -> ceil(0.632 * n)  (without replacement)
//                     n                (with replacement)
//   max_leaves     -> subsample_size   (fully grown)
struct ForestConfig {
    std::size_t num_trees = 500;     // M
    std::size_t mtry = 0;            // candidate split features per expansion
    std::size_t subsample_size = 0;  // a_n, in-bag points per tree
    std::size_t max_leaves = 0;      // t_n, leaf budget per tree
    std::size_t min_leaf_size = 1;   // minimum in-bag points per leaf
    Resampling resampling = Resampling::without_replacement;
    std::uint64_t master_seed = 0;

    ForestConfig resolved(std::size_t n, std::size_t p) const;

    // Throws ConfigError on any violated constraint. Expects a resolved
    // (all-nonzero) config.
    void validate(std::size_t n, std::size_t p) const;
};

struct SplitCandidate {
    std::size_t feature = 0;
    double threshold = 0.0;
    double criterion = 0.0; // variance reduction, >= 0
};

// Flat node. feature < 0 marks a leaf; routing sends x left iff
// x[feature] < threshold. Leaves carry the in-bag rows that landed in them
// (with multiplicity, sorted) and their mean response.
struct TreeNode {
    std::int32_t feature = -1;
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;
    std::uint32_t count = 0;
    std::vector<std::uint32_t> members;

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;      // preorder, root at index 0
    std::vector<std::uint32_t> inbag; // sorted, multiplicity kept
    std::uint64_t seed = 0;

    std::size_t num_leaves() const;
    // Index of the leaf containing x.
    std::size_t leaf_index(const double* x) const;
    double predict(const double* x) const {
        return nodes[leaf_index(x)].value;
    }
    // True iff row appears in the in-bag multiset.
    bool in_bag(std::uint32_t row) const;
};

struct Forest {
    ForestConfig config; // resolved
    std::vector<Tree> trees;
    std::size_t n_rows = 0; // size of the training set the forest was fit on

    // Mean of per-tree predictions, accumulated in tree order.
    double predict(const double* x) const;
    double predict(std::span<const double> x) const { return predict(x.data()); }
};

// The in-bag multiset for one tree: a_n distinct indices without
// replacement, or a_n draws with multiplicity otherwise. Sorted, and a pure
// function of (n, config, tree_seed).
std::vector<std::uint32_t> draw_subsample(std::size_t n, const ForestConfig& config,
                                          std::uint64_t tree_seed);

// L2 cut criterion for splitting `cell` (in-bag rows, multiplicity kept) on
// (feature, threshold): the drop in within-cell mean squared deviation,
// normalized by the cell count. nullopt when a child would end up with
// fewer than min_leaf_size in-bag points.
std::optional<double> evaluate_cut(const Dataset& data,
                                   std::span<const std::uint32_t> cell,
                                   std::size_t feature, double threshold,
                                   std::size_t min_leaf_size);

// Best admissible cut over the given feature subset. Candidate thresholds
// are midpoints between consecutive distinct in-bag values; ties break to
// the lowest feature index, then the lowest threshold. nullopt when no cut
// is admissible or the cell response is constant.
std::optional<SplitCandidate> best_cut(const Dataset& data,
                                       std::span<const std::uint32_t> cell,
                                       std::span<const std::size_t> feature_subset,
                                       std::size_t min_leaf_size);

// Grows one tree level-order: every cell at depth k is expanded (or
// finalized) before any cell at depth k+1, each expansion drawing a fresh
// mtry feature subset. Growth stops at max_leaves or when no cell splits.
Tree build_tree(const Dataset& data, const ForestConfig& config,
                std::uint64_t tree_seed);

// M trees with seeds derive_seed(master_seed, j). Tree construction may run
// on `threads` workers; the result is identical for any thread count.
Forest build_forest(const Dataset& data, const ForestConfig& config,
                    unsigned threads = 1);

} // namespace rfvar
