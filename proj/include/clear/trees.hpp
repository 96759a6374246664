#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "clear/matrix.hpp"
#include "clear/rng.hpp"

namespace clear::trees {

/// A node of a binary CART tree. Internal nodes route rows with
/// x[feature] < threshold to `left`; leaves only carry class counts.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::size_t n_samples = 0;
    double impurity_decrease = 0.0;
    std::vector<std::size_t> class_counts;

    bool is_leaf() const { return feature < 0; }
};

struct TreeParams {
    int max_depth = 12;
    std::size_t min_leaf = 5;
    /// Features examined per split; 0 means all of them.
    std::size_t features_per_split = 0;
};

class DecisionTree {
public:
    DecisionTree(std::vector<TreeNode> nodes, std::size_t n_features, std::size_t n_classes)
        : nodes_(std::move(nodes)), n_features_(n_features), n_classes_(n_classes) {}

    const std::vector<TreeNode>& nodes() const { return nodes_; }
    const TreeNode& root() const { return nodes_.front(); }
    std::size_t n_features() const { return n_features_; }
    std::size_t n_classes() const { return n_classes_; }

    const TreeNode& leaf_for(std::span<const double> row) const;
    int predict(std::span<const double> row) const;
    std::vector<int> predict(const Matrix& x) const;
    int depth() const;

private:
    std::vector<TreeNode> nodes_;
    std::size_t n_features_;
    std::size_t n_classes_;
};

double gini(std::span<const std::size_t> counts, std::size_t total);

/// Greedy CART on Gini impurity over the rows listed in `sample` (duplicates
/// allowed, as in a bootstrap draw). An empty sample means every row once.
/// `rng` is required only when features_per_split subsamples features.
DecisionTree fit_tree(const Matrix& x, std::span<const int> y, std::size_t n_classes,
                      const TreeParams& params, Rng* rng = nullptr,
                      std::span<const std::size_t> sample = {});

struct ForestParams {
    std::size_t n_trees = 100;
    /// 0 selects ceil(sqrt(d)).
    std::size_t features_per_split = 0;
    int max_depth = 12;
    std::size_t min_leaf = 5;
    bool bootstrap = true;
    std::uint64_t seed = 0;
};

struct ForestModel {
    std::vector<DecisionTree> trees;
    std::size_t features_per_split = 0;
    std::uint64_t seed = 0;
    std::size_t n_classes = 0;
};

/// Each tree gets its own seed derived from the master seed and tree index.
ForestModel fit_forest(const Matrix& x, std::span<const int> y, std::size_t n_classes,
                       const ForestParams& params);

/// Majority vote over trees; ties go to the lower class index.
int predict_forest(const ForestModel& model, std::span<const double> row);
std::vector<int> predict_forest(const ForestModel& model, const Matrix& x);

/// Weighted impurity decrease per feature, normalized to sum 1 (all zeros
/// for a tree without splits).
std::vector<double> feature_importance(const DecisionTree& tree);
/// Mean of the per-tree importances.
std::vector<double> feature_importance(const ForestModel& forest);

struct RankedFeature {
    std::string name;
    double importance = 0.0;
    std::size_t rank = 0;  // 1-based
};

/// Sums encoded-column importances onto their source features (one-hot
/// blocks collapse onto the categorical name) and ranks them, highest first,
/// ties by name.
std::vector<RankedFeature> rank_features(std::span<const double> importance,
                                         std::span<const std::string> parents);

/// Drops excluded features, then keeps the `k` best, re-ranked from 1.
std::vector<RankedFeature> select_top(std::span<const RankedFeature> ranked, std::size_t k,
                                      std::span<const std::string> excluded);

void write_importance_csv(const std::filesystem::path& path, std::span<const RankedFeature> ranked);
/// Newline-delimited feature names; blank lines and `#` comments ignored.
std::vector<std::string> read_excludelist(const std::filesystem::path& path);

}  // namespace clear::trees
