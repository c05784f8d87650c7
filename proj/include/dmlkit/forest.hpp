#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dmlkit/stats.hpp"

namespace dmlkit {

struct ForestParams {
    int n_trees = 1000;
    double subsample_fraction = 0.5;  // per-tree without-replacement subsample
    int features_per_split = 0;       // 0 = ceil(sqrt(p))
    int min_leaf = 2;
    std::uint64_t seed = 0;
};

/// Flat tree node: leaves carry the mean of their training targets.
struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double prediction = 0.0;
    int n_leaf = 0;

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;

    double predict_row(std::span<const double> x) const;
};

enum class ForestTarget { mu1, mu0, propensity, generic };

/// Immutable fitted regression forest. Predictions average the per-tree leaf
/// means in tree-index order, so they do not depend on scheduling.
struct ForestModel {
    std::vector<Tree> trees;
    ForestParams params;
    std::vector<std::string> feature_names;
    ForestTarget target = ForestTarget::generic;
    double y_min = 0.0;
    double y_max = 0.0;
    std::vector<std::string> warnings;
};

/// Grow a CART regression forest: each tree sees a without-replacement
/// subsample, each split considers a fresh random feature subset, and split
/// points minimize the summed child squared error over midpoints between
/// consecutive distinct feature values. Per-tree randomness is derived from
/// (seed, tree index).
ForestModel fit_forest(const Matrix& x, std::span<const double> y, const ForestParams& params,
                       std::vector<std::string> feature_names = {},
                       ForestTarget target = ForestTarget::generic);

std::vector<double> predict(const ForestModel& model, const Matrix& x);
double predict_row(const ForestModel& model, std::span<const double> x);

/// k-fold grid search minimizing out-of-fold MSE; ties broken by smaller
/// min_leaf, then grid order. Fold layout comes from make_folds(n, k, seed).
ForestParams cross_validate(const Matrix& x, std::span<const double> y,
                            const std::vector<ForestParams>& grid, int k_folds,
                            std::uint64_t seed, std::vector<double>* out_fold_mse = nullptr);

/// Plain-text dump, one tree per block, for debugging.
void dump_forest(const ForestModel& model, std::ostream& out);

}  // namespace dmlkit
