#include "dmlkit/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "dmlkit/errors.hpp"
#include "dmlkit/parallel.hpp"
#include "dmlkit/rng.hpp"

namespace dmlkit {

double Tree::predict_row(std::span<const double> x) const {
    int node = 0;
    while (!nodes[static_cast<std::size_t>(node)].is_leaf()) {
        const TreeNode& nd = nodes[static_cast<std::size_t>(node)];
        node = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(node)].prediction;
}

namespace {

struct SplitCandidate {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double cost = 0.0;     // summed child SSE
    std::size_t n_left = 0;
};

class TreeBuilder {
public:
    TreeBuilder(const Matrix& x, std::span<const double> y, const ForestParams& params,
                int features_per_split)
        : x_(x), y_(y), params_(params), mtry_(features_per_split) {}

    Tree build(std::vector<int> rows, Rng& rng) {
        Tree tree;
        rows_ = std::move(rows);
        // Worklist of (node id, begin, end) over rows_; children partition the range.
        struct Item {
            std::size_t node;
            std::size_t begin;
            std::size_t end;
        };
        std::vector<Item> stack;
        tree.nodes.emplace_back();
        stack.push_back({0, 0, rows_.size()});
        feature_pool_.resize(x_.cols);
        std::iota(feature_pool_.begin(), feature_pool_.end(), 0);

        while (!stack.empty()) {
            const Item item = stack.back();
            stack.pop_back();
            const std::size_t m = item.end - item.begin;

            double sum = 0.0, sum_sq = 0.0;
            bool pure = true;
            const double y0 = y_[static_cast<std::size_t>(rows_[item.begin])];
            for (std::size_t k = item.begin; k < item.end; ++k) {
                const double v = y_[static_cast<std::size_t>(rows_[k])];
                sum += v;
                sum_sq += v * v;
                pure = pure && v == y0;
            }

            TreeNode& node = tree.nodes[item.node];
            if (pure || m < 2 * static_cast<std::size_t>(params_.min_leaf)) {
                make_leaf(node, sum, m);
                continue;
            }

            const SplitCandidate split = best_split(item.begin, item.end, sum, sum_sq, rng);
            if (!split.found) {
                make_leaf(node, sum, m);
                continue;
            }

            // Stable partition keeps row order deterministic inside children.
            std::stable_partition(rows_.begin() + static_cast<std::ptrdiff_t>(item.begin),
                                  rows_.begin() + static_cast<std::ptrdiff_t>(item.end),
                                  [&](int r) {
                                      return x_(static_cast<std::size_t>(r),
                                                static_cast<std::size_t>(split.feature)) <=
                                             split.threshold;
                                  });
            const std::size_t mid = item.begin + split.n_left;
            node.feature = split.feature;
            node.threshold = split.threshold;
            node.left = static_cast<int>(tree.nodes.size());
            node.right = node.left + 1;
            tree.nodes.emplace_back();
            tree.nodes.emplace_back();
            const std::size_t left = static_cast<std::size_t>(tree.nodes[item.node].left);
            const std::size_t right = static_cast<std::size_t>(tree.nodes[item.node].right);
            // Push right first so the left child is processed next (DFS order
            // fixes the node numbering and the RNG consumption order).
            stack.push_back({right, mid, item.end});
            stack.push_back({left, item.begin, mid});
        }
        return tree;
    }

private:
    static void make_leaf(TreeNode& node, double sum, std::size_t m) {
        node.feature = -1;
        node.prediction = sum / static_cast<double>(m);
        node.n_leaf = static_cast<int>(m);
    }

    SplitCandidate best_split(std::size_t begin, std::size_t end, double sum, double sum_sq,
                              Rng& rng) {
        const std::size_t m = end - begin;
        const double parent_sse = sum_sq - sum * sum / static_cast<double>(m);

        // Partial Fisher-Yates: first mtry_ entries of feature_pool_ become the
        // candidate features for this node.
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(mtry_), x_.cols);
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(x_.cols - i));
            std::swap(feature_pool_[i], feature_pool_[j]);
        }

        SplitCandidate best;
        best.cost = parent_sse;
        scratch_.assign(rows_.begin() + static_cast<std::ptrdiff_t>(begin),
                        rows_.begin() + static_cast<std::ptrdiff_t>(end));
        keys_.resize(m);

        for (std::size_t fi = 0; fi < k; ++fi) {
            const std::size_t f = feature_pool_[fi];
            for (std::size_t i = 0; i < m; ++i)
                keys_[i] = x_(static_cast<std::size_t>(scratch_[i]), f);
            order_.resize(m);
            std::iota(order_.begin(), order_.end(), 0);
            std::sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
                if (keys_[a] != keys_[b]) return keys_[a] < keys_[b];
                return scratch_[a] < scratch_[b];
            });

            const auto min_leaf = static_cast<std::size_t>(params_.min_leaf);
            double left_sum = 0.0, left_sq = 0.0;
            for (std::size_t i = 0; i + 1 < m; ++i) {
                const double yi = y_[static_cast<std::size_t>(scratch_[order_[i]])];
                left_sum += yi;
                left_sq += yi * yi;
                const std::size_t n_left = i + 1;
                if (n_left < min_leaf) continue;
                if (m - n_left < min_leaf) break;
                const double lo = keys_[order_[i]];
                const double hi = keys_[order_[i + 1]];
                if (lo == hi) continue;  // no boundary between equal values
                const double nl = static_cast<double>(n_left);
                const double nr = static_cast<double>(m - n_left);
                const double right_sum = sum - left_sum;
                const double right_sq = sum_sq - left_sq;
                const double cost =
                    (left_sq - left_sum * left_sum / nl) + (right_sq - right_sum * right_sum / nr);
                if (cost < best.cost) {
                    double thr = lo + (hi - lo) / 2.0;
                    // Adjacent representable values: midpoint may round up to
                    // hi, which would leak the hi-ties into the left child.
                    if (!(thr < hi)) thr = lo;
                    best.found = true;
                    best.feature = static_cast<int>(f);
                    best.threshold = thr;
                    best.cost = cost;
                    best.n_left = n_left;
                }
            }
        }
        return best;
    }

    const Matrix& x_;
    std::span<const double> y_;
    const ForestParams& params_;
    int mtry_;
    std::vector<int> rows_;
    std::vector<std::size_t> feature_pool_;
    std::vector<int> scratch_;
    std::vector<double> keys_;
    std::vector<std::size_t> order_;
};

std::vector<int> subsample_rows(std::size_t n, std::size_t m, Rng& rng) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates; the first m entries are the subsample.
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(m);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

ForestModel fit_forest(const Matrix& x, std::span<const double> y, const ForestParams& params,
                       std::vector<std::string> feature_names, ForestTarget target) {
    const std::size_t n = x.rows;
    if (n == 0 || x.cols == 0) throw DataError("fit_forest: empty data");
    if (y.size() != n) throw DataError("fit_forest: X/y size mismatch");
    if (params.n_trees < 1) throw ConfigError("fit_forest: n_trees must be >= 1");
    if (!(params.subsample_fraction > 0.0 && params.subsample_fraction <= 1.0))
        throw ConfigError("fit_forest: subsample_fraction must be in (0,1]");
    if (params.min_leaf < 1) throw ConfigError("fit_forest: min_leaf must be >= 1");
    if (params.features_per_split > static_cast<int>(x.cols))
        throw ConfigError("fit_forest: features_per_split exceeds feature count");
    if (n < 2 * static_cast<std::size_t>(params.min_leaf))
        throw DataError("fit_forest: need at least 2*min_leaf rows");

    ForestModel model;
    model.params = params;
    model.target = target;
    model.feature_names = std::move(feature_names);
    model.y_min = *std::min_element(y.begin(), y.end());
    model.y_max = *std::max_element(y.begin(), y.end());
    if (model.y_min == model.y_max)
        model.warnings.push_back("fit_forest: constant target; all predictions equal");

    const int mtry = params.features_per_split > 0
                         ? params.features_per_split
                         : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(x.cols))));
    const std::size_t m =
        std::max<std::size_t>(1, static_cast<std::size_t>(params.subsample_fraction *
                                                          static_cast<double>(n)));
    if (m < static_cast<std::size_t>(params.min_leaf))
        throw DataError("fit_forest: subsample smaller than min_leaf");

    model.trees.resize(static_cast<std::size_t>(params.n_trees));
    parallel_for(static_cast<std::size_t>(params.n_trees), [&](std::size_t t) {
        Rng rng(derive_seed(params.seed, 0x7ee5, t));
        std::vector<int> rows = subsample_rows(n, m, rng);
        TreeBuilder builder(x, y, params, mtry);
        model.trees[t] = builder.build(std::move(rows), rng);
    });
    return model;
}

double predict_row(const ForestModel& model, std::span<const double> x) {
    double s = 0.0;
    for (const Tree& tree : model.trees) s += tree.predict_row(x);
    return s / static_cast<double>(model.trees.size());
}

std::vector<double> predict(const ForestModel& model, const Matrix& x) {
    if (!model.feature_names.empty() && x.cols != model.feature_names.size())
        throw DataError("predict: column count does not match training data");
    if (model.trees.empty()) throw DataError("predict: empty model");
    std::vector<double> out(x.rows);
    parallel_for(x.rows, [&](std::size_t i) { out[i] = predict_row(model, x.row(i)); });
    return out;
}

ForestParams cross_validate(const Matrix& x, std::span<const double> y,
                            const std::vector<ForestParams>& grid, int k_folds,
                            std::uint64_t seed, std::vector<double>* out_fold_mse) {
    if (grid.empty()) throw ConfigError("cross_validate: empty grid");
    if (k_folds < 2) throw ConfigError("cross_validate: k_folds must be >= 2");
    if (x.rows < static_cast<std::size_t>(k_folds))
        throw DataError("cross_validate: n < k_folds");

    const auto folds = make_folds(x.rows, k_folds, seed);
    std::vector<double> mse(grid.size(), 0.0);

    for (std::size_t g = 0; g < grid.size(); ++g) {
        double sse = 0.0;
        for (int k = 0; k < k_folds; ++k) {
            std::vector<int> train;
            train.reserve(x.rows);
            for (int j = 0; j < k_folds; ++j)
                if (j != k) train.insert(train.end(), folds[static_cast<std::size_t>(j)].begin(),
                                         folds[static_cast<std::size_t>(j)].end());
            std::sort(train.begin(), train.end());
            const Matrix x_train = x.select_rows(train);
            std::vector<double> y_train(train.size());
            for (std::size_t i = 0; i < train.size(); ++i)
                y_train[i] = y[static_cast<std::size_t>(train[i])];

            ForestParams p = grid[g];
            p.seed = derive_seed(seed, 0xcf, static_cast<std::uint64_t>(k));
            const ForestModel model = fit_forest(x_train, y_train, p);
            for (int row : folds[static_cast<std::size_t>(k)]) {
                const double pred = predict_row(model, x.row(static_cast<std::size_t>(row)));
                const double e = pred - y[static_cast<std::size_t>(row)];
                sse += e * e;
            }
        }
        mse[g] = sse / static_cast<double>(x.rows);
    }
    if (out_fold_mse) *out_fold_mse = mse;

    std::size_t best = 0;
    for (std::size_t g = 1; g < grid.size(); ++g) {
        if (mse[g] < mse[best] ||
            (mse[g] == mse[best] && grid[g].min_leaf < grid[best].min_leaf))
            best = g;
    }
    return grid[best];
}

void dump_forest(const ForestModel& model, std::ostream& out) {
    out << "forest trees=" << model.trees.size() << " min_leaf=" << model.params.min_leaf
        << " subsample=" << model.params.subsample_fraction << "\n";
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        out << "tree " << t << "\n";
        const auto& nodes = model.trees[t].nodes;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const TreeNode& nd = nodes[i];
            if (nd.is_leaf())
                out << "  node " << i << " leaf value=" << nd.prediction << " n=" << nd.n_leaf
                    << "\n";
            else
                out << "  node " << i << " split feature=" << nd.feature
                    << " threshold=" << nd.threshold << " left=" << nd.left
                    << " right=" << nd.right << "\n";
        }
    }
}

}  // namespace dmlkit
