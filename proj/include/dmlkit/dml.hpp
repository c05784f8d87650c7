#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dmlkit/dataset.hpp"
#include "dmlkit/forest.hpp"
#include "dmlkit/stats.hpp"

namespace dmlkit {

struct TrimBounds {
    double low = 0.01;
    double high = 0.99;
};

/// Forest configuration for the three nuisances. When tuning_grid is
/// non-empty, min_leaf (and any other grid field) is selected per training
/// complement by k-fold cross-validation, so tuning never sees held-out rows.
struct LearnerConfig {
    ForestParams params;
    std::vector<ForestParams> tuning_grid;
    int tune_folds = 5;
};

/// Cross-fitted nuisance predictions. Every entry i was produced by models
/// trained on the complement of fold_id[i].
struct NuisanceFit {
    std::vector<double> mu1_hat;
    std::vector<double> mu0_hat;
    std::vector<double> p_hat;
    std::vector<int> fold_id;
    struct TrimLog {
        std::size_t clipped_low = 0;
        std::size_t clipped_high = 0;
    } trim_log;
    TrimBounds trim;
    /// Training rows per fold model, kept for the fold-exclusion audit.
    std::vector<std::vector<int>> fold_train_rows;
    std::vector<std::string> warnings;

    std::size_t n() const { return p_hat.size(); }
};

NuisanceFit crossfit_nuisances(const Dataset& data, const LearnerConfig& learner,
                               int n_folds = 2, bool cluster_folds = false,
                               std::uint64_t seed = 0, TrimBounds trim = {});

/// True iff no observation's nuisance was predicted by a model trained on a
/// set containing it, and (cluster variant) no cluster straddles folds.
bool audit_fold_exclusion(const NuisanceFit& fit, std::string* detail = nullptr);
bool audit_cluster_folds(const NuisanceFit& fit, std::span<const std::int64_t> cluster_id,
                         std::string* detail = nullptr);

/// Doubly robust per-observation scores: mu1 - mu0 + d(y-mu1)/p - (1-d)(y-mu0)/(1-p).
struct ScoreVector {
    std::vector<double> y_star;
    std::uint64_t provenance = 0;

    std::size_t n() const { return y_star.size(); }
    std::span<const double> values() const { return y_star; }
};

ScoreVector orthogonal_scores(const Dataset& data, const NuisanceFit& nuisance);
/// Score formula applied to caller-supplied nuisances (used by oracle tests
/// and stress paths; same formula, no dataset plumbing).
ScoreVector orthogonal_scores(std::span<const double> y, std::span<const int> d,
                              std::span<const double> mu1, std::span<const double> mu0,
                              std::span<const double> p);

/// Mean of scores with an SD/sqrt(n) standard error and normal inference.
EffectEstimate ate(const ScoreVector& scores, double level = 0.90);
/// Cluster-robust variant: variance from cluster sums of centered scores with
/// the G/(G-1) correction.
EffectEstimate ate_clustered(const ScoreVector& scores, std::span<const std::int64_t> cluster_id,
                             double level = 0.90);

struct SupportReport {
    int bins = 0;
    std::vector<double> edges;  // bins + 1 edges over [0,1]
    std::vector<std::size_t> treated_counts;
    std::vector<std::size_t> control_counts;
    double min_treated = 0.0, max_treated = 0.0;
    double min_control = 0.0, max_control = 0.0;
    double share_clipped = 0.0;  // share of p_hat outside the trim bounds pre-clip
    bool support_concern = false;
    std::vector<int> flagged_bins;

    std::string to_csv() const;
};

/// Per-arm propensity histograms; flags bins holding at least 1% of one arm
/// and none of the other.
SupportReport common_support(const NuisanceFit& nuisance, std::span<const int> d, int bins);

/// Scores CSV contract: row,fold,mu0_hat,mu1_hat,p_hat,y_star.
std::string scores_to_csv(const NuisanceFit& nuisance, const ScoreVector& scores);
struct ScoresFile {
    NuisanceFit nuisance;  // trim log empty; fold_train_rows unavailable
    ScoreVector scores;
};
ScoresFile read_scores_csv(const std::string& path);

}  // namespace dmlkit
