#include "dmlkit/dml.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "dmlkit/csv.hpp"
#include "dmlkit/errors.hpp"
#include "dmlkit/parallel.hpp"
#include "dmlkit/rng.hpp"

namespace dmlkit {

namespace {

/// Observation-level folds: shuffled round-robin. Cluster folds: shuffled
/// clusters assigned greedily to the currently smallest fold, so no cluster
/// straddles folds and sizes stay balanced.
std::vector<std::vector<int>> crossfit_folds(const Dataset& data, int n_folds,
                                             bool cluster_folds, std::uint64_t seed) {
    const std::size_t n = data.n();
    if (!cluster_folds) return make_folds(n, n_folds, seed);

    std::map<std::int64_t, std::vector<int>> by_cluster;
    for (std::size_t i = 0; i < n; ++i)
        by_cluster[data.cluster_id()[i]].push_back(static_cast<int>(i));
    if (by_cluster.size() < static_cast<std::size_t>(n_folds))
        throw NumericError("crossfit: fewer clusters than folds");

    std::vector<std::int64_t> clusters;
    clusters.reserve(by_cluster.size());
    for (const auto& [id, rows] : by_cluster) clusters.push_back(id);
    Rng rng(derive_seed(seed, 0xc105));
    rng.shuffle(clusters);

    std::vector<std::vector<int>> folds(static_cast<std::size_t>(n_folds));
    for (std::int64_t id : clusters) {
        std::size_t smallest = 0;
        for (std::size_t k = 1; k < folds.size(); ++k)
            if (folds[k].size() < folds[smallest].size()) smallest = k;
        const auto& rows = by_cluster[id];
        folds[smallest].insert(folds[smallest].end(), rows.begin(), rows.end());
    }
    return folds;
}

ForestParams pick_params(const Matrix& x_train, std::span<const double> y_train,
                         const LearnerConfig& learner, std::uint64_t seed) {
    if (learner.tuning_grid.empty()) return learner.params;
    return cross_validate(x_train, y_train, learner.tuning_grid, learner.tune_folds, seed);
}

}  // namespace

NuisanceFit crossfit_nuisances(const Dataset& data, const LearnerConfig& learner, int n_folds,
                               bool cluster_folds, std::uint64_t seed, TrimBounds trim) {
    if (n_folds < 2) throw ConfigError("crossfit: need at least 2 folds");
    if (!(trim.low > 0.0 && trim.high < 1.0 && trim.low < trim.high))
        throw ConfigError("crossfit: trim bounds must satisfy 0 < low < high < 1");

    const std::size_t n = data.n();
    const auto folds = crossfit_folds(data, n_folds, cluster_folds, seed);

    NuisanceFit fit;
    fit.mu1_hat.assign(n, 0.0);
    fit.mu0_hat.assign(n, 0.0);
    fit.p_hat.assign(n, 0.0);
    fit.fold_id.assign(n, -1);
    fit.trim = trim;
    fit.fold_train_rows.resize(folds.size());

    for (std::size_t k = 0; k < folds.size(); ++k)
        for (int row : folds[k]) fit.fold_id[static_cast<std::size_t>(row)] = static_cast<int>(k);

    const auto y = data.y();
    const auto d = data.d();

    // Per-fold training complements, checked up front so the error points at
    // the offending fold before any forest is grown.
    std::vector<std::vector<int>> complements(folds.size());
    for (std::size_t k = 0; k < folds.size(); ++k) {
        auto& train = complements[k];
        train.reserve(n - folds[k].size());
        for (std::size_t j = 0; j < folds.size(); ++j)
            if (j != k) train.insert(train.end(), folds[j].begin(), folds[j].end());
        std::sort(train.begin(), train.end());
        std::size_t treated = 0;
        for (int row : train) treated += static_cast<std::size_t>(d[static_cast<std::size_t>(row)]);
        if (treated == 0 || treated == train.size())
            throw NumericError(
                "crossfit: training complement of fold " + std::to_string(k) +
                " has an empty treatment arm; re-seed the fold split or provide more data");
        fit.fold_train_rows[k] = train;
    }

    struct FoldOutput {
        std::vector<double> mu1, mu0, p;
    };
    std::vector<FoldOutput> outputs(folds.size());

    parallel_for(folds.size(), [&](std::size_t k) {
        const auto& train = complements[k];
        std::vector<int> train_treated, train_control;
        for (int row : train)
            (d[static_cast<std::size_t>(row)] ? train_treated : train_control).push_back(row);

        const Matrix x_all = data.x().select_rows(train);
        const Matrix x_t = data.x().select_rows(train_treated);
        const Matrix x_c = data.x().select_rows(train_control);

        auto gather_y = [&](const std::vector<int>& rows) {
            std::vector<double> out(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i)
                out[i] = y[static_cast<std::size_t>(rows[i])];
            return out;
        };
        std::vector<double> y_t = gather_y(train_treated);
        std::vector<double> y_c = gather_y(train_control);
        std::vector<double> d_all(train.size());
        for (std::size_t i = 0; i < train.size(); ++i)
            d_all[i] = d[static_cast<std::size_t>(train[i])];

        const std::uint64_t fold_seed = derive_seed(seed, 0xf01d, k);

        ForestParams p1 = pick_params(x_t, y_t, learner, derive_seed(fold_seed, 1));
        p1.seed = derive_seed(fold_seed, 0xa1);
        ForestParams p0 = pick_params(x_c, y_c, learner, derive_seed(fold_seed, 2));
        p0.seed = derive_seed(fold_seed, 0xa0);
        ForestParams pp = pick_params(x_all, d_all, learner, derive_seed(fold_seed, 3));
        pp.seed = derive_seed(fold_seed, 0xad);

        const ForestModel m1 = fit_forest(x_t, y_t, p1, {}, ForestTarget::mu1);
        const ForestModel m0 = fit_forest(x_c, y_c, p0, {}, ForestTarget::mu0);
        const ForestModel mp = fit_forest(x_all, d_all, pp, {}, ForestTarget::propensity);

        auto& out = outputs[k];
        out.mu1.resize(folds[k].size());
        out.mu0.resize(folds[k].size());
        out.p.resize(folds[k].size());
        for (std::size_t i = 0; i < folds[k].size(); ++i) {
            const auto row = static_cast<std::size_t>(folds[k][i]);
            out.mu1[i] = predict_row(m1, data.x().row(row));
            out.mu0[i] = predict_row(m0, data.x().row(row));
            out.p[i] = predict_row(mp, data.x().row(row));
        }
    });

    for (std::size_t k = 0; k < folds.size(); ++k) {
        for (std::size_t i = 0; i < folds[k].size(); ++i) {
            const auto row = static_cast<std::size_t>(folds[k][i]);
            fit.mu1_hat[row] = outputs[k].mu1[i];
            fit.mu0_hat[row] = outputs[k].mu0[i];
            double p = outputs[k].p[i];
            if (p < trim.low) {
                p = trim.low;
                ++fit.trim_log.clipped_low;
            } else if (p > trim.high) {
                p = trim.high;
                ++fit.trim_log.clipped_high;
            }
            fit.p_hat[row] = p;
        }
    }
    if (fit.trim_log.clipped_low + fit.trim_log.clipped_high > 0) {
        std::ostringstream msg;
        msg << "propensity clipped to [" << trim.low << "," << trim.high
            << "]: " << fit.trim_log.clipped_low << " low, " << fit.trim_log.clipped_high
            << " high";
        fit.warnings.push_back(msg.str());
    }
    return fit;
}

bool audit_fold_exclusion(const NuisanceFit& fit, std::string* detail) {
    if (fit.fold_train_rows.empty()) {
        if (detail) *detail = "no training-row record available";
        return false;
    }
    for (std::size_t i = 0; i < fit.n(); ++i) {
        const int k = fit.fold_id[i];
        if (k < 0 || static_cast<std::size_t>(k) >= fit.fold_train_rows.size()) {
            if (detail) *detail = "row " + std::to_string(i) + " has no fold";
            return false;
        }
        const auto& train = fit.fold_train_rows[static_cast<std::size_t>(k)];
        if (std::binary_search(train.begin(), train.end(), static_cast<int>(i))) {
            if (detail)
                *detail = "row " + std::to_string(i) + " appears in its own training set";
            return false;
        }
    }
    return true;
}

bool audit_cluster_folds(const NuisanceFit& fit, std::span<const std::int64_t> cluster_id,
                         std::string* detail) {
    std::map<std::int64_t, int> seen;
    for (std::size_t i = 0; i < fit.n(); ++i) {
        auto [it, inserted] = seen.emplace(cluster_id[i], fit.fold_id[i]);
        if (!inserted && it->second != fit.fold_id[i]) {
            if (detail)
                *detail = "cluster " + std::to_string(cluster_id[i]) + " straddles folds";
            return false;
        }
    }
    return true;
}

ScoreVector orthogonal_scores(std::span<const double> y, std::span<const int> d,
                              std::span<const double> mu1, std::span<const double> mu0,
                              std::span<const double> p) {
    const std::size_t n = y.size();
    if (d.size() != n || mu1.size() != n || mu0.size() != n || p.size() != n)
        throw DataError("orthogonal_scores: length mismatch");
    ScoreVector scores;
    scores.y_star.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(p[i] > 0.0 && p[i] < 1.0))
            throw NumericError("orthogonal_scores: propensity outside (0,1) at row " +
                               std::to_string(i));
        const double level = mu1[i] - mu0[i];
        const double correction = d[i] ? (y[i] - mu1[i]) / p[i]
                                       : -(y[i] - mu0[i]) / (1.0 - p[i]);
        scores.y_star[i] = level + correction;
        if (!std::isfinite(scores.y_star[i]))
            throw NumericError("orthogonal_scores: non-finite score at row " + std::to_string(i));
    }
    std::uint64_t h = hash_doubles(mu1);
    h = hash_doubles(mu0, h);
    h = hash_doubles(p, h);
    h = hash_doubles(y, h);
    h = hash_bytes(d.data(), d.size() * sizeof(int), h);
    scores.provenance = h;
    return scores;
}

ScoreVector orthogonal_scores(const Dataset& data, const NuisanceFit& nuisance) {
    if (nuisance.n() != data.n()) throw DataError("orthogonal_scores: nuisance/data length mismatch");
    return orthogonal_scores(data.y(), data.d(), nuisance.mu1_hat, nuisance.mu0_hat,
                             nuisance.p_hat);
}

EffectEstimate ate(const ScoreVector& scores, double level) {
    const std::size_t n = scores.n();
    if (n < 2) throw NumericError("ate: need at least 2 scores");
    const double est = mean(scores.y_star);
    const double se = sample_sd(scores.y_star) / std::sqrt(static_cast<double>(n));
    return make_effect_estimate(est, se, level, n);
}

EffectEstimate ate_clustered(const ScoreVector& scores, std::span<const std::int64_t> cluster_id,
                             double level) {
    const std::size_t n = scores.n();
    if (n < 2) throw NumericError("ate: need at least 2 scores");
    if (cluster_id.size() != n) throw DataError("ate_clustered: cluster id length mismatch");
    const double est = mean(scores.y_star);
    std::map<std::int64_t, double> sums;
    for (std::size_t i = 0; i < n; ++i) sums[cluster_id[i]] += scores.y_star[i] - est;
    const std::size_t g = sums.size();
    if (g < 2) throw NumericError("ate_clustered: need at least 2 clusters");
    double meat = 0.0;
    for (const auto& [id, s] : sums) meat += s * s;
    const double gd = static_cast<double>(g);
    const double var = meat * (gd / (gd - 1.0)) / (static_cast<double>(n) * static_cast<double>(n));
    return make_effect_estimate(est, std::sqrt(var), level, n);
}

SupportReport common_support(const NuisanceFit& nuisance, std::span<const int> d, int bins) {
    if (bins < 1) throw ConfigError("common_support: bins must be >= 1");
    if (d.size() != nuisance.n()) throw DataError("common_support: treatment length mismatch");
    SupportReport report;
    report.bins = bins;
    report.edges.resize(static_cast<std::size_t>(bins) + 1);
    for (int b = 0; b <= bins; ++b)
        report.edges[static_cast<std::size_t>(b)] = static_cast<double>(b) / bins;
    report.treated_counts.assign(static_cast<std::size_t>(bins), 0);
    report.control_counts.assign(static_cast<std::size_t>(bins), 0);

    const std::size_t n = nuisance.n();
    std::size_t n1 = 0, n0 = 0;
    report.min_treated = report.min_control = 1.0;
    report.max_treated = report.max_control = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = nuisance.p_hat[i];
        auto b = static_cast<std::size_t>(std::min<int>(bins - 1, static_cast<int>(p * bins)));
        if (d[i]) {
            ++report.treated_counts[b];
            ++n1;
            report.min_treated = std::min(report.min_treated, p);
            report.max_treated = std::max(report.max_treated, p);
        } else {
            ++report.control_counts[b];
            ++n0;
            report.min_control = std::min(report.min_control, p);
            report.max_control = std::max(report.max_control, p);
        }
    }
    report.share_clipped =
        static_cast<double>(nuisance.trim_log.clipped_low + nuisance.trim_log.clipped_high) /
        static_cast<double>(n);

    for (int b = 0; b < bins; ++b) {
        const auto bi = static_cast<std::size_t>(b);
        const double share1 = n1 ? static_cast<double>(report.treated_counts[bi]) / n1 : 0.0;
        const double share0 = n0 ? static_cast<double>(report.control_counts[bi]) / n0 : 0.0;
        const bool concern = (share1 >= 0.01 && report.control_counts[bi] == 0) ||
                             (share0 >= 0.01 && report.treated_counts[bi] == 0);
        if (concern) {
            report.support_concern = true;
            report.flagged_bins.push_back(b);
        }
    }
    return report;
}

std::string SupportReport::to_csv() const {
    CsvWriter w({"bin_low", "bin_high", "treated_count", "control_count", "flagged"});
    for (int b = 0; b < bins; ++b) {
        const auto bi = static_cast<std::size_t>(b);
        const bool flagged =
            std::find(flagged_bins.begin(), flagged_bins.end(), b) != flagged_bins.end();
        w.add_row({format_short(edges[bi]), format_short(edges[bi + 1]),
                   std::to_string(treated_counts[bi]), std::to_string(control_counts[bi]),
                   flagged ? "1" : "0"});
    }
    return w.str();
}

std::string scores_to_csv(const NuisanceFit& nuisance, const ScoreVector& scores) {
    if (nuisance.n() != scores.n()) throw DataError("scores_to_csv: length mismatch");
    CsvWriter w({"row", "fold", "mu0_hat", "mu1_hat", "p_hat", "y_star"});
    for (std::size_t i = 0; i < scores.n(); ++i) {
        w.add_row({std::to_string(i), std::to_string(nuisance.fold_id[i]),
                   format_full(nuisance.mu0_hat[i]), format_full(nuisance.mu1_hat[i]),
                   format_full(nuisance.p_hat[i]), format_full(scores.y_star[i])});
    }
    return w.str();
}

ScoresFile read_scores_csv(const std::string& path) {
    const CsvTable table = read_csv(path);
    const std::vector<std::string> expected = {"row",     "fold",  "mu0_hat",
                                               "mu1_hat", "p_hat", "y_star"};
    if (table.header != expected)
        throw DataError("scores file has unexpected header: " + path);
    ScoresFile out;
    const std::size_t n = table.rows.size();
    out.nuisance.mu0_hat.resize(n);
    out.nuisance.mu1_hat.resize(n);
    out.nuisance.p_hat.resize(n);
    out.nuisance.fold_id.resize(n);
    out.scores.y_star.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& row = table.rows[i];
        if (row.size() != expected.size())
            throw DataError("scores file: malformed row " + std::to_string(i + 1));
        auto to_d = [&](const std::string& s) {
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc() || ptr != s.data() + s.size())
                throw DataError("scores file: bad number `" + s + "`");
            return v;
        };
        out.nuisance.fold_id[i] = static_cast<int>(to_d(row[1]));
        out.nuisance.mu0_hat[i] = to_d(row[2]);
        out.nuisance.mu1_hat[i] = to_d(row[3]);
        out.nuisance.p_hat[i] = to_d(row[4]);
        out.scores.y_star[i] = to_d(row[5]);
    }
    std::uint64_t h = hash_doubles(out.nuisance.mu1_hat);
    h = hash_doubles(out.nuisance.mu0_hat, h);
    h = hash_doubles(out.nuisance.p_hat, h);
    out.scores.provenance = hash_doubles(out.scores.y_star, h);
    return out;
}

}  // namespace dmlkit
