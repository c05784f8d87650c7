#include "dmlkit/sorted_clan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dmlkit/csv.hpp"
#include "dmlkit/errors.hpp"
#include "dmlkit/parallel.hpp"
#include "dmlkit/rng.hpp"

namespace dmlkit {

namespace {

std::vector<double> quantile_curve(std::vector<double> values, std::span<const double> u) {
    std::sort(values.begin(), values.end());
    std::vector<double> out(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) out[k] = quantile_sorted(values, u[k]);
    return out;
}

std::vector<double> exponential_weights(std::size_t n, Rng& rng) {
    std::vector<double> w(n);
    for (double& v : w) v = rng.exponential();
    return w;
}

}  // namespace

SortedCurve sorted_effects(const IateFn& iate_fn, std::size_t n, int b, double level,
                           std::uint64_t seed, int grid_points) {
    if (b < 100) throw ConfigError("sorted_effects: need at least 100 bootstrap replications");
    if (n < 2) throw DataError("sorted_effects: need at least 2 observations");
    if (grid_points < 3) throw ConfigError("sorted_effects: grid too small");

    SortedCurve curve;
    curve.replications = b;
    curve.level = level;
    curve.u.resize(static_cast<std::size_t>(grid_points));
    for (int k = 0; k < grid_points; ++k)
        curve.u[static_cast<std::size_t>(k)] =
            static_cast<double>(k + 1) / static_cast<double>(grid_points + 1);

    const std::vector<double> unit(n, 1.0);
    const std::vector<double> main_iates = iate_fn(unit);
    if (main_iates.size() != n) throw DataError("sorted_effects: iate_fn returned wrong length");
    for (double v : main_iates)
        if (!std::isfinite(v)) throw NumericError("sorted_effects: non-finite IATE");
    const std::vector<double> main_curve = quantile_curve(main_iates, curve.u);

    const std::size_t m = curve.u.size();
    std::vector<std::vector<double>> boot(static_cast<std::size_t>(b));
    parallel_for(static_cast<std::size_t>(b), [&](std::size_t r) {
        Rng rng(derive_seed(seed, 0x50f7, r));
        const std::vector<double> w = exponential_weights(n, rng);
        std::vector<double> iates = iate_fn(w);
        if (iates.size() != n) throw DataError("sorted_effects: iate_fn returned wrong length");
        for (double v : iates)
            if (!std::isfinite(v))
                throw NumericError("sorted_effects: non-finite IATE in bootstrap replicate");
        boot[r] = quantile_curve(std::move(iates), curve.u);
    });

    // Bias correction: 2*main - bootstrap mean, pointwise.
    std::vector<double> boot_mean(m, 0.0), boot_sd(m, 0.0);
    for (const auto& rep : boot)
        for (std::size_t k = 0; k < m; ++k) boot_mean[k] += rep[k];
    for (double& v : boot_mean) v /= static_cast<double>(b);
    for (const auto& rep : boot)
        for (std::size_t k = 0; k < m; ++k) {
            const double d = rep[k] - boot_mean[k];
            boot_sd[k] += d * d;
        }
    for (double& v : boot_sd) v = std::sqrt(v / static_cast<double>(b - 1));

    std::vector<double> corrected(m);
    for (std::size_t k = 0; k < m; ++k) corrected[k] = 2.0 * main_curve[k] - boot_mean[k];

    // Sup-t uniform band: critical value from the bootstrap max-|t| over the
    // grid; degenerate grid points (zero dispersion) do not contribute.
    std::vector<double> sup(static_cast<std::size_t>(b), 0.0);
    for (std::size_t r = 0; r < boot.size(); ++r) {
        double worst = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            if (boot_sd[k] <= 0.0) continue;
            worst = std::max(worst, std::fabs(boot[r][k] - main_curve[k]) / boot_sd[k]);
        }
        sup[r] = worst;
    }
    std::sort(sup.begin(), sup.end());
    const double crit = quantile_sorted(sup, level);

    curve.theta = corrected;
    curve.ci_low.resize(m);
    curve.ci_high.resize(m);
    for (std::size_t k = 0; k < m; ++k) {
        curve.ci_low[k] = corrected[k] - crit * boot_sd[k];
        curve.ci_high[k] = corrected[k] + crit * boot_sd[k];
    }
    // Monotone rearrangement; sorting each curve preserves the pointwise
    // band ordering.
    std::sort(curve.theta.begin(), curve.theta.end());
    std::sort(curve.ci_low.begin(), curve.ci_low.end());
    std::sort(curve.ci_high.begin(), curve.ci_high.end());
    return curve;
}

std::string SortedCurve::to_csv() const {
    CsvWriter w({"u", "theta", "ci_low", "ci_high"});
    for (std::size_t k = 0; k < u.size(); ++k)
        w.add_row({format_full(u[k]), format_full(theta[k]), format_full(ci_low[k]),
                   format_full(ci_high[k])});
    return w.str();
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> clan_groups(
    std::span<const double> iates, double q) {
    const std::size_t n = iates.size();
    const auto m = static_cast<std::size_t>(q * static_cast<double>(n));
    if (m < 2) throw DataError("clan: groups need at least 2 observations (q*n too small)");

    std::vector<std::size_t> asc(n), desc(n);
    std::iota(asc.begin(), asc.end(), 0);
    std::iota(desc.begin(), desc.end(), 0);
    std::stable_sort(asc.begin(), asc.end(),
                     [&](std::size_t a, std::size_t b) { return iates[a] < iates[b]; });
    std::stable_sort(desc.begin(), desc.end(),
                     [&](std::size_t a, std::size_t b) { return iates[a] > iates[b]; });
    std::vector<std::size_t> most(desc.begin(), desc.begin() + static_cast<std::ptrdiff_t>(m));
    std::vector<std::size_t> least(asc.begin(), asc.begin() + static_cast<std::ptrdiff_t>(m));
    return {most, least};
}

namespace {

/// Bootstrap analogue of the group contrast: groups are the observations
/// beyond the weighted (1-q)/q quantiles of the replicate's effects, and the
/// group means are weighted.
double weighted_clan_estimate(std::span<const double> iates, std::span<const double> x,
                              std::span<const double> w, double q) {
    const double hi = weighted_quantile(iates, w, 1.0 - q);
    const double lo = weighted_quantile(iates, w, q);
    double num_hi = 0.0, den_hi = 0.0, num_lo = 0.0, den_lo = 0.0;
    for (std::size_t i = 0; i < iates.size(); ++i) {
        if (iates[i] >= hi) {
            num_hi += w[i] * x[i];
            den_hi += w[i];
        }
        if (iates[i] <= lo) {
            num_lo += w[i] * x[i];
            den_lo += w[i];
        }
    }
    if (den_hi <= 0.0 || den_lo <= 0.0) return 0.0;
    return num_hi / den_hi - num_lo / den_lo;
}

}  // namespace

ClanTable clan(std::span<const double> iates, const Matrix& characteristics,
               const std::vector<std::string>& names, double q, int b, std::uint64_t seed,
               ClanBootstrapMode mode, const IateFn* iate_fn) {
    const std::size_t n = iates.size();
    const std::size_t k = characteristics.cols;
    if (characteristics.rows != n) throw DataError("clan: characteristics row count mismatch");
    if (names.size() != k) throw DataError("clan: name count mismatch");
    if (k == 0) throw ConfigError("clan: no characteristics given");
    if (!(q > 0.0 && q <= 0.5)) throw ConfigError("clan: q must be in (0, 0.5]");
    if (b < 100) throw ConfigError("clan: need at least 100 bootstrap replications");
    if (mode == ClanBootstrapMode::reestimate && iate_fn == nullptr)
        throw ConfigError("clan: reestimate mode needs an iate_fn");

    auto [most, least] = clan_groups(iates, q);
    std::vector<double> estimate(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        double hi = 0.0, lo = 0.0;
        for (std::size_t i : most) hi += characteristics(i, j);
        for (std::size_t i : least) lo += characteristics(i, j);
        estimate[j] = hi / static_cast<double>(most.size()) -
                      lo / static_cast<double>(least.size());
    }

    // Bootstrap estimates per characteristic.
    Matrix boot(static_cast<std::size_t>(b), k);
    parallel_for(static_cast<std::size_t>(b), [&](std::size_t r) {
        Rng rng(derive_seed(seed, 0xc7a2, r));
        std::vector<double> w(n);
        for (double& v : w) v = rng.exponential();
        std::vector<double> effects;
        std::span<const double> eff = iates;
        if (mode == ClanBootstrapMode::reestimate) {
            effects = (*iate_fn)(w);
            if (effects.size() != n) throw DataError("clan: iate_fn returned wrong length");
            eff = effects;
        }
        for (std::size_t j = 0; j < k; ++j) {
            std::vector<double> col(n);
            for (std::size_t i = 0; i < n; ++i) col[i] = characteristics(i, j);
            boot(r, j) = weighted_clan_estimate(eff, col, w, q);
        }
    });

    std::vector<double> se(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        std::vector<double> col(static_cast<std::size_t>(b));
        for (std::size_t r = 0; r < col.size(); ++r) col[r] = boot(r, j);
        se[j] = sample_sd(col);
    }

    // Bootstrap-t: centered replicate statistics; max over characteristics
    // gives the joint reference, so joint p >= pointwise p by construction.
    const double eps = 1e-12;
    std::vector<double> t_obs(k, 0.0);
    for (std::size_t j = 0; j < k; ++j)
        t_obs[j] = se[j] > eps ? std::fabs(estimate[j]) / se[j] : 0.0;

    std::vector<std::size_t> point_count(k, 0), joint_count(k, 0);
    for (std::size_t r = 0; r < static_cast<std::size_t>(b); ++r) {
        double max_t = 0.0;
        std::vector<double> t_rep(k, 0.0);
        for (std::size_t j = 0; j < k; ++j) {
            if (se[j] <= eps) continue;
            t_rep[j] = std::fabs(boot(r, j) - estimate[j]) / se[j];
            max_t = std::max(max_t, t_rep[j]);
        }
        for (std::size_t j = 0; j < k; ++j) {
            if (t_rep[j] >= t_obs[j]) ++point_count[j];
            if (max_t >= t_obs[j]) ++joint_count[j];
        }
    }

    ClanTable table;
    table.q = q;
    table.replications = b;
    for (std::size_t j = 0; j < k; ++j) {
        ClanRow row;
        row.name = names[j];
        row.estimate = estimate[j];
        row.std_error = se[j];
        if (se[j] <= eps) {
            // Degenerate characteristic: no evidence either way.
            row.p_value = 1.0;
            row.joint_p_value = 1.0;
        } else {
            row.p_value = static_cast<double>(point_count[j]) / static_cast<double>(b);
            row.joint_p_value = static_cast<double>(joint_count[j]) / static_cast<double>(b);
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string ClanTable::to_csv() const {
    CsvWriter w({"characteristic", "estimate", "std_error", "joint_p_value", "p_value"});
    for (const auto& r : rows)
        w.add_row({r.name, format_full(r.estimate), format_full(r.std_error),
                   format_short(r.joint_p_value), format_short(r.p_value)});
    return w.str();
}

}  // namespace dmlkit
