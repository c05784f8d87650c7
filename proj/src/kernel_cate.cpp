#include "dmlkit/kernel_cate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dmlkit/csv.hpp"
#include "dmlkit/errors.hpp"
#include "dmlkit/parallel.hpp"
#include "dmlkit/rng.hpp"

namespace dmlkit {

namespace {

inline double kernel_value(KernelType kernel, double u) {
    switch (kernel) {
        case KernelType::gaussian: return std::exp(-0.5 * u * u);
        case KernelType::epanechnikov: {
            const double t = 1.0 - u * u;
            return t > 0.0 ? 0.75 * t : 0.0;
        }
    }
    return 0.0;
}

/// Product kernel over dims; constant factors cancel in the N-W ratio.
inline double weight_at(KernelType kernel, std::span<const double> zi,
                        std::span<const double> point, std::span<const double> h) {
    double w = 1.0;
    for (std::size_t d = 0; d < h.size(); ++d) w *= kernel_value(kernel, (zi[d] - point[d]) / h[d]);
    return w;
}

void check_z(const Matrix& z, std::size_t n) {
    if (z.rows != n) throw DataError("kernel: z row count mismatch");
    if (z.cols < 1 || z.cols > 2)
        throw ConfigError("kernel: heterogeneity dimension must be 1 or 2");
    for (std::size_t j = 0; j < z.cols; ++j) {
        double lo = z(0, j), hi = z(0, j);
        for (std::size_t i = 1; i < z.rows; ++i) {
            lo = std::min(lo, z(i, j));
            hi = std::max(hi, z(i, j));
        }
        if (!(hi > lo)) throw NumericError("kernel: degenerate z dimension (zero variance)");
    }
}

}  // namespace

std::vector<double> cv_bandwidth(const ScoreVector& scores, const Matrix& z, KernelType kernel,
                                 const std::vector<std::vector<double>>& h_grid, int k_folds,
                                 std::uint64_t seed, std::vector<double>* out_mse) {
    const std::size_t n = scores.n();
    check_z(z, n);
    if (h_grid.empty()) throw ConfigError("cv_bandwidth: empty bandwidth grid");
    for (const auto& h : h_grid) {
        if (h.size() != z.cols) throw ConfigError("cv_bandwidth: grid entry dimension mismatch");
        for (double v : h)
            if (!(v > 0.0)) throw ConfigError("cv_bandwidth: bandwidths must be positive");
    }
    if (k_folds < 2) throw ConfigError("cv_bandwidth: k_folds must be >= 2");

    const auto folds = make_folds(n, k_folds, seed);
    std::vector<int> fold_of(n, -1);
    for (std::size_t k = 0; k < folds.size(); ++k)
        for (int row : folds[k]) fold_of[static_cast<std::size_t>(row)] = static_cast<int>(k);

    const double fallback = mean(scores.y_star);
    std::vector<double> mse(h_grid.size(), 0.0);
    for (std::size_t g = 0; g < h_grid.size(); ++g) {
        const auto& h = h_grid[g];
        std::vector<double> sse_at(n, 0.0);
        parallel_for(n, [&](std::size_t i) {
            double num = 0.0, den = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (fold_of[j] == fold_of[i]) continue;  // out-of-fold prediction
                const double w = weight_at(kernel, z.row(j), z.row(i), h);
                num += w * scores.y_star[j];
                den += w;
            }
            const double pred = den > 0.0 ? num / den : fallback;
            const double e = pred - scores.y_star[i];
            sse_at[i] = e * e;
        });
        double sse = 0.0;
        for (double v : sse_at) sse += v;
        mse[g] = sse / static_cast<double>(n);
    }
    if (out_mse) *out_mse = mse;

    std::size_t best = 0;
    for (std::size_t g = 1; g < h_grid.size(); ++g) {
        if (mse[g] < mse[best] ||
            (mse[g] == mse[best] &&
             std::lexicographical_compare(h_grid[g].begin(), h_grid[g].end(),
                                          h_grid[best].begin(), h_grid[best].end())))
            best = g;
    }
    return h_grid[best];
}

std::vector<std::vector<double>> default_bandwidth_grid(const Matrix& z) {
    std::vector<double> pilot(z.cols);
    for (std::size_t j = 0; j < z.cols; ++j) {
        std::vector<double> col(z.rows);
        for (std::size_t i = 0; i < z.rows; ++i) col[i] = z(i, j);
        const double sd = sample_sd(col);
        if (!(sd > 0.0)) throw NumericError("default_bandwidth_grid: degenerate z dimension");
        pilot[j] = 1.06 * sd * std::pow(static_cast<double>(z.rows), -0.2);
    }
    static const double multipliers[] = {0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
    std::vector<std::vector<double>> grid;
    for (double m : multipliers) {
        std::vector<double> h(z.cols);
        for (std::size_t j = 0; j < z.cols; ++j) h[j] = m * pilot[j];
        grid.push_back(std::move(h));
    }
    return grid;
}

CateCurve kernel_cate(const ScoreVector& scores, const Matrix& z, const KernelSpec& spec,
                      const Matrix& eval_grid, double level, double ess_floor) {
    const std::size_t n = scores.n();
    check_z(z, n);
    if (spec.bandwidth.size() != z.cols)
        throw ConfigError("kernel_cate: bandwidth dimension mismatch");
    for (double h : spec.bandwidth)
        if (!(h > 0.0)) throw ConfigError("kernel_cate: bandwidth must be positive");
    if (!(spec.undersmooth > 0.0 && spec.undersmooth <= 1.0))
        throw ConfigError("kernel_cate: undersmoothing factor must be in (0,1]");
    if (eval_grid.cols != z.cols) throw ConfigError("kernel_cate: grid dimension mismatch");

    std::vector<double> h(spec.bandwidth);
    for (double& v : h) v *= spec.undersmooth;

    const std::size_t m = eval_grid.rows;
    CateCurve curve;
    curve.grid = eval_grid;
    curve.level = level;
    curve.theta.assign(m, std::numeric_limits<double>::quiet_NaN());
    curve.ci_low.assign(m, std::numeric_limits<double>::quiet_NaN());
    curve.ci_high.assign(m, std::numeric_limits<double>::quiet_NaN());
    curve.ess.assign(m, 0.0);
    curve.available.assign(m, false);

    const double zq = normal_quantile(0.5 + level / 2.0);
    std::vector<char> avail(m, 0);
    parallel_for(m, [&](std::size_t g) {
        double sw = 0.0, swy = 0.0, sw2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = weight_at(spec.kernel, z.row(i), eval_grid.row(g), h);
            sw += w;
            sw2 += w * w;
            swy += w * scores.y_star[i];
        }
        const double ess = sw2 > 0.0 ? sw * sw / sw2 : 0.0;
        curve.ess[g] = ess;
        if (!(ess >= ess_floor)) return;
        const double theta = swy / sw;
        double swe2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = weight_at(spec.kernel, z.row(i), eval_grid.row(g), h);
            const double e = scores.y_star[i] - theta;
            swe2 += w * e * e;
        }
        const double sigma2 = swe2 / sw;
        const double var = sigma2 * sw2 / (sw * sw);
        const double half = zq * std::sqrt(var);
        curve.theta[g] = theta;
        curve.ci_low[g] = theta - half;
        curve.ci_high[g] = theta + half;
        avail[g] = 1;
    });
    for (std::size_t g = 0; g < m; ++g) curve.available[g] = avail[g] != 0;
    return curve;
}

std::pair<CateCurve, CateCurve> gate_curve_by_group(const ScoreVector& scores, const Matrix& z,
                                                    std::span<const int> group,
                                                    const GroupCurveSpec& spec,
                                                    const Matrix& eval_grid) {
    const std::size_t n = scores.n();
    if (group.size() != n) throw DataError("gate_curve_by_group: group length mismatch");

    std::pair<CateCurve, CateCurve> out;
    for (int g = 0; g <= 1; ++g) {
        std::vector<int> rows;
        for (std::size_t i = 0; i < n; ++i)
            if ((group[i] != 0) == (g == 1)) rows.push_back(static_cast<int>(i));
        if (rows.empty())
            throw NumericError("gate_curve_by_group: group " + std::to_string(g) + " is empty");

        ScoreVector sub;
        sub.y_star.reserve(rows.size());
        for (int r : rows) sub.y_star.push_back(scores.y_star[static_cast<std::size_t>(r)]);
        sub.provenance = scores.provenance;
        const Matrix z_sub = z.select_rows(rows);

        const auto grid = spec.h_grid.empty() ? default_bandwidth_grid(z_sub) : spec.h_grid;
        const std::vector<double> h =
            cv_bandwidth(sub, z_sub, spec.kernel, grid, spec.cv_folds,
                         derive_seed(spec.seed, 0x96, static_cast<std::uint64_t>(g)));
        KernelSpec ks;
        ks.kernel = spec.kernel;
        ks.bandwidth = h;
        ks.undersmooth = spec.undersmooth;
        CateCurve curve = kernel_cate(sub, z_sub, ks, eval_grid, spec.level, spec.ess_floor);
        if (g == 0)
            out.first = std::move(curve);
        else
            out.second = std::move(curve);
    }
    return out;
}

Matrix make_eval_grid(std::span<const double> z, std::size_t points, double lo_q, double hi_q) {
    if (points < 2) throw ConfigError("make_eval_grid: need at least 2 points");
    const double lo = quantile(z, lo_q);
    const double hi = quantile(z, hi_q);
    if (!(hi > lo)) throw NumericError("make_eval_grid: degenerate z range");
    Matrix grid(points, 1);
    for (std::size_t i = 0; i < points; ++i)
        grid(i, 0) = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    return grid;
}

std::string CateCurve::to_csv(const std::vector<std::string>& z_names) const {
    std::vector<std::string> header(z_names);
    header.insert(header.end(), {"theta", "ci_low", "ci_high", "ess"});
    CsvWriter w(header);
    for (std::size_t g = 0; g < grid.rows; ++g) {
        std::vector<std::string> row;
        for (std::size_t j = 0; j < grid.cols; ++j) row.push_back(format_full(grid(g, j)));
        if (available[g]) {
            row.push_back(format_full(theta[g]));
            row.push_back(format_full(ci_low[g]));
            row.push_back(format_full(ci_high[g]));
        } else {
            row.insert(row.end(), {"", "", ""});
        }
        row.push_back(format_short(ess[g]));
        w.add_row(std::move(row));
    }
    return w.str();
}

}  // namespace dmlkit
