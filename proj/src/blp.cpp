#include "dmlkit/blp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "dmlkit/csv.hpp"
#include "dmlkit/errors.hpp"

namespace dmlkit {

double BlpFit::std_error(std::size_t j) const { return std::sqrt(covariance(j, j)); }

EffectEstimate BlpFit::term_estimate(std::size_t j) const {
    return make_effect_estimate(beta[j], std_error(j), level, n);
}

std::size_t BlpFit::term_index(const std::string& name) const {
    for (std::size_t j = 0; j < terms.size(); ++j)
        if (terms[j] == name) return j;
    throw ConfigError("blp: unknown term " + name);
}

namespace {

constexpr double kCollinearR2 = 1.0 - 1e-10;

/// Columns to keep: greedy scan dropping any column whose projection R^2 on
/// the already-kept columns exceeds the tolerance.
std::vector<std::size_t> screen_collinear(const Eigen::MatrixXd& design,
                                          std::vector<std::string>& names,
                                          std::vector<std::string>& dropped) {
    std::vector<std::size_t> keep;
    Eigen::MatrixXd kept(design.rows(), 0);
    std::vector<std::string> kept_names;
    for (Eigen::Index j = 0; j < design.cols(); ++j) {
        const Eigen::VectorXd col = design.col(j);
        const double total = col.squaredNorm();
        bool collinear = false;
        if (total <= 0.0) {
            collinear = true;  // all-zero column
        } else if (kept.cols() > 0) {
            const Eigen::VectorXd resid = col - kept * kept.colPivHouseholderQr().solve(col);
            const double r2 = 1.0 - resid.squaredNorm() / total;
            collinear = r2 > kCollinearR2;
        }
        if (collinear) {
            dropped.push_back(names[static_cast<std::size_t>(j)]);
        } else {
            keep.push_back(static_cast<std::size_t>(j));
            kept.conservativeResize(Eigen::NoChange, kept.cols() + 1);
            kept.col(kept.cols() - 1) = col;
            kept_names.push_back(names[static_cast<std::size_t>(j)]);
        }
    }
    names = kept_names;
    return keep;
}

}  // namespace

BlpFit blp_fit(const ScoreVector& scores, const Matrix& z,
               const std::vector<std::string>& z_names, const BlpOptions& options,
               std::span<const std::int64_t> cluster_id, std::span<const double> weights) {
    const std::size_t n = scores.n();
    if (z.rows != 0 && z.rows != n) throw DataError("blp_fit: design row count mismatch");
    if (z.cols != z_names.size()) throw DataError("blp_fit: design name count mismatch");
    if (!weights.empty() && weights.size() != n) throw DataError("blp_fit: weights length mismatch");
    if (options.se_type == SeType::cluster_robust && cluster_id.size() != n)
        throw ConfigError("blp_fit: cluster-robust errors requested without cluster ids");
    if (n < z.cols + 2) throw NumericError("blp_fit: too few observations for the design");

    const std::size_t q_in = z.cols + 1;
    Eigen::MatrixXd design(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(q_in));
    design.col(0).setOnes();
    for (std::size_t j = 0; j < z.cols; ++j)
        for (std::size_t i = 0; i < n; ++i)
            design(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j + 1)) = z(i, j);

    std::vector<std::string> names;
    names.reserve(q_in);
    names.emplace_back("const");
    names.insert(names.end(), z_names.begin(), z_names.end());

    std::vector<std::string> dropped;
    const std::vector<std::size_t> keep = screen_collinear(design, names, dropped);
    if (!dropped.empty() && !options.drop_collinear) {
        std::ostringstream msg;
        msg << "blp_fit: design is rank deficient; collinear columns:";
        for (const auto& name : dropped) msg << ' ' << name;
        throw NumericError(msg.str());
    }
    Eigen::MatrixXd x(design.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j)
        x.col(static_cast<Eigen::Index>(j)) = design.col(static_cast<Eigen::Index>(keep[j]));

    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) y(static_cast<Eigen::Index>(i)) = scores.y_star[i];

    // Weighted rows: scale both sides by sqrt(w). Used by the multiplier
    // bootstrap; inference fields are only reported for unit weights.
    Eigen::MatrixXd xw = x;
    Eigen::VectorXd yw = y;
    if (!weights.empty()) {
        for (std::size_t i = 0; i < n; ++i) {
            const double s = std::sqrt(std::max(0.0, weights[i]));
            xw.row(static_cast<Eigen::Index>(i)) *= s;
            yw(static_cast<Eigen::Index>(i)) *= s;
        }
    }

    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xw);
    const Eigen::VectorXd beta = qr.solve(yw);
    const Eigen::VectorXd resid = yw - xw * beta;

    const auto q = static_cast<std::size_t>(x.cols());
    const double nd = static_cast<double>(n);
    const double qd = static_cast<double>(q);

    // Bread: (X'X)^-1, formed after the collinearity screen has certified
    // the design as well conditioned.
    const Eigen::MatrixXd xtx = xw.transpose() * xw;
    const Eigen::MatrixXd bread = xtx.ldlt().solve(Eigen::MatrixXd::Identity(
        static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q)));

    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(q),
                                                 static_cast<Eigen::Index>(q));
    std::size_t n_clusters = 0;
    double factor = 1.0;
    if (options.se_type == SeType::heteroscedasticity_robust) {
        for (std::size_t i = 0; i < n; ++i) {
            const Eigen::VectorXd xi = xw.row(static_cast<Eigen::Index>(i)).transpose();
            const double e = resid(static_cast<Eigen::Index>(i));
            meat.noalias() += xi * xi.transpose() * (e * e);
        }
        factor = nd / (nd - qd);
    } else {
        std::map<std::int64_t, Eigen::VectorXd> sums;
        for (std::size_t i = 0; i < n; ++i) {
            const Eigen::VectorXd xe = xw.row(static_cast<Eigen::Index>(i)).transpose() *
                                       resid(static_cast<Eigen::Index>(i));
            auto [it, inserted] = sums.emplace(cluster_id[i], xe);
            if (!inserted) it->second += xe;
        }
        n_clusters = sums.size();
        if (n_clusters < 2) throw NumericError("blp_fit: need at least 2 clusters");
        for (const auto& [id, s] : sums) meat.noalias() += s * s.transpose();
        const double gd = static_cast<double>(n_clusters);
        factor = (gd / (gd - 1.0)) * ((nd - 1.0) / (nd - qd));
    }
    const Eigen::MatrixXd cov = factor * bread * meat * bread;

    BlpFit fit;
    fit.terms = names;
    fit.beta.assign(beta.data(), beta.data() + beta.size());
    fit.covariance = Matrix(q, q);
    for (std::size_t a = 0; a < q; ++a)
        for (std::size_t b = 0; b < q; ++b)
            fit.covariance(a, b) = cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    fit.se_type = options.se_type;
    fit.level = options.level;
    fit.n = n;
    fit.n_clusters = n_clusters;
    fit.dropped = dropped;
    return fit;
}

std::vector<double> blp_iates(const BlpFit& fit, const Matrix& z) {
    if (z.cols + 1 != fit.terms.size())
        throw DataError("blp_iates: row width does not match the fitted design");
    std::vector<double> out(z.rows);
    for (std::size_t i = 0; i < z.rows; ++i) {
        double v = fit.beta[0];
        for (std::size_t j = 0; j < z.cols; ++j) v += fit.beta[j + 1] * z(i, j);
        out[i] = v;
    }
    return out;
}

std::vector<BlpFit> gate_table(const ScoreVector& scores, const Dataset& data,
                               const std::vector<GateSpec>& specs, const BlpOptions& options) {
    std::vector<BlpFit> fits;
    fits.reserve(specs.size());
    for (const auto& spec : specs) {
        Matrix z(data.n(), spec.z_names.size());
        for (std::size_t j = 0; j < spec.z_names.size(); ++j) {
            const auto col = data.feature_column(spec.z_names[j]);
            for (std::size_t i = 0; i < data.n(); ++i) z(i, j) = col[i];
        }
        fits.push_back(blp_fit(scores, z, spec.z_names, options,
                               options.se_type == SeType::cluster_robust ? data.cluster_id()
                                                                         : std::span<const std::int64_t>{}));
    }
    return fits;
}

std::string significance_stars(double p_value) {
    if (p_value < 0.01) return "***";
    if (p_value < 0.05) return "**";
    if (p_value < 0.10) return "*";
    return "";
}

std::string gate_table_to_csv(const std::vector<GateSpec>& specs,
                              const std::vector<BlpFit>& fits) {
    if (specs.size() != fits.size()) throw DataError("gate_table_to_csv: size mismatch");
    CsvWriter w({"spec", "term", "estimate", "std_error", "t", "p", "stars"});
    for (std::size_t s = 0; s < fits.size(); ++s) {
        const BlpFit& fit = fits[s];
        for (std::size_t j = 0; j < fit.terms.size(); ++j) {
            const EffectEstimate e = fit.term_estimate(j);
            w.add_row({specs[s].name, fit.terms[j], format_full(e.estimate),
                       format_full(e.std_error), format_short(e.t_value), format_short(e.p_value),
                       significance_stars(e.p_value)});
        }
    }
    return w.str();
}

}  // namespace dmlkit
