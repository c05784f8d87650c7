#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dmlkit/dataset.hpp"
#include "dmlkit/dml.hpp"
#include "dmlkit/stats.hpp"

namespace dmlkit {

enum class SeType { heteroscedasticity_robust, cluster_robust };

struct BlpOptions {
    SeType se_type = SeType::heteroscedasticity_robust;
    double level = 0.90;
    /// When true, near-collinear columns are dropped and reported instead of
    /// aborting the fit.
    bool drop_collinear = false;
};

/// OLS of scores on (constant, z) with a sandwich covariance. HC1 uses the
/// n/(n-q) factor; CR1 uses (G/(G-1)) * ((n-1)/(n-q)).
struct BlpFit {
    std::vector<std::string> terms;  // "const" first
    std::vector<double> beta;
    Matrix covariance;  // q x q
    SeType se_type = SeType::heteroscedasticity_robust;
    double level = 0.90;
    std::size_t n = 0;
    std::size_t n_clusters = 0;
    std::vector<std::string> dropped;  // collinear columns removed from the design

    double std_error(std::size_t j) const;
    EffectEstimate term_estimate(std::size_t j) const;
    std::size_t term_index(const std::string& name) const;  // throws on unknown term
};

/// z holds the heterogeneity columns only; the constant is prepended here.
/// Columns whose projection R^2 on the preceding columns exceeds 1 - 1e-10
/// are collinear: reported and dropped, or a NumericError naming them.
BlpFit blp_fit(const ScoreVector& scores, const Matrix& z,
               const std::vector<std::string>& z_names, const BlpOptions& options = {},
               std::span<const std::int64_t> cluster_id = {},
               std::span<const double> weights = {});

/// Fitted values x~ * beta for new heterogeneity rows (constant implied).
std::vector<double> blp_iates(const BlpFit& fit, const Matrix& z);

struct GateSpec {
    std::string name;
    std::vector<std::string> z_names;  // empty = constant-only column
};

/// One BlpFit per requested column set, in request order.
std::vector<BlpFit> gate_table(const ScoreVector& scores, const Dataset& data,
                               const std::vector<GateSpec>& specs, const BlpOptions& options = {});

/// Long-format table CSV: spec,term,estimate,std_error,t,p,stars.
std::string gate_table_to_csv(const std::vector<GateSpec>& specs,
                              const std::vector<BlpFit>& fits);
std::string significance_stars(double p_value);

}  // namespace dmlkit
