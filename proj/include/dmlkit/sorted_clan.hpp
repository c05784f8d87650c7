#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dmlkit/stats.hpp"

namespace dmlkit {

/// Re-runs the IATE estimator under multiplier-bootstrap observation weights.
/// Must be deterministic given the weight vector; unit weights reproduce the
/// main estimate.
using IateFn = std::function<std::vector<double>(std::span<const double>)>;

/// Monotone (rearranged) curve of individualized effects across quantiles,
/// bias corrected against the bootstrap mean, with sup-t uniform bands.
struct SortedCurve {
    std::vector<double> u;  // quantile grid, strictly increasing in (0,1)
    std::vector<double> theta;
    std::vector<double> ci_low;
    std::vector<double> ci_high;
    int replications = 0;
    double level = 0.90;

    std::string to_csv() const;
};

SortedCurve sorted_effects(const IateFn& iate_fn, std::size_t n, int b = 999,
                           double level = 0.90, std::uint64_t seed = 0, int grid_points = 99);

enum class ClanBootstrapMode {
    fixed_iates,  // effects held fixed; groups and means re-weighted (default)
    reestimate,   // iate_fn re-run per replicate
};

struct ClanRow {
    std::string name;
    double estimate = 0.0;
    double std_error = 0.0;
    double p_value = 1.0;
    double joint_p_value = 1.0;
};

struct ClanTable {
    std::vector<ClanRow> rows;
    double q = 0.10;
    int replications = 0;

    std::string to_csv() const;
};

/// Difference in characteristic means between the q-most and q-least affected
/// observations. Pointwise p-values come from the bootstrap-t distribution,
/// joint p-values from the max-|t| distribution across characteristics, so
/// joint >= pointwise row by row.
ClanTable clan(std::span<const double> iates, const Matrix& characteristics,
               const std::vector<std::string>& names, double q = 0.10, int b = 999,
               std::uint64_t seed = 0, ClanBootstrapMode mode = ClanBootstrapMode::fixed_iates,
               const IateFn* iate_fn = nullptr);

/// Row indices of the most and least affected groups (size floor(q*n) each,
/// ties broken by stable row order).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> clan_groups(
    std::span<const double> iates, double q);

}  // namespace dmlkit
