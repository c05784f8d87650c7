#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dmlkit/dml.hpp"
#include "dmlkit/stats.hpp"

namespace dmlkit {

enum class KernelType { gaussian, epanechnikov };

/// Kernel regression settings. bandwidth holds the cross-validated h per z
/// dimension; the undersmoothing factor is applied exactly once, inside the
/// curve evaluation.
struct KernelSpec {
    KernelType kernel = KernelType::gaussian;
    std::vector<double> bandwidth;
    double undersmooth = 0.9;
};

/// Nonparametric effect curve on an evaluation grid. Grid points whose kernel
/// mass falls below the ESS floor carry no estimate (available = false,
/// NaN values) instead of an extrapolation.
struct CateCurve {
    Matrix grid;  // n_eval x dim
    std::vector<double> theta;
    std::vector<double> ci_low;
    std::vector<double> ci_high;
    std::vector<double> ess;
    std::vector<bool> available;
    double level = 0.90;

    std::string to_csv(const std::vector<std::string>& z_names) const;
};

/// k-fold bandwidth selection for the kernel regression of scores on z
/// (dim 1 or 2): minimizes out-of-fold squared error; ties go to the smaller
/// bandwidth. Each grid entry lists one h per z dimension.
std::vector<double> cv_bandwidth(const ScoreVector& scores, const Matrix& z, KernelType kernel,
                                 const std::vector<std::vector<double>>& h_grid, int k_folds,
                                 std::uint64_t seed, std::vector<double>* out_mse = nullptr);

/// Geometric grid of candidate bandwidths around a dispersion-based pilot.
std::vector<std::vector<double>> default_bandwidth_grid(const Matrix& z);

/// Nadaraya-Watson evaluation of the score regression at each grid row, with
/// pointwise normal confidence intervals from the kernel-weighted residual
/// variance.
CateCurve kernel_cate(const ScoreVector& scores, const Matrix& z, const KernelSpec& spec,
                      const Matrix& eval_grid, double level = 0.90, double ess_floor = 10.0);

struct GroupCurveSpec {
    KernelType kernel = KernelType::gaussian;
    std::vector<std::vector<double>> h_grid;  // empty = default grid per group
    int cv_folds = 5;
    double undersmooth = 0.9;
    std::uint64_t seed = 0;
    double level = 0.90;
    double ess_floor = 10.0;
};

/// Separate curves for group == 0 and group == 1 on a common grid, bandwidth
/// selected within each group.
std::pair<CateCurve, CateCurve> gate_curve_by_group(const ScoreVector& scores, const Matrix& z,
                                                    std::span<const int> group,
                                                    const GroupCurveSpec& spec,
                                                    const Matrix& eval_grid);

/// Evenly spaced 1-D grid over [quantile(lo), quantile(hi)] of observed z.
Matrix make_eval_grid(std::span<const double> z, std::size_t points, double lo_q = 0.02,
                      double hi_q = 0.98);

}  // namespace dmlkit
