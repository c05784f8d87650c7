#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dmlkit {

/// Dense row-major matrix, the exchange type between modules.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(data.data() + i * cols, cols);
    }

    /// New matrix holding the given rows, in the given order.
    Matrix select_rows(std::span<const int> idx) const;
    /// New single-column matrix from column j.
    Matrix column(std::size_t j) const;
};

double mean(std::span<const double> v);
/// Sample variance (n-1 denominator); throws NumericError on n < 2.
double sample_variance(std::span<const double> v);
double sample_sd(std::span<const double> v);
double weighted_mean(std::span<const double> v, std::span<const double> w);

/// Type-7 quantile (linear interpolation between order statistics) of an
/// already sorted vector.
double quantile_sorted(std::span<const double> sorted, double q);
/// Convenience: copies, sorts, interpolates.
double quantile(std::span<const double> v, double q);

/// Smallest value whose weighted CDF reaches q; values need not be sorted.
double weighted_quantile(std::span<const double> v, std::span<const double> w, double q);

/// Standard normal CDF.
double normal_cdf(double x);
/// Standard normal quantile; |err| < 1e-13 over (1e-300, 1-1e-16).
double normal_quantile(double p);
/// Two-sided p-value of a z-statistic under the standard normal reference.
double two_sided_p(double t);

/// Point estimate with normal-reference inference at a confidence level.
struct EffectEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    double t_value = 0.0;
    double p_value = 1.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double level = 0.90;
    std::size_t n = 0;
};

EffectEstimate make_effect_estimate(double estimate, double std_error, double level,
                                    std::size_t n);

/// FNV-1a over raw bytes; used for provenance and manifest hashes.
std::uint64_t hash_bytes(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t hash_doubles(std::span<const double> v, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hash_hex(std::uint64_t h);

/// Shuffled indices 0..n-1 split into k near-equal folds. Shared by every
/// cross-validation and cross-fitting routine so tests can reproduce folds.
std::vector<std::vector<int>> make_folds(std::size_t n, int k, std::uint64_t seed);

}  // namespace dmlkit
