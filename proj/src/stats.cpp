#include "dmlkit/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <mutex>
#include <numeric>
#include <thread>

#include "dmlkit/errors.hpp"
#include "dmlkit/parallel.hpp"
#include "dmlkit/rng.hpp"

namespace dmlkit {

Matrix Matrix::select_rows(std::span<const int> idx) const {
    Matrix out(idx.size(), cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const double* src = data.data() + static_cast<std::size_t>(idx[i]) * cols;
        std::copy(src, src + cols, out.data.data() + i * cols);
    }
    return out;
}

Matrix Matrix::column(std::size_t j) const {
    Matrix out(rows, 1);
    for (std::size_t i = 0; i < rows; ++i) out(i, 0) = (*this)(i, j);
    return out;
}

double mean(std::span<const double> v) {
    if (v.empty()) throw NumericError("mean: empty vector");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v) {
    const std::size_t n = v.size();
    if (n < 2) throw NumericError("sample_variance: need at least 2 values");
    const double m = mean(v);
    double acc = 0.0;
    for (double x : v) {
        const double d = x - m;
        acc += d * d;
    }
    return acc / static_cast<double>(n - 1);
}

double sample_sd(std::span<const double> v) { return std::sqrt(sample_variance(v)); }

double weighted_mean(std::span<const double> v, std::span<const double> w) {
    if (v.size() != w.size() || v.empty())
        throw NumericError("weighted_mean: size mismatch or empty input");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        num += v[i] * w[i];
        den += w[i];
    }
    if (den <= 0.0) throw NumericError("weighted_mean: non-positive total weight");
    return num / den;
}

double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw NumericError("quantile: empty vector");
    if (q <= 0.0) return sorted.front();
    if (q >= 1.0) return sorted.back();
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

double quantile(std::span<const double> v, double q) {
    std::vector<double> copy(v.begin(), v.end());
    std::sort(copy.begin(), copy.end());
    return quantile_sorted(copy, q);
}

double weighted_quantile(std::span<const double> v, std::span<const double> w, double q) {
    if (v.size() != w.size() || v.empty())
        throw NumericError("weighted_quantile: size mismatch or empty input");
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    double total = 0.0;
    for (double x : w) total += x;
    if (total <= 0.0) throw NumericError("weighted_quantile: non-positive total weight");
    double acc = 0.0;
    for (std::size_t k : order) {
        acc += w[k];
        if (acc >= q * total) return v[k];
    }
    return v[order.back()];
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

namespace {

// Acklam's rational approximation, then one Halley refinement against erfc.
double normal_quantile_approx(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - plow) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw NumericError("normal_quantile: p outside (0,1)");
    double x = normal_quantile_approx(p);
    for (int it = 0; it < 2; ++it) {
        const double e = normal_cdf(x) - p;
        const double u = e * 2.5066282746310002 * std::exp(0.5 * x * x);  // e / pdf(x)
        x = x - u / (1.0 + 0.5 * x * u);
    }
    return x;
}

double two_sided_p(double t) { return std::erfc(std::fabs(t) * 0.7071067811865475244); }

EffectEstimate make_effect_estimate(double estimate, double std_error, double level,
                                    std::size_t n) {
    EffectEstimate e;
    e.estimate = estimate;
    e.std_error = std_error;
    e.level = level;
    e.n = n;
    if (std_error > 0.0) {
        e.t_value = estimate / std_error;
        e.p_value = two_sided_p(e.t_value);
    } else {
        e.t_value = estimate == 0.0 ? 0.0 : (estimate > 0 ? HUGE_VAL : -HUGE_VAL);
        e.p_value = estimate == 0.0 ? 1.0 : 0.0;
    }
    const double z = normal_quantile(0.5 + level / 2.0);
    e.ci_low = estimate - z * std_error;
    e.ci_high = estimate + z * std_error;
    return e;
}

std::uint64_t hash_bytes(const void* data, std::size_t size, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t hash_doubles(std::span<const double> v, std::uint64_t seed) {
    return hash_bytes(v.data(), v.size() * sizeof(double), seed);
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::vector<std::vector<int>> make_folds(std::size_t n, int k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("make_folds: need at least 2 folds");
    if (n < static_cast<std::size_t>(k)) throw NumericError("make_folds: n < k_folds");
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(seed, 0x0f01d5));
    rng.shuffle(idx);
    std::vector<std::vector<int>> folds(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < n; ++i)
        folds[i % static_cast<std::size_t>(k)].push_back(idx[i]);
    return folds;
}

// ---- parallel_for -----------------------------------------------------------

namespace {
std::atomic<unsigned> g_threads{0};
}

void set_thread_count(unsigned n) { g_threads.store(n); }

unsigned thread_count() {
    unsigned n = g_threads.load();
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
    return n;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(thread_count(), n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n || failed.load()) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    failed.store(true);
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace dmlkit
