#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dependency_filter.hpp"
#include "image.hpp"
#include "noise.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace pcst {

using Autocov2D = std::function<double(int, int)>;
using Autocov1D = std::function<double(int)>;

/// rho = (1/n^2) sum_{i1,j1,i2,j2 = 1..n} (R(i1 - j1, i2 - j2) / sigma^2)^2, by direct O(n^4) summation.
inline double rho_exact(int n, const Autocov2D& autocov, double sigma) {
    if (n < 1) throw std::invalid_argument("rho_exact: n must be >= 1");
    const double var = sigma * sigma;
    double total = 0.0;
    for (int i1 = 1; i1 <= n; ++i1)
        for (int j1 = 1; j1 <= n; ++j1)
            for (int i2 = 1; i2 <= n; ++i2)
                for (int j2 = 1; j2 <= n; ++j2) {
                    const double v = autocov(i1 - j1, i2 - j2) / var;
                    total += v * v;
                }
    return total / (static_cast<double>(n) * n);
}

/// sum_{i,j=1..n} f(i - j) folded onto lags: n * sum_tau (1 - |tau|/n) f(tau).
inline double toeplitz_fold(int n, const Autocov1D& f) {
    double s = 0.0;
    for (int tau = -(n - 1); tau <= n - 1; ++tau)
        s += (1.0 - std::abs(tau) / static_cast<double>(n)) * f(tau);
    return n * s;
}

/// rho for a separable autocovariance R(t1, t2) = sigma^2 a(t1) b(t2), in O(n)
/// through the Toeplitz fold of each factor.
inline double rho_separable(int n, const Autocov1D& a, const Autocov1D& b) {
    if (n < 1) throw std::invalid_argument("rho_separable: n must be >= 1");
    const double sa = toeplitz_fold(n, [&](int t) { return a(t) * a(t); });
    const double sb = toeplitz_fold(n, [&](int t) { return b(t) * b(t); });
    return sa * sb / (static_cast<double>(n) * n);
}

inline double rho_bilinear(int n, double theta) {
    const auto g = [theta](int t) { return std::max(1.0 - std::abs(t) / theta, 0.0); };
    return rho_separable(n, g, g);
}

/// Lower bound 1/4 (r + 1/r)^2 with r = min(n, floor(theta)).
inline double rho_bound(int n, double theta) {
    if (n < 1 || !(theta >= 1.0)) throw std::invalid_argument("rho_bound: need n >= 1 and theta >= 1");
    const double r = std::min(static_cast<double>(n), std::floor(theta));
    return 0.25 * (r + 1.0 / r) * (r + 1.0 / r);
}

struct RhoReport {
    int n = 0;
    double theta = 0.0;
    double rho_exact = 0.0;
    double rho_bound = 0.0;
    bool bound_satisfied = false;
    double equality_gap = 0.0;
};

inline RhoReport rho_report(int n, double theta) {
    RhoReport r;
    r.n = n;
    r.theta = theta;
    r.rho_exact = rho_exact(
        n, [theta](int t1, int t2) { return bilinear_autocov(t1, t2, theta, 1.0); }, 1.0);
    r.rho_bound = rho_bound(n, theta);
    r.bound_satisfied = r.rho_exact >= r.rho_bound - 1e-9;
    r.equality_gap = r.rho_exact - r.rho_bound;
    return r;
}

/// |sum_{i,j=1..n} f(i - j) - n sum_tau (1 - |tau|/n) f(tau)|, left side by brute force.
inline double toeplitz_identity_check(int n, const Autocov1D& f) {
    if (n < 1) throw std::invalid_argument("toeplitz_identity_check: n must be >= 1");
    double lhs = 0.0;
    for (int i = 1; i <= n; ++i)
        for (int j = 1; j <= n; ++j) lhs += f(i - j);
    return std::abs(lhs - toeplitz_fold(n, f));
}

/// Moments of a sample, computed in index order.
struct SampleMoments {
    std::size_t count = 0;
    double mean = 0.0;
    double variance = 0.0; ///< unbiased
    double skewness = 0.0;
    double excess_kurtosis = 0.0;
    double se_mean = 0.0;
    double se_variance = 0.0;
};

inline SampleMoments moments(std::span<const double> xs) {
    SampleMoments m;
    m.count = xs.size();
    if (xs.size() < 2) throw std::invalid_argument("moments: need at least two samples");
    const double n = static_cast<double>(xs.size());
    for (double x : xs) m.mean += x;
    m.mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double x : xs) {
        const double d = x - m.mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    m.variance = m2 * n / (n - 1.0);
    m.skewness = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
    m.excess_kurtosis = m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0;
    m.se_mean = std::sqrt(m.variance / n);
    m.se_variance = std::sqrt(std::max(m4 - m2 * m2, 0.0) / n);
    return m;
}

struct DeltaMCReport {
    int n = 0;
    double theta = 0.0;
    double sigma_z = 0.0;
    std::size_t trials = 0;
    double delta_x = 0.0;
    double bias_est = 0.0;
    double bias_expected = 0.0;
    double var_est = 0.0;
    double var_bound = 0.0;
    double rho = 0.0;
    double bias_se = 0.0;
    double var_se = 0.0;
};

/// Monte Carlo of the normalized squared patch distance
///   delta_y = (1/n^2) sum (d_x + z2 - z1)^2
/// for two independent bilinear-autocovariance noise patches. Each noise
/// patch is the top-left n x n window of a circular field of side
/// n + theta - 1, wide enough that wrap-around does not touch lags < n.
inline DeltaMCReport mc_delta(int n, int theta, double sigma_z, const Tensor& clean_diff, std::size_t trials,
                              std::uint64_t seed, unsigned workers = 0) {
    if (n < 1 || theta < 1) throw std::invalid_argument("mc_delta: need n >= 1 and theta >= 1");
    if (clean_diff.size() != static_cast<std::size_t>(n) * n)
        throw std::invalid_argument("mc_delta: clean_diff must hold n*n samples");
    if (trials < 2) throw std::invalid_argument("mc_delta: need at least two trials");

    const auto side = static_cast<std::uint32_t>(n + theta - 1);
    const double inv_area = 1.0 / (static_cast<double>(n) * n);
    double delta_x = 0.0;
    for (float d : clean_diff.data) delta_x += static_cast<double>(d) * d;
    delta_x *= inv_area;

    std::vector<double> delta_y(trials);
    parallel_for(
        trials,
        [&](std::size_t t) {
            Rng rng(derive_seed(seed, t));
            const Tensor z1 = sample_bilinear({side, side}, theta, sigma_z, rng);
            const Tensor z2 = sample_bilinear({side, side}, theta, sigma_z, rng);
            double acc = 0.0;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    const std::size_t at = static_cast<std::size_t>(i) * side + j;
                    const double d = static_cast<double>(clean_diff.data[static_cast<std::size_t>(i) * n + j]) +
                                     static_cast<double>(z2.data[at]) - static_cast<double>(z1.data[at]);
                    acc += d * d;
                }
            delta_y[t] = acc * inv_area;
        },
        workers);

    const SampleMoments m = moments(delta_y);
    DeltaMCReport r;
    r.n = n;
    r.theta = theta;
    r.sigma_z = sigma_z;
    r.trials = trials;
    r.delta_x = delta_x;
    r.bias_est = m.mean - delta_x;
    r.bias_expected = 2.0 * sigma_z * sigma_z;
    r.var_est = m.variance;
    r.rho = rho_bilinear(n, theta);
    r.var_bound = 8.0 / (static_cast<double>(n) * n) * std::pow(sigma_z, 4) * r.rho;
    r.bias_se = m.se_mean;
    r.var_se = m.se_variance;
    return r;
}

enum class SyrScenario { independent, type1, type2 };

inline const char* to_string(SyrScenario s) {
    switch (s) {
    case SyrScenario::independent: return "independent";
    case SyrScenario::type1: return "type1";
    case SyrScenario::type2: return "type2";
    }
    return "?";
}

/// Synthetic fields for the s_{y,r} experiments. Each zero-mean part is
/// white noise smoothed by a short flat kernel, so it is stationary and
/// m-dependent.
struct SyrFieldConfig {
    double clean_mean = 100.0;
    double clean_sigma = 20.0;
    int clean_kernel = 3;
    int noise_kernel = 2;
    double target_sigma = 0.0; ///< sigma_w; 0 means "same as sigma_z"
    double target_mean = 3.0;  ///< mu_w
};

struct SyrReport {
    SyrScenario scenario = SyrScenario::independent;
    int n = 0;
    double sigma_z = 0.0;
    std::size_t pairs = 0;
    double cross_cov = 0.0;     ///< requested sigma_{z,w} (type1) or sigma_{x,w} (type2)
    double expected_mean = 0.0; ///< cross_cov - sigma_z^2
    SampleMoments stats;
};

/// Draws `pairs` independent (x, z, w) triples, forms y = x + z and
/// x~ = x + w, and records s_{y,r} with r = x~ - y. Type-I mixes w with z and
/// type-II mixes w with the zero-mean part of x so that the per-pixel
/// cross-covariance equals `cross_cov` while var(w) stays sigma_w^2.
inline SyrReport mc_syr_scenarios(SyrScenario scenario, int n, double sigma_z, std::size_t pairs, std::uint64_t seed,
                                  double cross_cov = 0.0, const SyrFieldConfig& cfg = {}, unsigned workers = 0) {
    if (n < 4) throw std::invalid_argument("mc_syr_scenarios: field side must be >= 4");
    if (pairs < 2) throw std::invalid_argument("mc_syr_scenarios: need at least two pairs");
    const double sigma_w = cfg.target_sigma > 0.0 ? cfg.target_sigma : sigma_z;

    double mix = 0.0;
    double partner_var = 0.0;
    if (scenario == SyrScenario::type1) partner_var = sigma_z * sigma_z;
    if (scenario == SyrScenario::type2) partner_var = cfg.clean_sigma * cfg.clean_sigma;
    if (scenario == SyrScenario::independent) cross_cov = 0.0;
    if (scenario != SyrScenario::independent) mix = cross_cov / partner_var;
    const double own_var = sigma_w * sigma_w - mix * mix * partner_var;
    if (own_var < 0.0)
        throw std::invalid_argument("mc_syr_scenarios: requested cross-covariance " + std::to_string(cross_cov) +
                                    " exceeds what sigma_w allows");
    const double own_sigma = std::sqrt(own_var);

    const auto side = static_cast<std::uint32_t>(n);
    const NoiseModel clean_model{cfg.clean_sigma, noise_kind::FlatKernel{cfg.clean_kernel}};
    const NoiseModel noise_model{sigma_z, noise_kind::FlatKernel{cfg.noise_kernel}};

    std::vector<double> s(pairs);
    parallel_for(
        pairs,
        [&](std::size_t p) {
            Rng rng(derive_seed(seed, p));
            const Tensor xbar = synthesize_noise({side, side}, clean_model, rng);
            const Tensor z = synthesize_noise({side, side}, noise_model, rng);
            Tensor w(std::vector<std::uint32_t>{side, side});
            if (own_sigma > 0.0) w = synthesize_noise({side, side}, NoiseModel{own_sigma, noise_kind::FlatKernel{cfg.noise_kernel}}, rng);
            const Tensor* partner = scenario == SyrScenario::type1 ? &z : &xbar;

            // y = x + z and r = x~ - y = w - z with x~ = x + w, rounded to
            // float as stored images would be.
            std::vector<float> y(z.size()), r(z.size());
            for (std::size_t i = 0; i < z.size(); ++i) {
                const double x = cfg.clean_mean + xbar.data[i];
                const double wi = cfg.target_mean + w.data[i] + mix * partner->data[i];
                y[i] = static_cast<float>(x + z.data[i]);
                r[i] = static_cast<float>(x + wi) - y[i];
            }
            s[p] = empirical_covariance(y, r);
        },
        workers);

    SyrReport r;
    r.scenario = scenario;
    r.n = n;
    r.sigma_z = sigma_z;
    r.pairs = pairs;
    r.cross_cov = cross_cov;
    r.expected_mean = cross_cov - sigma_z * sigma_z;
    r.stats = moments(s);
    return r;
}

} // namespace pcst
