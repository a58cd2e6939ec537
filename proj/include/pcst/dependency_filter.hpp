#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "image.hpp"
#include "pair_record.hpp"

namespace pcst {

/// r = target - input, elementwise.
inline Tensor residual(const Image& target, const Image& input) {
    if (!target.same_shape(input)) throw std::invalid_argument("residual: shape mismatch");
    Tensor r = to_tensor(target);
    for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] = target.data()[i] - input.data()[i];
    return r;
}

/// Empirical covariance of two equally long sample arrays, with both means
/// estimated from the data and all channels pooled.
inline double empirical_covariance(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw std::invalid_argument("covariance: length mismatch");
    if (a.empty()) throw std::invalid_argument("covariance: no samples");
    const double n = static_cast<double>(a.size());
    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        mean_a += a[i];
        mean_b += b[i];
    }
    mean_a /= n;
    mean_b /= n;
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        acc += (static_cast<double>(a[i]) - mean_a) * (static_cast<double>(b[i]) - mean_b);
    return acc / n;
}

/// s_{y,r}: covariance between the network input and the target residual.
inline double cov_syr(const Image& y, const Tensor& r) {
    if (y.size() != r.size()) throw std::invalid_argument("cov_syr: sample count mismatch");
    return empirical_covariance(y.samples(), r.data);
}

struct Histogram {
    std::vector<double> bin_edges;
    std::vector<std::size_t> counts;
    std::size_t peak_bin = 0;
    double mean = 0.0;

    double bin_width() const { return bin_edges[1] - bin_edges[0]; }
    double bin_center(std::size_t i) const { return 0.5 * (bin_edges[i] + bin_edges[i + 1]); }
    double peak_location() const { return bin_center(peak_bin); }
};

namespace detail {

/// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Leftmost argmax of counts convolved with a Gaussian of `sd` bins,
/// truncated at three standard deviations.
inline std::size_t smoothed_argmax(const std::vector<std::size_t>& counts, double sd) {
    const auto bins = static_cast<std::ptrdiff_t>(counts.size());
    const auto reach = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sd));
    std::vector<double> weight(static_cast<std::size_t>(reach) + 1);
    for (std::ptrdiff_t d = 0; d <= reach; ++d)
        weight[static_cast<std::size_t>(d)] = std::exp(-0.5 * static_cast<double>(d * d) / (sd * sd));
    std::size_t best = 0;
    double best_value = -1.0;
    for (std::ptrdiff_t i = 0; i < bins; ++i) {
        double v = 0.0;
        for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, i - reach); j <= std::min(bins - 1, i + reach); ++j)
            v += weight[static_cast<std::size_t>(std::abs(i - j))] * static_cast<double>(counts[static_cast<std::size_t>(j)]);
        if (v > best_value) {
            best_value = v;
            best = static_cast<std::size_t>(i);
        }
    }
    return best;
}

} // namespace detail

/// Freedman-Diaconis histogram (Scott's rule when the IQR is zero).
///
/// The peak is the leftmost bin with the largest count after Gaussian
/// smoothing of the counts. The smoothing width is 0.45 * N^(4/21) bins, that
/// is a bandwidth shrinking like N^(-1/7) in data units: about one bin at
/// N = 60 and four at N = 1e5. The raw argmax of Freedman-Diaconis counts
/// wanders by about two bins at N = 1e5.
inline Histogram build_histogram(std::span<const double> samples) {
    if (samples.size() < 2) throw std::invalid_argument("build_histogram: need at least two samples");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const double lo = sorted.front();
    const double hi = sorted.back();
    if (!(hi > lo)) throw std::invalid_argument("build_histogram: all samples are identical");

    const double n = static_cast<double>(sorted.size());
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= n;

    const double iqr = detail::quantile_sorted(sorted, 0.75) - detail::quantile_sorted(sorted, 0.25);
    double width = 2.0 * iqr / std::cbrt(n);
    if (!(width > 0.0)) {
        double var = 0.0;
        for (double s : samples) var += (s - mean) * (s - mean);
        const double sd = std::sqrt(var / (n - 1.0));
        width = 3.49 * sd / std::cbrt(n);
    }
    const auto bins = static_cast<std::size_t>(std::max(1.0, std::ceil((hi - lo) / width)));

    Histogram h;
    h.mean = mean;
    h.bin_edges.resize(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i) h.bin_edges[i] = lo + static_cast<double>(i) * width;
    h.counts.assign(bins, 0);
    for (double s : sorted) {
        auto idx = static_cast<std::size_t>(std::floor((s - lo) / width));
        ++h.counts[std::min(idx, bins - 1)];
    }
    h.peak_bin = detail::smoothed_argmax(h.counts, 0.45 * std::pow(n, 4.0 / 21.0));
    return h;
}

struct ThresholdResult {
    /// Left-tail cutoff; nullopt when no cut is needed (every pair retained).
    std::optional<double> s_min;
    double retained_fraction = 1.0;
    double peak_location = 0.0;
    double retained_mean = 0.0;
    double bin_width = 0.0;
    double full_mean = 0.0;

    bool mean_coincides_with_peak() const { return std::abs(retained_mean - peak_location) <= 0.5 * bin_width; }
};

/// Left-tail threshold that brings the retained mean up to the histogram peak.
///
/// The peak is taken from the histogram of all samples. If the full mean is
/// already at or above the peak (to within half a bin) nothing is cut.
/// Otherwise s_min is the smallest sample value v with mean{s >= v} >= peak,
/// found by sweeping the sorted samples from the left; the retained mean is
/// non-decreasing in v so the first hit is the answer.
inline ThresholdResult find_smin(std::span<const double> samples) {
    const Histogram hist = build_histogram(samples);
    ThresholdResult out;
    out.peak_location = hist.peak_location();
    out.bin_width = hist.bin_width();
    out.full_mean = hist.mean;
    out.retained_mean = hist.mean;
    if (hist.mean >= out.peak_location - 0.5 * out.bin_width) return out;

    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    double suffix = 0.0;
    for (double s : sorted) suffix += s;

    // suffix holds the sum of sorted[i..n).
    for (std::size_t i = 0; i < n;) {
        const double mean = suffix / static_cast<double>(n - i);
        if (mean >= out.peak_location) {
            out.s_min = sorted[i];
            out.retained_fraction = static_cast<double>(n - i) / static_cast<double>(n);
            out.retained_mean = mean;
            return out;
        }
        const double v = sorted[i];
        while (i < n && sorted[i] == v) suffix -= sorted[i++];
    }
    // Only reached when the peak bin's centre lies above the largest sample.
    out.s_min = sorted.back();
    out.retained_fraction = 1.0 / static_cast<double>(n);
    out.retained_mean = sorted.back();
    return out;
}

/// Sets retained = (s_yr >= s_min) on every record; nothing is removed.
/// A missing s_min retains everything.
inline std::vector<PairRecord> filter_pairs(std::vector<PairRecord> manifest, std::optional<double> s_min) {
    for (auto& rec : manifest) {
        if (!rec.s_yr) throw std::invalid_argument("filter_pairs: record " + rec.input + " has no s_yr");
        rec.retained = !s_min || *rec.s_yr >= *s_min;
    }
    return manifest;
}

} // namespace pcst
