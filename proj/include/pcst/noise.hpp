#pragma once

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <variant>
#include <vector>

#include "image.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace pcst {

namespace noise_kind {
struct Iid {
    friend bool operator==(const Iid&, const Iid&) = default;
};
/// White noise circularly filtered by a k x k kernel with entries 1/k.
struct FlatKernel {
    int k = 1;
    friend bool operator==(const FlatKernel&, const FlatKernel&) = default;
};
/// Separable triangular autocovariance of half-width theta.
struct BilinearDecay {
    double theta = 1.0;
    friend bool operator==(const BilinearDecay&, const BilinearDecay&) = default;
};
} // namespace noise_kind

struct NoiseModel {
    double sigma = 1.0;
    std::variant<noise_kind::Iid, noise_kind::FlatKernel, noise_kind::BilinearDecay> kind{};

    void validate() const {
        if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("NoiseModel: sigma must be positive");
        if (auto* f = std::get_if<noise_kind::FlatKernel>(&kind); f && f->k < 1)
            throw std::invalid_argument("NoiseModel: kernel size must be >= 1");
        if (auto* b = std::get_if<noise_kind::BilinearDecay>(&kind); b && !(b->theta >= 1.0))
            throw std::invalid_argument("NoiseModel: theta must be >= 1");
    }
};

/// Dense 2D filter, row-major.
struct Kernel {
    int rows = 0;
    int cols = 0;
    std::vector<double> weights;

    double operator()(int r, int c) const { return weights[static_cast<std::size_t>(r) * cols + c]; }

    double squared_sum() const {
        double s = 0.0;
        for (double w : weights) s += w * w;
        return s;
    }
};

/// k x k kernel with every entry 1/k, so the squared coefficients sum to one
/// and filtering preserves the marginal variance of white noise.
inline Kernel flat_kernel(int k) {
    if (k < 1) throw std::invalid_argument("flat_kernel: k must be >= 1");
    return Kernel{k, k, std::vector<double>(static_cast<std::size_t>(k) * k, 1.0 / k)};
}

inline Tensor sample_iid(std::vector<std::uint32_t> shape, double sigma, Rng& rng) {
    if (!(sigma > 0.0)) throw std::invalid_argument("sample_iid: sigma must be positive");
    Tensor t(std::move(shape));
    rng.fill_normal(t.data, sigma);
    return t;
}

namespace detail {

struct PlaneShape {
    std::size_t planes;
    int height;
    int width;
};

inline PlaneShape plane_shape(const Tensor& t) {
    if (t.shape.size() == 2) return {1, static_cast<int>(t.shape[0]), static_cast<int>(t.shape[1])};
    if (t.shape.size() == 3)
        return {t.shape[0], static_cast<int>(t.shape[1]), static_cast<int>(t.shape[2])};
    throw std::invalid_argument("noise field must have shape [H, W] or [C, H, W]");
}

inline int wrap(int i, int n) noexcept {
    i %= n;
    return i < 0 ? i + n : i;
}

} // namespace detail

/// Circular 2D convolution applied to each channel plane:
///   out(y, x) = sum_{a,b} kernel(a, b) * in((y - a) mod H, (x - b) mod W).
/// Output keeps the input shape and the field stays stationary at the borders.
inline Tensor correlate(const Tensor& noise, const Kernel& kernel) {
    const auto [planes, h, w] = detail::plane_shape(noise);
    if (kernel.rows < 1 || kernel.cols < 1) throw std::invalid_argument("correlate: empty kernel");
    if (kernel.rows > h || kernel.cols > w) throw std::invalid_argument("correlate: kernel larger than field");

    Tensor out(noise.shape);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    // wrapped_cols[b * w + x] = (x - b) mod w
    std::vector<int> wrapped_cols(static_cast<std::size_t>(kernel.cols) * w);
    for (int b = 0; b < kernel.cols; ++b)
        for (int x = 0; x < w; ++x) wrapped_cols[static_cast<std::size_t>(b) * w + x] = detail::wrap(x - b, w);
    std::vector<double> acc(static_cast<std::size_t>(w));

    for (std::size_t p = 0; p < planes; ++p) {
        const float* in = noise.data.data() + p * plane;
        float* dst = out.data.data() + p * plane;
        for (int y = 0; y < h; ++y) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (int a = 0; a < kernel.rows; ++a) {
                const float* src = in + static_cast<std::size_t>(detail::wrap(y - a, h)) * w;
                for (int b = 0; b < kernel.cols; ++b) {
                    const double k = kernel(a, b);
                    const int* cols = wrapped_cols.data() + static_cast<std::size_t>(b) * w;
                    for (int x = 0; x < w; ++x) acc[x] += k * src[cols[x]];
                }
            }
            for (int x = 0; x < w; ++x) dst[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc[x]);
        }
    }
    return out;
}

/// R(t1, t2) = sigma^2 * max(1 - |t1|/theta, 0) * max(1 - |t2|/theta, 0).
inline double bilinear_autocov(double tau1, double tau2, double theta, double sigma) {
    const auto g = [theta](double tau) { return std::max(1.0 - std::abs(tau) / theta, 0.0); };
    return sigma * sigma * g(tau1) * g(tau2);
}

namespace detail {

/// In-place circular k x k box filter with every weight 1/k, as two running-sum
/// passes. Equivalent to correlate(field, flat_kernel(k)) up to rounding.
inline void box_filter(Tensor& field, int k) {
    const auto [planes, h, w] = plane_shape(field);
    if (k > h || k > w) throw std::invalid_argument("box filter larger than field");
    if (k == 1) return;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<double> tmp(plane), acc(static_cast<std::size_t>(w));
    const double scale = 1.0 / k;
    for (std::size_t p = 0; p < planes; ++p) {
        float* f = field.data.data() + p * plane;
        for (int y = 0; y < h; ++y) {
            const float* row = f + static_cast<std::size_t>(y) * w;
            double* out = tmp.data() + static_cast<std::size_t>(y) * w;
            double s = 0.0;
            for (int b = 0; b < k; ++b) s += row[wrap(-b, w)];
            out[0] = s;
            for (int x = 1; x < w; ++x) {
                s += static_cast<double>(row[x]) - row[wrap(x - k, w)];
                out[x] = s;
            }
        }
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int a = 0; a < k; ++a) {
            const double* src = tmp.data() + static_cast<std::size_t>(wrap(-a, h)) * w;
            for (int x = 0; x < w; ++x) acc[x] += src[x];
        }
        for (int y = 0; y < h; ++y) {
            if (y > 0) {
                const double* add = tmp.data() + static_cast<std::size_t>(y) * w;
                const double* sub = tmp.data() + static_cast<std::size_t>(wrap(y - k, h)) * w;
                for (int x = 0; x < w; ++x) acc[x] += add[x] - sub[x];
            }
            float* dst = f + static_cast<std::size_t>(y) * w;
            for (int x = 0; x < w; ++x) dst[x] = static_cast<float>(scale * acc[x]);
        }
    }
}

} // namespace detail

/// Gaussian field whose autocovariance is exactly bilinear_autocov with the
/// given integer theta: white noise passed through a length-theta box filter
/// (taps 1/sqrt(theta)) along each axis, circularly.
inline Tensor sample_bilinear(std::vector<std::uint32_t> shape, double theta, double sigma, Rng& rng) {
    if (!(theta >= 1.0) || theta != std::floor(theta))
        throw std::invalid_argument("sample_bilinear: theta must be an integer >= 1");
    Tensor field = sample_iid(std::move(shape), sigma, rng);
    detail::box_filter(field, static_cast<int>(theta));
    return field;
}

/// Draws one noise field of the given shape under `model`.
inline Tensor synthesize_noise(const std::vector<std::uint32_t>& shape, const NoiseModel& model, Rng& rng) {
    model.validate();
    return std::visit(
        [&](const auto& kind) -> Tensor {
            using K = std::decay_t<decltype(kind)>;
            if constexpr (std::is_same_v<K, noise_kind::Iid>) {
                return sample_iid(shape, model.sigma, rng);
            } else if constexpr (std::is_same_v<K, noise_kind::FlatKernel>) {
                Tensor field = sample_iid(shape, model.sigma, rng);
                detail::box_filter(field, kind.k);
                return field;
            } else {
                return sample_bilinear(shape, kind.theta, model.sigma, rng);
            }
        },
        model.kind);
}

inline Image add_noise(const Image& clean, const NoiseModel& model, Rng& rng) {
    const Tensor noise = synthesize_noise(to_tensor(clean).shape, model, rng);
    std::vector<float> data(clean.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = clean.data()[i] + noise.data[i];
    return Image(clean.channels(), clean.height(), clean.width(), std::move(data));
}

/// Noisy copy of a clean burst. Frame j draws from rng.child(j), so every
/// frame gets an independent realization and frames can be built in parallel.
inline Burst synth_burst(const Burst& clean, const NoiseModel& model, const Rng& rng, unsigned workers = 0) {
    model.validate();
    Burst noisy;
    noisy.input_index = clean.input_index;
    noisy.frames.resize(clean.frames.size());
    parallel_for(
        clean.frames.size(),
        [&](std::size_t j) {
            Rng frame_rng = rng.child(j);
            noisy.frames[j] = add_noise(clean.frames[j], model, frame_rng);
        },
        workers);
    return noisy;
}

} // namespace pcst
