#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "image.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace pcst {

/// Stack of double-precision planes, channel-major.
struct Planes {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> v;

    Planes() = default;
    Planes(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w), v(static_cast<std::size_t>(c) * h * w, fill) {}

    double& at(int c, int y, int x) { return v[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    double at(int c, int y, int x) const { return v[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    bool same_shape(const Planes& o) const { return channels == o.channels && height == o.height && width == o.width; }
};

inline Planes to_planes(const Image& img, double scale = 1.0) {
    Planes p(img.channels(), img.height(), img.width());
    for (std::size_t i = 0; i < img.size(); ++i) p.v[i] = scale * static_cast<double>(img.data()[i]);
    return p;
}

inline Image to_image(const Planes& p, double scale = 1.0) {
    std::vector<float> data(p.v.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(scale * p.v[i]);
    return Image(p.channels, p.height, p.width, std::move(data));
}

/// Two bias-free 3x3 convolutions with a rectifier between them, predicting
/// the noise: out = y - conv2(relu(conv1(y))). Convolutions mirror-pad by one.
struct MiniDenoiser {
    int channels = 1;
    int filters = 8;
    std::vector<double> layer1; ///< [filters][channels][3][3]
    std::vector<double> layer2; ///< [channels][filters][3][3]

    MiniDenoiser() = default;
    MiniDenoiser(int c, int f)
        : channels(c), filters(f), layer1(static_cast<std::size_t>(9) * c * f, 0.0),
          layer2(static_cast<std::size_t>(9) * c * f, 0.0) {
        if (c < 1 || f < 1) throw std::invalid_argument("MiniDenoiser: channels and filters must be positive");
    }

    std::size_t parameter_count() const { return layer1.size() + layer2.size(); }

    double& parameter(std::size_t i) { return i < layer1.size() ? layer1[i] : layer2[i - layer1.size()]; }
    double parameter(std::size_t i) const { return i < layer1.size() ? layer1[i] : layer2[i - layer1.size()]; }

    friend bool operator==(const MiniDenoiser&, const MiniDenoiser&) = default;
};

/// Gradient with the same layout as MiniDenoiser's weights.
struct Gradient {
    std::vector<double> layer1;
    std::vector<double> layer2;

    std::size_t size() const { return layer1.size() + layer2.size(); }
    double operator[](std::size_t i) const { return i < layer1.size() ? layer1[i] : layer2[i - layer1.size()]; }
};

namespace detail {

inline Planes pad_reflect1(const Planes& in) {
    if (in.height < 2 || in.width < 2) throw std::invalid_argument("MiniDenoiser: input must be at least 2x2");
    Planes out(in.channels, in.height + 2, in.width + 2);
    for (int c = 0; c < in.channels; ++c)
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x)
                out.at(c, y, x) = in.at(c, reflect_index(y - 1, in.height), reflect_index(x - 1, in.width));
    return out;
}

/// Adds gradient collected on the padded grid back onto the pixels it mirrors.
inline Planes fold_reflect1(const Planes& padded, int height, int width) {
    Planes out(padded.channels, height, width);
    for (int c = 0; c < padded.channels; ++c)
        for (int y = 0; y < padded.height; ++y)
            for (int x = 0; x < padded.width; ++x)
                out.at(c, reflect_index(y - 1, height), reflect_index(x - 1, width)) += padded.at(c, y, x);
    return out;
}

/// out[o](y, x) = sum_{i,a,b} w[o][i][a][b] * padded[i](y + a, x + b)
inline Planes conv3x3(const Planes& padded, std::span<const double> w, int out_channels) {
    const int h = padded.height - 2, wd = padded.width - 2;
    Planes out(out_channels, h, wd);
    for (int o = 0; o < out_channels; ++o)
        for (int i = 0; i < padded.channels; ++i)
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) {
                    const double k = w[((static_cast<std::size_t>(o) * padded.channels + i) * 3 + a) * 3 + b];
                    for (int y = 0; y < h; ++y) {
                        const double* src = &padded.v[(static_cast<std::size_t>(i) * padded.height + y + a) * padded.width + b];
                        double* dst = &out.v[(static_cast<std::size_t>(o) * h + y) * wd];
                        for (int x = 0; x < wd; ++x) dst[x] += k * src[x];
                    }
                }
    return out;
}

/// Weight gradient and padded-input gradient of conv3x3 given the output gradient.
inline void conv3x3_backward(const Planes& padded, std::span<const double> w, const Planes& grad_out,
                             std::span<double> grad_w, Planes* grad_padded) {
    const int h = grad_out.height, wd = grad_out.width;
    for (int o = 0; o < grad_out.channels; ++o)
        for (int i = 0; i < padded.channels; ++i)
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) {
                    const std::size_t widx = ((static_cast<std::size_t>(o) * padded.channels + i) * 3 + a) * 3 + b;
                    const double k = w[widx];
                    double acc = 0.0;
                    for (int y = 0; y < h; ++y) {
                        const std::size_t prow = (static_cast<std::size_t>(i) * padded.height + y + a) * padded.width + b;
                        const double* src = &padded.v[prow];
                        const double* g = &grad_out.v[(static_cast<std::size_t>(o) * h + y) * wd];
                        for (int x = 0; x < wd; ++x) acc += g[x] * src[x];
                        if (grad_padded) {
                            double* gp = &grad_padded->v[prow];
                            for (int x = 0; x < wd; ++x) gp[x] += k * g[x];
                        }
                    }
                    grad_w[widx] += acc;
                }
}

struct ForwardCache {
    Planes input_padded;
    Planes pre;         ///< conv1 output
    Planes act_padded;  ///< relu(pre), mirror padded
    Planes output;
};

inline ForwardCache forward_cached(const MiniDenoiser& m, const Planes& y) {
    if (y.channels != m.channels) throw std::invalid_argument("MiniDenoiser: channel mismatch");
    ForwardCache c;
    c.input_padded = pad_reflect1(y);
    c.pre = conv3x3(c.input_padded, m.layer1, m.filters);
    Planes act = c.pre;
    for (double& v : act.v) v = std::max(v, 0.0);
    c.act_padded = pad_reflect1(act);
    const Planes noise = conv3x3(c.act_padded, m.layer2, m.channels);
    c.output = y;
    for (std::size_t i = 0; i < c.output.v.size(); ++i) c.output.v[i] -= noise.v[i];
    return c;
}

} // namespace detail

inline Planes forward(const MiniDenoiser& model, const Planes& y) { return detail::forward_cached(model, y).output; }

inline Image forward(const MiniDenoiser& model, const Image& y) { return to_image(forward(model, to_planes(y))); }

struct LossAndGrad {
    double loss = 0.0;
    Gradient grad;
};

/// loss = 1/2 ||f(y) - target||^2 and its gradient by reverse accumulation.
inline LossAndGrad loss_and_grad(const MiniDenoiser& model, const Planes& y, const Planes& target) {
    if (!y.same_shape(target)) throw std::invalid_argument("loss_and_grad: shape mismatch");
    const detail::ForwardCache c = detail::forward_cached(model, y);

    LossAndGrad out;
    out.grad.layer1.assign(model.layer1.size(), 0.0);
    out.grad.layer2.assign(model.layer2.size(), 0.0);

    // d loss / d noise-prediction = -(f(y) - target)
    Planes grad_noise(y.channels, y.height, y.width);
    for (std::size_t i = 0; i < y.v.size(); ++i) {
        const double r = c.output.v[i] - target.v[i];
        out.loss += 0.5 * r * r;
        grad_noise.v[i] = -r;
    }

    Planes grad_act_padded(model.filters, y.height + 2, y.width + 2);
    detail::conv3x3_backward(c.act_padded, model.layer2, grad_noise, out.grad.layer2, &grad_act_padded);
    Planes grad_pre = detail::fold_reflect1(grad_act_padded, y.height, y.width);
    for (std::size_t i = 0; i < grad_pre.v.size(); ++i)
        if (!(c.pre.v[i] > 0.0)) grad_pre.v[i] = 0.0;
    detail::conv3x3_backward(c.input_padded, model.layer1, grad_pre, out.grad.layer1, nullptr);
    return out;
}

inline LossAndGrad loss_and_grad(const MiniDenoiser& model, const Image& y, const Image& target) {
    return loss_and_grad(model, to_planes(y), to_planes(target));
}

/// Smallest |pre-activation| of the first layer; finite differences are only
/// meaningful when this stays clear of zero.
inline double min_abs_preactivation(const MiniDenoiser& model, const Planes& y) {
    const detail::ForwardCache c = detail::forward_cached(model, y);
    double m = std::numeric_limits<double>::infinity();
    for (double v : c.pre.v) m = std::min(m, std::abs(v));
    return m;
}

inline MiniDenoiser random_model(int channels, int filters, double std1, double std2, Rng& rng) {
    MiniDenoiser m(channels, filters);
    for (double& w : m.layer1) w = std1 * rng.normal();
    for (double& w : m.layer2) w = std2 * rng.normal();
    return m;
}

// --- unbiased-gradient check -------------------------------------------------

/// Fills a target-noise draw.
using NoiseSampler = std::function<void(Rng&, std::span<double>)>;

struct Lemma1Report {
    std::size_t draws = 0;
    std::size_t parameters = 0;
    double max_standardized_deviation = 0.0;
    std::size_t worst_parameter = 0;
    double mean_standardized_deviation = 0.0;
};

/// Compares the w-averaged gradient of 1/2||f(y) - (x + w)||^2 with the
/// supervised gradient of 1/2||f(y) - x||^2, for a fixed y = x + z.
/// Deviation per parameter is |mean - supervised| / standard error.
inline Lemma1Report lemma1_check(const MiniDenoiser& model, const Planes& clean, const Planes& input_noise,
                                 std::size_t draws, const NoiseSampler& sampler, Rng& rng) {
    if (!clean.same_shape(input_noise)) throw std::invalid_argument("lemma1_check: shape mismatch");
    if (draws < 2) throw std::invalid_argument("lemma1_check: need at least two draws");
    Planes y = clean;
    for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += input_noise.v[i];
    const Gradient supervised = loss_and_grad(model, y, clean).grad;
    const std::size_t P = supervised.size();

    // Welford accumulation; a constant stream leaves the mean bit-exact.
    std::vector<double> mean(P, 0.0), m2(P, 0.0);
    Planes target = clean;
    std::vector<double> w(clean.v.size());
    for (std::size_t k = 1; k <= draws; ++k) {
        sampler(rng, w);
        for (std::size_t i = 0; i < w.size(); ++i) target.v[i] = clean.v[i] + w[i];
        const Gradient g = loss_and_grad(model, y, target).grad;
        for (std::size_t p = 0; p < P; ++p) {
            const double v = g[p];
            const double d = v - mean[p];
            mean[p] += d / static_cast<double>(k);
            m2[p] += d * (v - mean[p]);
        }
    }

    Lemma1Report r;
    r.draws = draws;
    r.parameters = P;
    double total = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
        const double se = std::sqrt(m2[p] / static_cast<double>(draws - 1) / static_cast<double>(draws));
        const double diff = std::abs(mean[p] - supervised[p]);
        double dev;
        if (se > 0.0)
            dev = diff / se;
        else
            dev = diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        total += dev;
        if (p == 0 || dev > r.max_standardized_deviation) {
            r.max_standardized_deviation = dev;
            r.worst_parameter = p;
        }
    }
    r.mean_standardized_deviation = total / static_cast<double>(P);
    return r;
}

// --- training ----------------------------------------------------------------

struct TrainConfig {
    int epochs = 30;
    double learning_rate = 1.0;
    int lr_step = 5;          ///< halve the rate every lr_step epochs
    int batch = 8;
    int crop = 50;
    int crops_per_pair = 8;
    int filters = 8;
    double data_scale = 1.0 / 255.0;
    std::uint64_t seed = 0;
    unsigned workers = 0;

    void validate() const {
        if (epochs < 1 || !(learning_rate > 0.0) || lr_step < 1 || batch < 1 || crop < 2 || crops_per_pair < 1 ||
            filters < 1 || !(data_scale > 0.0))
            throw std::invalid_argument("TrainConfig: all settings must be positive");
    }
};

struct TrainingPair {
    Image input;
    Image target;
};

struct TrainResult {
    MiniDenoiser model;
    std::vector<double> epoch_loss; ///< mean per-sample loss, per epoch
};

/// Mini-batch SGD on random crops of (input, target) pairs.
///
/// The per-sample loss is 1/2||f(y) - t||^2 divided by the crop's sample
/// count, with samples multiplied by data_scale. The model is positively
/// homogeneous, so the trained network applies unchanged to unscaled images.
/// Layer one starts from He-scaled Gaussian weights and layer two from zero,
/// making the initial model the identity.
inline TrainResult sgd_train(std::span<const TrainingPair> pairs, const TrainConfig& cfg) {
    cfg.validate();
    if (pairs.empty()) throw std::invalid_argument("sgd_train: no training pairs");
    const int channels = pairs.front().input.channels();
    for (const auto& p : pairs)
        if (p.input.channels() != channels || !p.input.same_shape(p.target))
            throw std::invalid_argument("sgd_train: inconsistent pair shapes");

    Rng rng(cfg.seed);
    TrainResult result;
    result.model = MiniDenoiser(channels, cfg.filters);
    const double init_std = std::sqrt(2.0 / (9.0 * channels));
    for (double& w : result.model.layer1) w = init_std * rng.normal();
    // Zero-sum 3x3 kernels: layer one starts blind to local brightness, so
    // early updates are not dominated by the image's DC level.
    for (std::size_t k = 0; k < result.model.layer1.size(); k += 9) {
        double mean = 0.0;
        for (std::size_t i = 0; i < 9; ++i) mean += result.model.layer1[k + i];
        mean /= 9.0;
        for (std::size_t i = 0; i < 9; ++i) result.model.layer1[k + i] -= mean;
    }

    struct Sample {
        std::size_t pair;
        int top, left, height, width;
    };
    double lr = cfg.learning_rate;
    MiniDenoiser& model = result.model;
    const std::size_t P = model.parameter_count();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (epoch > 0 && epoch % cfg.lr_step == 0) lr *= 0.5;

        std::vector<Sample> samples;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const Image& img = pairs[i].input;
            const int ch = std::min(cfg.crop, img.height()), cw = std::min(cfg.crop, img.width());
            for (int c = 0; c < cfg.crops_per_pair; ++c) {
                const int top = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(img.height() - ch + 1)));
                const int left = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(img.width() - cw + 1)));
                samples.push_back({i, top, left, ch, cw});
            }
        }
        for (std::size_t i = samples.size(); i > 1; --i) std::swap(samples[i - 1], samples[rng.uniform_index(i)]);

        double epoch_total = 0.0;
        for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(cfg.batch));
            std::vector<LossAndGrad> per(end - start);
            parallel_for(
                per.size(),
                [&](std::size_t b) {
                    const Sample& s = samples[start + b];
                    const Planes y = to_planes(crop(pairs[s.pair].input, s.top, s.left, s.height, s.width), cfg.data_scale);
                    const Planes t = to_planes(crop(pairs[s.pair].target, s.top, s.left, s.height, s.width), cfg.data_scale);
                    per[b] = loss_and_grad(model, y, t);
                    const double norm = 1.0 / static_cast<double>(y.v.size());
                    per[b].loss *= norm;
                    for (double& g : per[b].grad.layer1) g *= norm;
                    for (double& g : per[b].grad.layer2) g *= norm;
                },
                cfg.workers);

            std::vector<double> step(P, 0.0);
            for (const auto& lg : per) {
                epoch_total += lg.loss;
                for (std::size_t p = 0; p < P; ++p) step[p] += lg.grad[p];
            }
            const double scale = lr / static_cast<double>(per.size());
            for (std::size_t p = 0; p < P; ++p) model.parameter(p) -= scale * step[p];
        }
        result.epoch_loss.push_back(epoch_total / static_cast<double>(samples.size()));
    }
    return result;
}

struct EvalPair {
    Image noisy;
    Image clean;
};

struct EvalReport {
    double psnr_before = 0.0;
    double psnr_after = 0.0;
    std::vector<double> before;
    std::vector<double> after;

    double gain() const { return psnr_after - psnr_before; }
};

/// Mean PSNR of the noisy inputs and of the denoised outputs against ground truth.
inline EvalReport evaluate(const MiniDenoiser& model, std::span<const EvalPair> pairs, unsigned workers = 0) {
    if (pairs.empty()) throw std::invalid_argument("evaluate: no pairs");
    EvalReport r;
    r.before.resize(pairs.size());
    r.after.resize(pairs.size());
    parallel_for(
        pairs.size(),
        [&](std::size_t i) {
            r.before[i] = psnr(pairs[i].noisy, pairs[i].clean);
            r.after[i] = psnr(forward(model, pairs[i].noisy), pairs[i].clean);
        },
        workers);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        r.psnr_before += r.before[i];
        r.psnr_after += r.after[i];
    }
    r.psnr_before /= static_cast<double>(pairs.size());
    r.psnr_after /= static_cast<double>(pairs.size());
    return r;
}

} // namespace pcst
