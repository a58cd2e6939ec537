#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "image.hpp"
#include "rng.hpp"

namespace pcst {

/// Parameters for procedurally generated clean bursts: a smooth gradient,
/// a sinusoidal texture and a set of flat discs and rectangles, seen through
/// a jittering camera while some shapes drift on their own.
struct SceneConfig {
    int channels = 1;
    int height = 96;
    int width = 96;
    int frames = 5;
    int shapes = 12;
    int max_shift = 2;        ///< per-frame camera jitter bound, pixels
    double object_motion = 0; ///< per-frame drift of moving shapes, pixels
    double moving_fraction = 0.3;
    double texture_amplitude = 12.0;
};

namespace detail {

struct Shape {
    bool disc = true;
    double cy = 0, cx = 0, size = 0;
    double vy = 0, vx = 0;
    std::vector<double> value;
};

struct SceneSpec {
    std::vector<double> base, grad_y, grad_x;
    double tex_fy = 0, tex_fx = 0, tex_phase = 0, tex_amp = 0;
    std::vector<Shape> shapes;
};

inline SceneSpec random_scene(const SceneConfig& cfg, Rng& rng) {
    SceneSpec s;
    for (int c = 0; c < cfg.channels; ++c) {
        s.base.push_back(70.0 + 100.0 * rng.uniform());
        s.grad_y.push_back((rng.uniform() - 0.5) * 60.0 / cfg.height);
        s.grad_x.push_back((rng.uniform() - 0.5) * 60.0 / cfg.width);
    }
    s.tex_fy = 2.0 * std::numbers::pi / (6.0 + 10.0 * rng.uniform());
    s.tex_fx = 2.0 * std::numbers::pi / (6.0 + 10.0 * rng.uniform());
    s.tex_phase = 2.0 * std::numbers::pi * rng.uniform();
    s.tex_amp = cfg.texture_amplitude;
    const double extent = std::min(cfg.height, cfg.width);
    for (int i = 0; i < cfg.shapes; ++i) {
        Shape sh;
        sh.disc = rng.uniform() < 0.5;
        sh.cy = rng.uniform() * cfg.height;
        sh.cx = rng.uniform() * cfg.width;
        sh.size = extent * (0.05 + 0.15 * rng.uniform());
        if (rng.uniform() < cfg.moving_fraction) {
            const double angle = 2.0 * std::numbers::pi * rng.uniform();
            sh.vy = cfg.object_motion * std::sin(angle);
            sh.vx = cfg.object_motion * std::cos(angle);
        }
        for (int c = 0; c < cfg.channels; ++c) sh.value.push_back(30.0 + 195.0 * rng.uniform());
        s.shapes.push_back(std::move(sh));
    }
    return s;
}

inline Image render(const SceneSpec& s, const SceneConfig& cfg, double shift_y, double shift_x, double t) {
    Image img(cfg.channels, cfg.height, cfg.width);
    for (int y = 0; y < cfg.height; ++y)
        for (int x = 0; x < cfg.width; ++x) {
            const double sy = y + shift_y, sx = x + shift_x;
            const double tex = s.tex_amp * std::sin(s.tex_fy * sy + s.tex_phase) * std::cos(s.tex_fx * sx);
            const Shape* top = nullptr;
            for (const Shape& sh : s.shapes) {
                const double dy = sy - (sh.cy + sh.vy * t), dx = sx - (sh.cx + sh.vx * t);
                const bool inside = sh.disc ? dy * dy + dx * dx <= sh.size * sh.size
                                            : std::abs(dy) <= sh.size && std::abs(dx) <= 0.7 * sh.size;
                if (inside) top = &sh;
            }
            for (int c = 0; c < cfg.channels; ++c) {
                const double v = top ? top->value[static_cast<std::size_t>(c)] + 0.3 * tex
                                     : s.base[static_cast<std::size_t>(c)] + s.grad_y[static_cast<std::size_t>(c)] * sy +
                                           s.grad_x[static_cast<std::size_t>(c)] * sx + tex;
                img.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 255.0));
            }
        }
    return img;
}

} // namespace detail

inline Image synthetic_scene(const SceneConfig& cfg, Rng& rng) {
    const detail::SceneSpec spec = detail::random_scene(cfg, rng);
    return detail::render(spec, cfg, 0.0, 0.0, 0.0);
}

/// Clean burst of cfg.frames frames with the middle frame as input.
inline Burst synthetic_clean_burst(const SceneConfig& cfg, Rng& rng) {
    const detail::SceneSpec spec = detail::random_scene(cfg, rng);
    Burst b;
    b.input_index = static_cast<std::size_t>(cfg.frames / 2);
    for (int j = 0; j < cfg.frames; ++j) {
        const double t = j - static_cast<double>(b.input_index);
        double sy = 0.0, sx = 0.0;
        if (j != static_cast<int>(b.input_index) && cfg.max_shift > 0) {
            sy = static_cast<double>(rng.uniform_index(2 * cfg.max_shift + 1)) - cfg.max_shift;
            sx = static_cast<double>(rng.uniform_index(2 * cfg.max_shift + 1)) - cfg.max_shift;
        }
        b.frames.push_back(detail::render(spec, cfg, sy, sx, t));
    }
    return b;
}

} // namespace pcst
