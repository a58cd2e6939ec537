#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <utility>
#include <string_view>

namespace pcst {

/// SplitMix64 finalizer. Used to derive independent child seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
    return mix64(mix64(seed) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

/// FNV-1a over a stage name, so seeds can be keyed by (seed, stage, index).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage,
                                    std::uint64_t index) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : stage) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return derive_seed(seed ^ mix64(h), index);
}

/// Deterministic random source.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// C++ standard. Uniforms take the top 53 bits of one engine output.
/// Gaussians use a single-precision Box-Muller transform on two 32-bit
/// uniforms cut from one engine output and cache the second variate.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    /// Independent generator for a numbered sub-task.
    Rng child(std::uint64_t index) const { return Rng(derive_seed(seed_, index)); }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n) {
        // Lemire's multiply-shift with rejection: unbiased and engine-defined.
        for (;;) {
            const std::uint64_t x = engine_();
            const unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
            const auto low = static_cast<std::uint64_t>(m);
            if (low >= n || low >= (-n) % n) return static_cast<std::uint64_t>(m >> 64);
        }
    }

    /// Standard normal variate.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const auto [c, sn] = normal_pair();
        spare_ = sn;
        has_spare_ = true;
        return c;
    }

    /// Fills `out` with sigma * normal(), consuming the stream exactly as
    /// repeated normal() calls would.
    void fill_normal(std::span<float> out, double sigma) {
        std::size_t i = 0;
        if (has_spare_ && !out.empty()) {
            has_spare_ = false;
            out[i++] = static_cast<float>(sigma * spare_);
        }
        for (; i + 1 < out.size(); i += 2) {
            const auto [c, sn] = normal_pair();
            out[i] = static_cast<float>(sigma * c);
            out[i + 1] = static_cast<float>(sigma * sn);
        }
        if (i < out.size()) out[i] = static_cast<float>(sigma * normal());
    }

private:
    std::pair<double, double> normal_pair() {
        // One engine output feeds both uniforms: the high half gives
        // u1 in (0, 1], the low half u2 in [0, 1]. The transform runs in
        // single precision, which is what the float sample fields store.
        const std::uint64_t bits = engine_();
        const float u1 = static_cast<float>((bits >> 32) + 1) * 0x1.0p-32f;
        const float u2 = static_cast<float>(bits & 0xffffffffu) * 0x1.0p-32f;
        const float radius = std::sqrt(-2.0f * std::log(u1));
        const float angle = 2.0f * std::numbers::pi_v<float> * u2;
        return {radius * std::cos(angle), radius * std::sin(angle)};
    }

    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace pcst
