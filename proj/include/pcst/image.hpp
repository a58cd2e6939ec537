#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcst {

/// Planar float image: channel-major, then row-major within a channel.
/// Samples are unscaled (8-bit content lives in [0, 255]) and may leave
/// that range once noise is added.
class Image {
public:
    Image() = default;

    Image(int channels, int height, int width, float fill = 0.0f)
        : channels_(channels), height_(height), width_(width) {
        if (channels < 1 || height < 1 || width < 1)
            throw std::invalid_argument("Image: dimensions must be positive");
        data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
    }

    Image(int channels, int height, int width, std::vector<float> data)
        : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
        if (channels < 1 || height < 1 || width < 1)
            throw std::invalid_argument("Image: dimensions must be positive");
        if (data_.size() != static_cast<std::size_t>(channels) * height * width)
            throw std::invalid_argument("Image: data length does not match shape");
    }

    int channels() const noexcept { return channels_; }
    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t plane_size() const noexcept { return static_cast<std::size_t>(height_) * width_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    float& at(int c, int y, int x) noexcept { return data_[index(c, y, x)]; }
    float at(int c, int y, int x) const noexcept { return data_[index(c, y, x)]; }

    const float* row(int c, int y) const noexcept { return data_.data() + index(c, y, 0); }
    float* row(int c, int y) noexcept { return data_.data() + index(c, y, 0); }

    std::span<float> samples() noexcept { return data_; }
    std::span<const float> samples() const noexcept { return data_; }
    const std::vector<float>& data() const noexcept { return data_; }

    bool same_shape(const Image& other) const noexcept {
        return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
    }

    bool all_finite() const noexcept {
        for (float v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t index(int c, int y, int x) const noexcept {
        return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
    }

    int channels_ = 0;
    int height_ = 0;
    int width_ = 0;
    std::vector<float> data_;
};

/// Dense row-major float array of arbitrary rank.
struct Tensor {
    std::vector<std::uint32_t> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<std::uint32_t> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
        if (element_count(shape) != data.size())
            throw std::invalid_argument("Tensor: data length does not match shape");
    }
    explicit Tensor(std::vector<std::uint32_t> s, float fill = 0.0f) : shape(std::move(s)) {
        data.assign(element_count(shape), fill);
    }

    static std::size_t element_count(const std::vector<std::uint32_t>& s) {
        if (s.empty()) return 0;
        return std::accumulate(s.begin(), s.end(), std::size_t{1},
                               [](std::size_t a, std::uint32_t b) { return a * b; });
    }

    std::size_t size() const noexcept { return data.size(); }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline Tensor to_tensor(const Image& img) {
    return Tensor({static_cast<std::uint32_t>(img.channels()), static_cast<std::uint32_t>(img.height()),
                   static_cast<std::uint32_t>(img.width())},
                  img.data());
}

/// Accepts rank 2 ([H, W]) or rank 3 ([C, H, W]) tensors.
inline Image to_image(const Tensor& t) {
    if (t.shape.size() == 2)
        return Image(1, static_cast<int>(t.shape[0]), static_cast<int>(t.shape[1]), t.data);
    if (t.shape.size() == 3)
        return Image(static_cast<int>(t.shape[0]), static_cast<int>(t.shape[1]),
                     static_cast<int>(t.shape[2]), t.data);
    throw std::invalid_argument("to_image: tensor must have rank 2 or 3");
}

/// Ordered frames of one scene; frames other than input_index form the
/// reference set used for target synthesis.
struct Burst {
    std::vector<Image> frames;
    std::size_t input_index = 0;

    std::size_t size() const noexcept { return frames.size(); }
    const Image& input() const { return frames.at(input_index); }

    void validate() const {
        if (frames.size() < 2) throw std::invalid_argument("Burst: need at least two frames");
        if (input_index >= frames.size()) throw std::invalid_argument("Burst: input_index out of range");
        for (const auto& f : frames)
            if (!f.same_shape(frames.front()))
                throw std::invalid_argument("Burst: frames differ in shape");
    }
};

/// Pixel position, row first.
struct Coord {
    int row = 0;
    int col = 0;
    friend bool operator==(const Coord&, const Coord&) = default;
    friend auto operator<=>(const Coord&, const Coord&) = default;
};

/// Reflection without repeating the edge sample: -1 -> 1, n -> n - 2.
/// Valid for i in (-n, 2n - 1).
constexpr int reflect_index(int i, int n) noexcept {
    if (i < 0) return -i;
    if (i >= n) return 2 * (n - 1) - i;
    return i;
}

struct Padding {
    int top = 0;
    int bottom = 0;
    int left = 0;
    int right = 0;

    friend bool operator==(const Padding&, const Padding&) = default;
};

inline Image mirror_pad(const Image& img, const Padding& pad) {
    if (pad.top < 0 || pad.bottom < 0 || pad.left < 0 || pad.right < 0)
        throw std::invalid_argument("mirror_pad: negative pad");
    if (pad.top >= img.height() || pad.bottom >= img.height() || pad.left >= img.width() ||
        pad.right >= img.width())
        throw std::invalid_argument("mirror_pad: pad must be smaller than the image dimension");

    const int h = img.height() + pad.top + pad.bottom;
    const int w = img.width() + pad.left + pad.right;
    Image out(img.channels(), h, w);
    for (int c = 0; c < img.channels(); ++c)
        for (int y = 0; y < h; ++y) {
            const float* src = img.row(c, reflect_index(y - pad.top, img.height()));
            float* dst = out.row(c, y);
            for (int x = 0; x < w; ++x) dst[x] = src[reflect_index(x - pad.left, img.width())];
        }
    return out;
}

inline Image mirror_pad(const Image& img, int top, int bottom, int left, int right) {
    return mirror_pad(img, Padding{top, bottom, left, right});
}

/// Window of `height` x `width` starting at (top, left).
inline Image crop(const Image& img, int top, int left, int height, int width) {
    if (top < 0 || left < 0 || height < 1 || width < 1 || top + height > img.height() ||
        left + width > img.width())
        throw std::invalid_argument("crop: window outside image");
    Image out(img.channels(), height, width);
    for (int c = 0; c < img.channels(); ++c)
        for (int y = 0; y < height; ++y) {
            const float* src = img.row(c, top + y) + left;
            std::copy(src, src + width, out.row(c, y));
        }
    return out;
}

inline double mse(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("mse: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

/// Peak signal-to-noise ratio over the flattened sample array.
/// Returns +infinity when the images are identical.
inline double psnr(const Image& a, const Image& b, double peak = 255.0) {
    const double err = mse(a, b);
    if (err == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / err);
}

} // namespace pcst
