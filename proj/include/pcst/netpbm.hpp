#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "errors.hpp"
#include "file_io.hpp"
#include "image.hpp"

namespace pcst {

namespace detail {

class HeaderReader {
public:
    HeaderReader(const std::vector<std::uint8_t>& bytes, std::size_t start) : bytes_(bytes), pos_(start) {}

    std::size_t pos() const noexcept { return pos_; }

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            const auto c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
                ++pos_;
            } else {
                break;
            }
        }
    }

    int read_uint(const char* what) {
        skip_space_and_comments();
        const std::size_t start = pos_;
        long value = 0;
        while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
            value = value * 10 + (bytes_[pos_] - '0');
            if (value > 1'000'000) throw format_error(std::string("netpbm: ") + what + " too large", start);
            ++pos_;
        }
        if (pos_ == start) throw format_error(std::string("netpbm: expected ") + what, start);
        return static_cast<int>(value);
    }

    void expect_single_whitespace() {
        if (pos_ >= bytes_.size()) throw format_error("netpbm: header ends prematurely", pos_);
        const auto c = bytes_[pos_];
        if (!(c == ' ' || c == '\t' || c == '\n' || c == '\r'))
            throw format_error("netpbm: expected whitespace after maxval", pos_);
        ++pos_;
    }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_;
};

} // namespace detail

/// Parses binary PGM (P5) or PPM (P6) with maxval 255. Interleaved RGB is
/// converted to planar channels; samples keep their 0..255 values.
inline Image decode_netpbm(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
        throw format_error("netpbm: expected P5 or P6 magic", 0);
    const int channels = bytes[1] == '5' ? 1 : 3;

    detail::HeaderReader header(bytes, 2);
    const int width = header.read_uint("width");
    const int height = header.read_uint("height");
    const int maxval = header.read_uint("maxval");
    if (width < 1 || height < 1) throw format_error("netpbm: zero dimension", header.pos());
    if (maxval != 255) throw format_error("netpbm: unsupported maxval " + std::to_string(maxval), header.pos());
    header.expect_single_whitespace();

    const std::size_t offset = header.pos();
    const std::size_t expected = static_cast<std::size_t>(width) * height * channels;
    if (bytes.size() - offset < expected)
        throw format_error("netpbm: truncated payload, need " + std::to_string(expected) + " bytes", bytes.size());

    Image img(channels, height, width);
    const std::uint8_t* p = bytes.data() + offset;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < channels; ++c) img.at(c, y, x) = static_cast<float>(*p++);
    return img;
}

inline Image load_image(const std::filesystem::path& path) {
    return decode_netpbm(detail::read_file(path));
}

/// Clamp to [0, 255] and round half away from zero.
inline std::uint8_t quantize_sample(float v) {
    if (!(v > 0.0f)) return 0; // also maps NaN to 0
    if (v >= 255.0f) return 255;
    return static_cast<std::uint8_t>(std::round(v));
}

inline std::vector<std::uint8_t> encode_netpbm(const Image& img) {
    if (img.channels() != 1 && img.channels() != 3)
        throw std::invalid_argument("netpbm: only 1 or 3 channels can be written");
    const std::string header = std::string(img.channels() == 1 ? "P5" : "P6") + "\n" +
                               std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
    std::vector<std::uint8_t> bytes(header.begin(), header.end());
    bytes.reserve(bytes.size() + img.size());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < img.channels(); ++c) bytes.push_back(quantize_sample(img.at(c, y, x)));
    return bytes;
}

inline void save_image(const Image& img, const std::filesystem::path& path) {
    detail::write_file(path, encode_netpbm(img));
}

} // namespace pcst
