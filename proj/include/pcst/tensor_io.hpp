#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "errors.hpp"
#include "file_io.hpp"
#include "image.hpp"

namespace pcst {

/// PCRF float tensor container.
///
/// Layout (all integers 32-bit little-endian unsigned):
///   "PCRF" | version | rank | shape[rank] | payload (IEEE-754 binary32 LE, row-major)
inline constexpr std::uint32_t pcrf_version = 1;

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t offset) {
    if (in.size() < offset + 4) throw format_error("pcrf: unexpected end of file", in.size());
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
    return v;
}

} // namespace detail

inline std::vector<std::uint8_t> encode_pcrf(const Tensor& t) {
    if (t.shape.empty()) throw std::invalid_argument("pcrf: rank-0 tensors are not representable");
    if (Tensor::element_count(t.shape) != t.data.size())
        throw std::invalid_argument("pcrf: data length does not match shape");
    std::vector<std::uint8_t> out = {'P', 'C', 'R', 'F'};
    out.reserve(12 + 4 * t.shape.size() + 4 * t.data.size());
    detail::put_u32(out, pcrf_version);
    detail::put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) detail::put_u32(out, d);
    for (float v : t.data) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

inline Tensor decode_pcrf(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "PCRF", 4) != 0)
        throw format_error("pcrf: bad magic", 0);
    const std::uint32_t version = detail::get_u32(bytes, 4);
    if (version != pcrf_version)
        throw format_error("pcrf: unsupported version " + std::to_string(version), 4);
    const std::uint32_t rank = detail::get_u32(bytes, 8);
    if (rank == 0) throw format_error("pcrf: rank must be at least 1", 8);
    if (rank > 16) throw format_error("pcrf: implausible rank " + std::to_string(rank), 8);

    Tensor t;
    std::size_t offset = 12;
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i, offset += 4) {
        const std::uint32_t d = detail::get_u32(bytes, offset);
        t.shape.push_back(d);
        count *= d;
        if (count > (std::size_t{1} << 34)) throw format_error("pcrf: implausible element count", offset);
    }
    if (bytes.size() - offset != 4 * count)
        throw format_error("pcrf: payload length mismatch, expected " + std::to_string(4 * count) + " bytes",
                           offset);
    t.data.resize(count);
    for (std::size_t i = 0; i < count; ++i)
        t.data[i] = std::bit_cast<float>(detail::get_u32(bytes, offset + 4 * i));
    return t;
}

inline void save_tensor(const Tensor& t, const std::filesystem::path& path) {
    detail::write_file(path, encode_pcrf(t));
}

inline Tensor load_tensor(const std::filesystem::path& path) {
    return decode_pcrf(detail::read_file(path));
}

} // namespace pcst
