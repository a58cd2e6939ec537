#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "image.hpp"

namespace pcst {

/// Manifest row linking an input frame to its crafted target(s).
struct PairRecord {
    std::string input;
    std::vector<std::string> targets;
    Coord offset_used;
    std::optional<double> s_yr;
    std::optional<bool> retained;
    std::vector<std::uint64_t> seed_trail;

    friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

} // namespace pcst
