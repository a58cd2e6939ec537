#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pcst {

/// Raised when a file does not follow the expected on-disk layout.
/// Carries the byte offset at which parsing gave up.
class format_error : public std::runtime_error {
public:
    format_error(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class io_error : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace pcst
