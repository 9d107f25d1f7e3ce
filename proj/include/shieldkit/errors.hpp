#pragma once

#include <stdexcept>
#include <string>

namespace shieldkit {

/// Bad user input: unknown names, malformed specs, inconsistent files.
/// The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// A simulation left the declared grid bounds while the out-of-bounds mode
/// is "error". Carries enough context to name the offending cell.
/// The CLI maps this to exit code 3.
class OutOfBoundsAbort : public std::runtime_error {
public:
    OutOfBoundsAbort(const std::string& what, std::uint64_t cell, std::uint32_t action,
                     std::uint64_t sample)
        : std::runtime_error(what), cell_id(cell), action_index(action), sample_index(sample) {}

    std::uint64_t cell_id;
    std::uint32_t action_index;
    std::uint64_t sample_index;
};

} // namespace shieldkit
