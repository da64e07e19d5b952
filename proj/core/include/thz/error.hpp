#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace thz {

/// Failure categories shared by every module. The command-line tool maps
/// each category onto a stable exit code.
enum class ErrorKind {
    usage,
    input,      // rejected input: non-finite samples, malformed files
    dimension,  // shape / length mismatch
    index,      // selector out of range
    geometry,   // non-positive or non-finite thickness
    no_band,    // empty validity mask
    model,      // material or network model violates its invariants
    gating,     // no dominant pulse to segment
    degenerate, // zero-width rendering range
    numeric,    // overflow, divergence, failed verification
    io,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) fail(kind, message);
}

}  // namespace thz
