#include "thz/error.hpp"

namespace thz {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::usage: return "usage error";
        case ErrorKind::input: return "input error";
        case ErrorKind::dimension: return "dimension error";
        case ErrorKind::index: return "index error";
        case ErrorKind::geometry: return "geometry error";
        case ErrorKind::no_band: return "no-band error";
        case ErrorKind::model: return "model error";
        case ErrorKind::gating: return "gating error";
        case ErrorKind::degenerate: return "degenerate-range error";
        case ErrorKind::numeric: return "numeric error";
        case ErrorKind::io: return "I/O error";
    }
    return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace thz
