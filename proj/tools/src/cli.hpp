#pragma once

#include <iosfwd>

namespace thz::cli {

/// Exit codes: 0 success, 2 usage, 3 input format, 4 numeric/model, 5 I/O.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace thz::cli
