#pragma once

#include <iosfwd>

namespace cfl::cli {

// Exit codes: 0 success, 1 validation error (bad flags, config or shapes),
// 2 runtime error, 3 theorem-check violation.
int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cfl::cli
