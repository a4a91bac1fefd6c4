#pragma once

#include <iosfwd>

namespace carguard {

/// Entry point of the `carguard` tool. Machine-readable results go to `out`
/// (JSON or CSV), human summaries and errors to `err`.
/// Exit codes: 0 ok, 1 domain error, 2 usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace carguard
