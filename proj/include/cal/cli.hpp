#pragma once

#include <iosfwd>

namespace cal {

/// Command-line entry point: generate, train, eval, sweep, confusion,
/// export-attn and crossval. Returns 0 on success, 1 for runtime and IO
/// failures, 2 for usage errors.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cal
