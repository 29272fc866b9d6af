#pragma once

#include <iosfwd>

namespace chaneq::cli {

/// Runs one subcommand. Returns 0 on success, 1 on contract, config, shape or
/// state errors and 2 when an iterative method diverged.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace chaneq::cli
