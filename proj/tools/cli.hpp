#pragma once

#include <iosfwd>

namespace mcf::cli {

/// Runs one subcommand. Returns 0 on success, 1 on usage or config errors,
/// 2 on runtime failures.
int run(int argc, char** argv);
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace mcf::cli
