#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace hetcs {

/// Runs one `hetcs` subcommand. `args` excludes the program name. Results go
/// to `out` as JSON; logs and diagnostics go to `err`. Returns 0 on success,
/// 1 on runtime failure and 2 on invalid arguments.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hetcs
