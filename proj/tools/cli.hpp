#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace xnap::cli {

/// Runs one command line (program name excluded). Returns the process exit code:
/// 0 on success, 1 on a runtime error, CLI11's code on a usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace xnap::cli
