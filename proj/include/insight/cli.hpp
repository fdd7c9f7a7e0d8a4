#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace insight {

/// Full command-line surface, callable in-process. Exit codes: 0 success,
/// 1 runtime/data error, 2 usage or configuration error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace insight
