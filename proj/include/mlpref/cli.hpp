#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mlpref {

// Entry point behind the `mlpref` binary. `args` excludes the program name.
// Returns 0 on success, 1 on data or I/O errors, 2 on usage errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mlpref
