#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace monoref {

// Entry point of the `monoref` tool. `args` excludes the program name.
// Returns the process exit code; diagnostics go to `err`.
int RunCommand(const std::vector<std::string>& args, std::ostream& out,
               std::ostream& err);

}  // namespace monoref
