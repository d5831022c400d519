#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cmg::cli {

// Runs one `cmg` invocation. argv[0] is the program name. Returns the process
// exit code; failures print "error: <Category>: <message>" to `err`.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace cmg::cli
