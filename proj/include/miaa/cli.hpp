#pragma once

#include <string>
#include <vector>

namespace miaa::cli {

// Entry point shared by the miaa binary and the python module.
// args excludes the program name (e.g. {"generate", "--config", "c.json"}).
int run(const std::vector<std::string>& args);

}  // namespace miaa::cli
