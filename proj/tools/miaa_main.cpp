#include <string>
#include <vector>

#include "miaa/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return miaa::cli::run(args);
}
