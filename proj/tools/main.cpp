#include <string>
#include <vector>

#include "sollab/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sollab::run_cli(args);
}
