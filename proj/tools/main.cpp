#include <string>
#include <vector>

#include "rowsim/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return rowsim::cli::dispatch(std::move(args));
}
