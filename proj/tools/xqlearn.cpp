#include <iostream>
#include <string>
#include <vector>

#include "xq/app.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return xq::app::run_cli(args, std::cout, std::cerr);
}
