// SPDX-License-Identifier: MIT
#include <string>
#include <vector>

#include "femlab_tools/tool_lib.hpp"

int main(int argc, char** argv) {
  return femlab::tools::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
