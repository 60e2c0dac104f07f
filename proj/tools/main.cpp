#include <vector>

#include "esdnet/commands.hpp"

int main(int argc, char** argv) {
  return esdnet::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
