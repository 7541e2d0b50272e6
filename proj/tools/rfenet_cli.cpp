#include <string>
#include <vector>

#include "rfenet/cli.hpp"

int main(int argc, char** argv) {
  return rfenet::run_cli(std::vector<std::string>(argv, argv + argc));
}
