#include <vector>

#include "spatialspill/cli.hpp"

int main(int argc, char** argv) {
  return spatialspill::cli::execute(std::vector<std::string>(argv + 1, argv + argc));
}
