#include <malloc.h>

#include <iostream>
#include <string>
#include <vector>

#include "hetcs/cli.hpp"

int main(int argc, char** argv) {
  // Keep large tensor buffers in the heap instead of mapping fresh pages per op.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  std::vector<std::string> args(argv + 1, argv + argc);
  return hetcs::run_cli(args, std::cout, std::cerr);
}
