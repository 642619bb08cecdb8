#include <iostream>

#include "hdccf/cli.h"
#include "hdccf/parallel.h"

int main(int argc, char** argv) {
  hdccf::keep_large_buffers_resident();
  return hdccf::run_cli(argc, argv, std::cout, std::cerr);
}
