#include <iostream>

#include "metricnet/commands.h"

int main(int argc, char** argv) {
  return metricnet::run_cli(argc, argv, std::cout, std::cerr);
}
