#include <exception>
#include <iostream>

#include "ncw/cli.hpp"

int main(int argc, char** argv) {
  try {
    return ncw::cli::run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "fatal: " << e.what() << "\n";
    return 1;
  }
}
