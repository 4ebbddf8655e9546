#include <iostream>

#include "conxgnn/cli.hpp"

int main(int argc, char** argv) {
  return conxgnn::cli::dispatch(argc, argv, std::cout, std::cerr);
}
