#include <iostream>

#include "cal/cli.hpp"
#include "cal/tensor.hpp"

int main(int argc, char** argv) {
    cal::retain_freed_memory();
    return cal::run_cli(argc, argv, std::cout, std::cerr);
}
