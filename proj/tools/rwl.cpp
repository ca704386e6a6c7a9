#include <iostream>
#include <string>
#include <vector>

#include "rwl/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return rwl::run_cli(args, std::cout, std::cerr);
}
