#include <iostream>

#include "kcb/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return kcb::cli::run(args, std::cout, std::cerr);
}
