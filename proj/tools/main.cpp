#include <iostream>
#include <string>
#include <vector>

#include "consjudge/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return consjudge::run_cli(args, std::cout, std::cerr);
}
