#include <iostream>
#include <string>
#include <vector>

#include "aa/cli.hpp"

int main(int argc, char** argv) {
    return aa::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
