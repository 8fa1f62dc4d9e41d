#include <iostream>

#include "artss/cli.hpp"

int main(int argc, char** argv) {
    return artss::cli::run(argc, argv, std::cout, std::cerr);
}
