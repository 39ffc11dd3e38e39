#include <iostream>

#include "sbm/cli.hpp"

int main(int argc, char** argv)
{
    return sbm::cli::dispatch({argv + 1, argv + argc}, std::cout, std::cerr, std::cin);
}
