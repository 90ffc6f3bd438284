// SPDX-License-Identifier: Apache-2.0
#include "mtrl/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return mtrl::run_cli(argc, argv, std::cout, std::cerr);
}
