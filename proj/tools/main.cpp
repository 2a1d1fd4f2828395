// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "harmodop/runtime/cli.hpp"

int main(int argc, char** argv)
{
    return harmodop::runtime::run_cli(argc, argv, std::cout, std::cerr);
}
