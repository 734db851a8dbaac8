// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "mtdao/cli.hpp"

int main(int argc, char** argv) { return mtdao::run_cli(argc, argv, std::cout, std::cerr); }
