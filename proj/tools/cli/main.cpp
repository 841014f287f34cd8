// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) {
  return groundec::cli::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
