// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace groundec::cli {

/// Wording of the default describe prompt; assets/describe_template.txt holds the same text.
inline constexpr const char* kDefaultDescribeTemplate =
    "Describe everything visible in this image: each object, its color and size, what people are doing, "
    "and where things are placed relative to each other.";

/// Entry point behind the `groundec` executable. `args` excludes the program
/// name. Returns the process exit code (see ExitCode).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace groundec::cli
