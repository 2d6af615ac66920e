// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

namespace mflow::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kNumerical = 2,
  kIo = 3,
};

/// Entry point of the `mflow` tool. Subcommands: train-teacher, distill,
/// sample, eval, verify, gen-data.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mflow::cli
