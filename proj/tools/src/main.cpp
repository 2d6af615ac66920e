// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "mflow_cli/cli.hpp"

int main(int argc, char** argv) { return mflow::cli::run(argc, argv, std::cout, std::cerr); }
