// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace mflow {

/// Worker cap: MFLOW_THREADS if set and positive, else hardware concurrency.
std::size_t max_threads();
void set_max_threads(std::size_t n);

/// Splits [0, n) into contiguous chunks, one per worker. Every index is
/// handled by exactly one call, so results written per index are identical
/// to a serial run. Falls back to a serial call when `n < grain`.
void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace mflow
