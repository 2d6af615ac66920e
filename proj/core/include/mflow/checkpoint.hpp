// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mflow/config.hpp"
#include "mflow/field_net.hpp"

namespace mflow {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary layout (little-endian):
///   "MFLW" | u32 version | u64 meta_len | meta JSON | u64 n_tensors |
///   n x { u32 name_len | name | u8 dtype (1 = f64) | u32 rank | u64 dims[rank] | f64 data }
/// Optimizer moments are stored as tensors named "adam.m/<param>" and
/// "adam.v/<param>".
struct Checkpoint {
  NetKind kind = NetKind::teacher;
  RunConfig config;
  std::uint64_t step = 0;
  std::string rng_state;
  std::uint64_t adam_step = 0;
  std::uint64_t teacher_digest = 0;  // students: digest of the frozen teacher
  std::vector<Param> params;
  std::vector<Param> adam_m;  // empty or aligned with params
  std::vector<Param> adam_v;

  FieldNet net() const;
  bool operator==(const Checkpoint&) const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mflow
