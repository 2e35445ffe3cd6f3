// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "t2t/gradcheck.hpp"

namespace t2t {

struct Checkpoint {
  std::uint64_t step = 0;
  std::string hparams_set;
  ParamMap params;
};

// Binary layout, little-endian:
//   "T2CK" u32 version u64 step u32 len + hparams_set u32 count
//   per parameter: u32 len + name, u32 rank, u64 extents..., f64 values...
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Element-wise mean. Throws when shapes, name sets or hparams sets differ.
Checkpoint average_checkpoints(std::span<const Checkpoint> checkpoints);
Checkpoint average_checkpoints(std::span<const std::filesystem::path> paths);

std::string checkpoint_filename(std::uint64_t step);
// ckpt-<step>.t2ck files in dir, ascending by step.
std::vector<std::filesystem::path> list_checkpoints(const std::filesystem::path& dir);

}  // namespace t2t
