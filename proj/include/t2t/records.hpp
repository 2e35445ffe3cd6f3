// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace t2t {

// One encoded sample; EOS is appended later by the input pipeline.
struct Example {
  std::vector<int> source;
  std::vector<int> target;

  bool operator==(const Example&) const = default;
};

// Record file: magic "T2R1", then for each example a u32 little-endian
// payload length followed by the payload
//   varint(count) varint(id)...   (source)
//   varint(count) varint(id)...   (target)
void write_records(const std::filesystem::path& path, std::span<const Example> examples);
std::vector<Example> read_records(const std::filesystem::path& path);

void append_varint(std::string& out, std::uint64_t value);
// Advances `pos`; throws on truncated input.
std::uint64_t read_varint(std::string_view in, std::size_t& pos);

}  // namespace t2t
