// SPDX-License-Identifier: Apache-2.0
#include "t2t/records.hpp"

#include <fstream>
#include <iterator>
#include <stdexcept>

namespace t2t {
namespace {

constexpr std::string_view kMagic = "T2R1";

void append_ids(std::string& out, const std::vector<int>& ids) {
  append_varint(out, ids.size());
  for (int id : ids) {
    if (id < 0) throw std::invalid_argument("records: negative id");
    append_varint(out, static_cast<std::uint64_t>(id));
  }
}

std::vector<int> read_ids(std::string_view in, std::size_t& pos) {
  const std::uint64_t count = read_varint(in, pos);
  if (count > in.size()) throw std::runtime_error("records: corrupt id count");
  std::vector<int> ids(count);
  for (auto& id : ids) id = static_cast<int>(read_varint(in, pos));
  return ids;
}

}  // namespace

void append_varint(std::string& out, std::uint64_t value) {
  while (value >= 0x80) {
    out.push_back(static_cast<char>((value & 0x7F) | 0x80));
    value >>= 7;
  }
  out.push_back(static_cast<char>(value));
}

std::uint64_t read_varint(std::string_view in, std::size_t& pos) {
  std::uint64_t value = 0;
  for (int shift = 0; shift < 64; shift += 7) {
    if (pos >= in.size()) throw std::runtime_error("records: truncated varint");
    const auto byte = static_cast<unsigned char>(in[pos++]);
    value |= static_cast<std::uint64_t>(byte & 0x7F) << shift;
    if (!(byte & 0x80)) return value;
  }
  throw std::runtime_error("records: varint too long");
}

void write_records(const std::filesystem::path& path, std::span<const Example> examples) {
  std::string buffer(kMagic);
  std::string payload;
  for (const Example& ex : examples) {
    payload.clear();
    append_ids(payload, ex.source);
    append_ids(payload, ex.target);
    const auto n = static_cast<std::uint32_t>(payload.size());
    for (int b = 0; b < 4; ++b) buffer.push_back(static_cast<char>((n >> (8 * b)) & 0xFF));
    buffer += payload;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("records: cannot write " + path.string());
  out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
  if (!out) throw std::runtime_error("records: write failed for " + path.string());
}

std::vector<Example> read_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("records: cannot read " + path.string());
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.compare(0, kMagic.size(), kMagic) != 0) {
    throw std::runtime_error("records: bad magic in " + path.string());
  }
  std::vector<Example> examples;
  std::size_t pos = kMagic.size();
  const std::string_view view(data);
  while (pos < view.size()) {
    if (pos + 4 > view.size()) throw std::runtime_error("records: truncated length prefix");
    std::uint32_t n = 0;
    for (int b = 0; b < 4; ++b) n |= static_cast<std::uint32_t>(static_cast<unsigned char>(view[pos + b])) << (8 * b);
    pos += 4;
    if (pos + n > view.size()) throw std::runtime_error("records: truncated record");
    const std::string_view payload = view.substr(pos, n);
    std::size_t p = 0;
    Example ex;
    ex.source = read_ids(payload, p);
    ex.target = read_ids(payload, p);
    if (p != payload.size()) throw std::runtime_error("records: trailing bytes in record");
    examples.push_back(std::move(ex));
    pos += n;
  }
  return examples;
}

}  // namespace t2t
