// SPDX-License-Identifier: Apache-2.0
#include "t2t/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace t2t {
namespace {

constexpr char kMagic[4] = {'T', '2', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  Reader(std::string data, std::string source) : data_(std::move(data)), source_(std::move(source)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string() {
    const auto len = get<std::uint32_t>();
    need(len);
    std::string s = data_.substr(pos_, len);
    pos_ += len;
    return s;
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw std::runtime_error("checkpoint: " + source_ + " is truncated");
  }

  std::string data_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, ckpt.step);
  put_string(out, ckpt.hparams_set);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, t] : ckpt.params) {
    put_string(out, name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put<std::uint64_t>(out, e);
    for (double v : t.data()) put<double>(out, v);
  }
  // Write to a temporary name first so a crash never leaves a torn file.
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint: cannot write " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot read " + path.string());
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (data.size() < 4 || data.compare(0, 4, kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: " + path.string() + " has a bad magic number");
  }
  Reader r(data.substr(4), path.string());
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.step = r.get<std::uint64_t>();
  ckpt.hparams_set = r.get_string();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_string();
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& e : shape) e = r.get<std::uint64_t>();
    std::vector<double> values(num_elements(shape));
    for (double& v : values) v = r.get<double>();
    if (!ckpt.params.emplace(name, Tensor(shape, std::move(values))).second) {
      throw std::runtime_error("checkpoint: duplicate parameter " + name);
    }
  }
  if (!r.done()) throw std::runtime_error("checkpoint: trailing bytes in " + path.string());
  return ckpt;
}

Checkpoint average_checkpoints(std::span<const Checkpoint> checkpoints) {
  if (checkpoints.empty()) throw std::invalid_argument("average_checkpoints: no inputs");
  const Checkpoint& first = checkpoints.front();
  Checkpoint avg;
  avg.hparams_set = first.hparams_set;
  for (const Checkpoint& c : checkpoints) {
    if (c.hparams_set != first.hparams_set) {
      throw std::invalid_argument("average_checkpoints: hparams set '" + c.hparams_set +
                                  "' differs from '" + first.hparams_set + "'");
    }
    if (c.params.size() != first.params.size()) {
      throw std::invalid_argument("average_checkpoints: parameter sets differ");
    }
    avg.step = std::max(avg.step, c.step);
  }
  const double n = static_cast<double>(checkpoints.size());
  std::vector<double> column(checkpoints.size());
  for (const auto& [name, t0] : first.params) {
    std::vector<std::span<const double>> sources;
    for (const Checkpoint& c : checkpoints) {
      auto it = c.params.find(name);
      if (it == c.params.end()) {
        throw std::invalid_argument("average_checkpoints: parameter " + name + " missing");
      }
      if (it->second.shape() != t0.shape()) {
        throw std::invalid_argument("average_checkpoints: parameter " + name + " has shape " +
                                    shape_string(it->second.shape()) + " vs " +
                                    shape_string(t0.shape()));
      }
      sources.push_back(it->second.data());
    }
    // Summing sorted offsets from the minimum keeps the result independent of
    // input order and exact when all inputs agree.
    std::vector<double> mean(t0.size());
    for (std::size_t i = 0; i < mean.size(); ++i) {
      for (std::size_t k = 0; k < sources.size(); ++k) column[k] = sources[k][i];
      std::sort(column.begin(), column.end());
      double offset = 0.0;
      for (double v : column) offset += v - column.front();
      mean[i] = column.front() + offset / n;
    }
    avg.params.emplace(name, Tensor(t0.shape(), std::move(mean)));
  }
  return avg;
}

Checkpoint average_checkpoints(std::span<const std::filesystem::path> paths) {
  std::vector<Checkpoint> loaded;
  loaded.reserve(paths.size());
  for (const auto& p : paths) loaded.push_back(load_checkpoint(p));
  return average_checkpoints(std::span<const Checkpoint>(loaded));
}

std::string checkpoint_filename(std::uint64_t step) {
  return "ckpt-" + std::to_string(step) + ".t2ck";
}

std::vector<std::filesystem::path> list_checkpoints(const std::filesystem::path& dir) {
  std::vector<std::pair<std::uint64_t, std::filesystem::path>> found;
  if (!std::filesystem::is_directory(dir)) return {};
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (!name.starts_with("ckpt-") || !name.ends_with(".t2ck")) continue;
    const std::string digits = name.substr(5, name.size() - 10);
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) continue;
    found.emplace_back(std::stoull(digits), entry.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<std::filesystem::path> out;
  for (auto& [step, p] : found) out.push_back(std::move(p));
  return out;
}

}  // namespace t2t
