// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "t2t/records.hpp"
#include "t2t/rng.hpp"

namespace t2t {

enum class Mode { kTrain, kEval };

// Row-major matrix of token ids; 0 is padding.
struct IdMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<int> ids;

  IdMatrix() = default;
  IdMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), ids(r * c, 0) {}
  // Rows padded to the longest one.
  static IdMatrix from_rows(const std::vector<std::vector<int>>& rows);

  int at(std::size_t r, std::size_t c) const { return ids[r * cols + c]; }
  int& at(std::size_t r, std::size_t c) { return ids[r * cols + c]; }
  std::span<const int> row(std::size_t r) const { return {ids.data() + r * cols, cols}; }
  std::size_t non_pad() const;
  bool operator==(const IdMatrix&) const = default;
};

// Padded source/target pair. Each row holds its ids, then EOS, then PAD.
struct Batch {
  IdMatrix source;
  IdMatrix target;
  std::size_t boundary = 0;

  // 1.0 at real tokens (EOS included), 0.0 at padding.
  std::vector<double> source_mask() const;
  std::vector<double> target_mask() const;
  bool operator==(const Batch&) const = default;
};

// min_length, 2*min_length, ... up to the first boundary >= max_length.
std::vector<std::size_t> bucket_boundaries(std::size_t min_length, std::size_t max_length);

struct PipelineOptions {
  std::size_t batch_size = 256;  // token budget per batch
  std::size_t min_length = 8;
  std::size_t max_length = 256;
};

// Pull-based stream of bucketed batches. Eval mode makes one pass in file
// order; train mode reshuffles every epoch from the seed and never ends.
class BatchStream {
 public:
  BatchStream(std::vector<Example> examples, Mode mode, PipelineOptions options,
              std::uint64_t seed);

  std::optional<Batch> next();

  // Examples longer than max_length (EOS included); they are skipped.
  std::size_t dropped() const { return dropped_; }
  std::size_t rows_per_batch(std::size_t boundary) const;

 private:
  void fill_epoch();
  Batch make_batch(const std::vector<std::size_t>& members, std::size_t boundary) const;

  std::vector<Example> examples_;
  Mode mode_;
  PipelineOptions options_;
  std::uint64_t seed_;
  std::vector<std::size_t> boundaries_;
  std::vector<std::size_t> bucket_of_;  // per example, index into boundaries_
  std::vector<std::size_t> kept_;       // examples within max_length
  std::size_t dropped_ = 0;
  std::vector<Batch> pending_;
  std::size_t cursor_ = 0;
  std::uint64_t epoch_ = 0;
  bool exhausted_ = false;
};

}  // namespace t2t
