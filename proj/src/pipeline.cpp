// SPDX-License-Identifier: Apache-2.0
#include "t2t/pipeline.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "t2t/bpe.hpp"

namespace t2t {

IdMatrix IdMatrix::from_rows(const std::vector<std::vector<int>>& rows) {
  std::size_t cols = 0;
  for (const auto& r : rows) cols = std::max(cols, r.size());
  IdMatrix m(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].begin(), rows[i].end(), m.ids.begin() + static_cast<long>(i * cols));
  }
  return m;
}

std::size_t IdMatrix::non_pad() const {
  return static_cast<std::size_t>(std::count_if(ids.begin(), ids.end(), [](int id) { return id != kPadId; }));
}

namespace {

std::vector<double> mask_of(const IdMatrix& m) {
  std::vector<double> mask(m.ids.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = m.ids[i] == kPadId ? 0.0 : 1.0;
  return mask;
}

}  // namespace

std::vector<double> Batch::source_mask() const { return mask_of(source); }
std::vector<double> Batch::target_mask() const { return mask_of(target); }

std::vector<std::size_t> bucket_boundaries(std::size_t min_length, std::size_t max_length) {
  if (min_length == 0 || max_length == 0) {
    throw std::invalid_argument("bucket_boundaries: lengths must be positive");
  }
  std::vector<std::size_t> out{min_length};
  while (out.back() < max_length) out.push_back(out.back() * 2);
  return out;
}

BatchStream::BatchStream(std::vector<Example> examples, Mode mode, PipelineOptions options,
                         std::uint64_t seed)
    : examples_(std::move(examples)),
      mode_(mode),
      options_(options),
      seed_(seed),
      boundaries_(bucket_boundaries(options.min_length, options.max_length)) {
  if (options_.batch_size == 0) throw std::invalid_argument("pipeline: batch_size must be positive");
  bucket_of_.resize(examples_.size());
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    const std::size_t len = std::max(examples_[i].source.size(), examples_[i].target.size()) + 1;
    if (len > options_.max_length) {
      ++dropped_;
      continue;
    }
    const auto it = std::lower_bound(boundaries_.begin(), boundaries_.end(), len);
    bucket_of_[i] = static_cast<std::size_t>(it - boundaries_.begin());
    kept_.push_back(i);
  }
  if (dropped_ > 0) {
    std::cerr << "warning: dropped " << dropped_ << " examples longer than max_length "
              << options_.max_length << "\n";
  }
}

std::size_t BatchStream::rows_per_batch(std::size_t boundary) const {
  return std::max<std::size_t>(1, options_.batch_size / boundary);
}

Batch BatchStream::make_batch(const std::vector<std::size_t>& members, std::size_t boundary) const {
  Batch b;
  b.boundary = boundary;
  b.source = IdMatrix(members.size(), boundary);
  b.target = IdMatrix(members.size(), boundary);
  for (std::size_t r = 0; r < members.size(); ++r) {
    const Example& ex = examples_[members[r]];
    std::copy(ex.source.begin(), ex.source.end(), b.source.ids.begin() + static_cast<long>(r * boundary));
    b.source.at(r, ex.source.size()) = kEosId;
    std::copy(ex.target.begin(), ex.target.end(), b.target.ids.begin() + static_cast<long>(r * boundary));
    b.target.at(r, ex.target.size()) = kEosId;
  }
  return b;
}

void BatchStream::fill_epoch() {
  pending_.clear();
  cursor_ = 0;
  std::vector<std::size_t> order = kept_;
  if (mode_ == Mode::kTrain) {
    Rng rng(splitmix64(seed_ + 0x9e3779b97f4a7c15ULL * (epoch_ + 1)));
    shuffle(std::span<std::size_t>(order), rng);
  }
  ++epoch_;
  std::vector<std::vector<std::size_t>> buckets(boundaries_.size());
  for (std::size_t i : order) {
    auto& bucket = buckets[bucket_of_[i]];
    bucket.push_back(i);
    const std::size_t boundary = boundaries_[bucket_of_[i]];
    if (bucket.size() == rows_per_batch(boundary)) {
      pending_.push_back(make_batch(bucket, boundary));
      bucket.clear();
    }
  }
  for (std::size_t k = 0; k < buckets.size(); ++k) {
    if (!buckets[k].empty()) pending_.push_back(make_batch(buckets[k], boundaries_[k]));
  }
}

std::optional<Batch> BatchStream::next() {
  if (cursor_ < pending_.size()) return pending_[cursor_++];
  if (kept_.empty() || (mode_ == Mode::kEval && exhausted_)) return std::nullopt;
  fill_epoch();
  if (mode_ == Mode::kEval) exhausted_ = true;
  if (pending_.empty()) return std::nullopt;
  return pending_[cursor_++];
}

}  // namespace t2t
