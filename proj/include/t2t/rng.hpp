// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace t2t {

// mt19937_64's output sequence is fixed by the standard; the helpers below
// avoid the implementation-defined std distributions so that data and
// initial parameters are identical across standard libraries.
using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

// Independent seeds for each consumer of randomness in a run. Thread
// scheduling can still reorder floating-point reductions when replicas run
// concurrently, so only single-replica runs are bit-reproducible.
struct SeedStreams {
  std::uint64_t data = 0;
  std::uint64_t init = 0;
  std::uint64_t dropout = 0;
};

SeedStreams set_seeds(std::uint64_t root);

double uniform01(Rng& rng);
std::size_t uniform_index(Rng& rng, std::size_t n);
double normal(Rng& rng);

template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_index(rng, i)]);
  }
}

}  // namespace t2t
