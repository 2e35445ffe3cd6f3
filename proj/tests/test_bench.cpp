// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "t2t/bench.hpp"
#include "t2t/rng.hpp"

using namespace t2t::bench;

namespace {

LayerSpec spec_of(LayerKind kind, std::size_t n, std::size_t d, std::size_t k = 3, std::size_t r = 4,
                  bool dilated = false) {
  LayerSpec s;
  s.kind = kind;
  s.n = n;
  s.d = d;
  s.k = k;
  s.r = r;
  s.dilated = dilated;
  return s;
}

// Input positions output j of layer `layer` reads, written out from the
// layer definitions.
std::set<std::size_t> reads(const LayerSpec& s, std::size_t layer, std::size_t j) {
  std::set<std::size_t> out;
  switch (s.kind) {
    case LayerKind::kSelfAttention:
      for (std::size_t p = 0; p < s.n; ++p) out.insert(p);
      break;
    case LayerKind::kConvolutional:
    case LayerKind::kSeparableConvolutional: {
      std::size_t dil = 1;
      if (s.dilated)
        for (std::size_t l = 0; l < layer; ++l) dil *= s.k;
      for (std::size_t m = 0; m < s.k; ++m)
        if (m * dil <= j) out.insert(j - m * dil);
      break;
    }
    case LayerKind::kRestrictedSelfAttention: {
      const long half = static_cast<long>((s.r - 1) / 2);
      const long start = std::clamp(static_cast<long>(j) - half, 0L, static_cast<long>(s.n - s.r));
      for (long p = start; p < start + static_cast<long>(s.r); ++p) out.insert(static_cast<std::size_t>(p));
      break;
    }
    case LayerKind::kRecurrent:
      break;
  }
  return out;
}

// Smallest depth at which every output j sees every input i <= j, by
// propagating receptive fields layer by layer.
std::optional<std::size_t> oracle_depth(const LayerSpec& s) {
  std::vector<std::set<std::size_t>> field(s.n);
  for (std::size_t j = 0; j < s.n; ++j) field[j] = {j};
  for (std::size_t depth = 1; depth <= s.n; ++depth) {
    std::vector<std::set<std::size_t>> next(s.n);
    for (std::size_t j = 0; j < s.n; ++j)
      for (std::size_t p : reads(s, depth - 1, j)) next[j].insert(field[p].begin(), field[p].end());
    field = std::move(next);
    bool all = true;
    for (std::size_t j = 0; j < s.n && all; ++j)
      for (std::size_t i = 0; i <= j && all; ++i) all = field[j].count(i) > 0;
    if (all) return depth;
  }
  return std::nullopt;
}

}  // namespace

TEST_CASE("layer kind names round trip") {
  for (LayerKind k : {LayerKind::kSelfAttention, LayerKind::kRecurrent, LayerKind::kConvolutional,
                      LayerKind::kRestrictedSelfAttention, LayerKind::kSeparableConvolutional}) {
    CHECK(parse_layer_kind(layer_kind_name(k)) == k);
  }
  CHECK_THROWS_AS(parse_layer_kind("lstm"), std::invalid_argument);
}

TEST_CASE("MAC counts match closed forms") {
  const CostReport att = run_layer(spec_of(LayerKind::kSelfAttention, 8, 4));
  CHECK(att.core_mac_count == 512);
  CHECK(att.mac_count == 512 + 4 * 8 * 16);
  CHECK(att.attention_memory == 64);
  for (std::size_t n : {4u, 7u, 12u})
    for (std::size_t d : {1u, 2u, 5u}) {
      CHECK(run_layer(spec_of(LayerKind::kSelfAttention, n, d), false).core_mac_count == 2 * n * n * d);
      CHECK(run_layer(spec_of(LayerKind::kRecurrent, n, d), false).mac_count == 2 * n * d * d);
      for (std::size_t k : {1u, 2u, 4u}) {
        CHECK(run_layer(spec_of(LayerKind::kConvolutional, n, d, k), false).mac_count == k * n * d * d);
        CHECK(run_layer(spec_of(LayerKind::kSeparableConvolutional, n, d, k), false).mac_count ==
              k * n * d + n * d * d);
      }
      for (std::size_t r = 1; r <= n; r += 2) {
        const CostReport rs = run_layer(spec_of(LayerKind::kRestrictedSelfAttention, n, d, 3, r), false);
        CHECK(rs.core_mac_count == 2 * n * r * d);
        CHECK(rs.attention_memory == n * r);
      }
    }
}

TEST_CASE("restricted attention with r = n equals full attention") {
  for (std::size_t n : {4u, 9u, 16u}) {
    const CostReport full = run_layer(spec_of(LayerKind::kSelfAttention, n, 3), false);
    const CostReport restricted = run_layer(spec_of(LayerKind::kRestrictedSelfAttention, n, 3, 3, n), false);
    CHECK(full.core_mac_count == restricted.core_mac_count);
    CHECK(full.mac_count == restricted.mac_count);
  }
}

TEST_CASE("sequential operations") {
  for (std::size_t n : {8u, 16u, 64u}) {
    CHECK(run_layer(spec_of(LayerKind::kSelfAttention, n, 2), false).sequential_ops == 1);
    CHECK(run_layer(spec_of(LayerKind::kRecurrent, n, 2), false).sequential_ops == n);
    CHECK(run_layer(spec_of(LayerKind::kConvolutional, n, 2), false).sequential_ops == 1);
    CHECK(run_layer(spec_of(LayerKind::kRestrictedSelfAttention, n, 2, 3, 5), false).sequential_ops == 1);
    CHECK(run_layer(spec_of(LayerKind::kSeparableConvolutional, n, 2), false).sequential_ops == 1);
  }
}

TEST_CASE("path lengths") {
  CHECK(run_layer(spec_of(LayerKind::kSelfAttention, 8, 4)).max_path_length == 1u);
  const CostReport rnn = run_layer(spec_of(LayerKind::kRecurrent, 8, 4));
  CHECK(rnn.sequential_ops == 8);
  CHECK(rnn.max_path_length == 8u);
  CHECK(run_layer(spec_of(LayerKind::kConvolutional, 9, 2, 3)).max_path_length == 4u);
  CHECK(run_layer(spec_of(LayerKind::kConvolutional, 8, 2, 2, 4, true)).max_path_length == 3u);
  CHECK(run_layer(spec_of(LayerKind::kConvolutional, 8, 2, 1)).max_path_length == std::nullopt);
  // one layer connects exactly the pairs less than k apart
  const auto one = max_path_length(build_graph(spec_of(LayerKind::kConvolutional, 3, 1, 3), 1));
  CHECK(one == 1u);
  CHECK(max_path_length(build_graph(spec_of(LayerKind::kConvolutional, 4, 1, 3), 1)) == std::nullopt);
}

TEST_CASE("stack depth agrees with a receptive-field oracle") {
  t2t::Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + t2t::uniform_index(rng, 30);
    const std::size_t pick = t2t::uniform_index(rng, 4);
    LayerSpec s;
    if (pick == 0) s = spec_of(LayerKind::kSelfAttention, n, 1);
    if (pick == 1) s = spec_of(LayerKind::kConvolutional, n, 1, 2 + t2t::uniform_index(rng, std::min<std::size_t>(4, n - 1)));
    if (pick == 2) s = spec_of(LayerKind::kConvolutional, n, 1, 2 + t2t::uniform_index(rng, std::min<std::size_t>(3, n - 1)), 4, true);
    if (pick == 3) s = spec_of(LayerKind::kRestrictedSelfAttention, n, 1, 3, 1 + t2t::uniform_index(rng, n));
    INFO(layer_kind_name(s.kind), " n=", s.n, " k=", s.k, " r=", s.r, " dilated=", s.dilated);
    CHECK(layers_to_connect(s, n) == oracle_depth(s));
    for (std::size_t j = 0; j < n; ++j) {
      const auto w = window(s, 1, j);
      CHECK(std::set<std::size_t>(w.begin(), w.end()) == reads(s, 1, j));
    }
  }
}

TEST_CASE("counters are deterministic") {
  for (LayerKind k : {LayerKind::kSelfAttention, LayerKind::kRecurrent, LayerKind::kConvolutional,
                      LayerKind::kRestrictedSelfAttention, LayerKind::kSeparableConvolutional}) {
    const LayerSpec s = spec_of(k, 12, 3, 3, 5);
    CHECK(run_layer(s) == run_layer(s));
  }
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(spec_of(LayerKind::kSelfAttention, 0, 4).validate(), std::invalid_argument);
  CHECK_THROWS_AS(spec_of(LayerKind::kSelfAttention, 4, 0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(spec_of(LayerKind::kConvolutional, 4, 2, 0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(spec_of(LayerKind::kConvolutional, 4, 2, 5).validate(), std::invalid_argument);
  CHECK_THROWS_AS(spec_of(LayerKind::kRestrictedSelfAttention, 4, 2, 3, 5).validate(), std::invalid_argument);
  CHECK_THROWS_AS(spec_of(LayerKind::kRestrictedSelfAttention, 4, 2, 3, 0).validate(), std::invalid_argument);
  CHECK_THROWS(window(spec_of(LayerKind::kRecurrent, 4, 2), 0, 1));
}

TEST_CASE("scaling fits") {
  CHECK(least_squares_slope({1, 2, 3, 4}, {3, 5, 7, 9}) == doctest::Approx(2.0));
  std::vector<LayerSpec> sweep;
  for (std::size_t n : {16u, 32u, 64u}) sweep.push_back(spec_of(LayerKind::kRecurrent, n, 4));
  CHECK_THROWS_AS(scaling_fit(sweep, Axis::kN), std::invalid_argument);
  sweep.push_back(spec_of(LayerKind::kRecurrent, 128, 4));
  CHECK(scaling_fit(sweep, Axis::kN) == doctest::Approx(1.0).epsilon(1e-12));
  sweep.back().d = 8;
  CHECK_THROWS_AS(scaling_fit(sweep, Axis::kN), std::invalid_argument);

  std::vector<LayerSpec> att;
  for (std::size_t n : {128u, 256u, 512u, 1024u}) att.push_back(spec_of(LayerKind::kSelfAttention, n, 1));
  CHECK(scaling_fit(att, Axis::kN, &CostReport::attention_memory) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::abs(scaling_fit(att, Axis::kN) - 2.0) < 0.1);
}

TEST_CASE("full bench passes and renders") {
  const BenchReport report = run_bench();
  for (const auto& row : report.rows) {
    INFO(row.kind, " ", row.axis, " measured ", row.measured, " expected ", row.expected);
    CHECK(row.pass);
  }
  CHECK(report.all_pass());
  const std::string csv = report.csv();
  CHECK(csv.rfind("kind,axis,measured_exponent,expected_exponent,sequential_ops,max_path_length,pass\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(report.rows.size() + 1));
  CHECK(report.text().find("self_attention") != std::string::npos);
}
