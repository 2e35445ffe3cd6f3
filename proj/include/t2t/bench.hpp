// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace t2t::bench {

enum class LayerKind {
  kSelfAttention,
  kRecurrent,
  kConvolutional,
  kRestrictedSelfAttention,
  kSeparableConvolutional,
};

const char* layer_kind_name(LayerKind kind);
LayerKind parse_layer_kind(const std::string& name);

struct LayerSpec {
  LayerKind kind = LayerKind::kSelfAttention;
  std::size_t n = 8;  // sequence length
  std::size_t d = 4;  // representation dimension
  std::size_t k = 3;  // kernel size, convolutional kinds
  std::size_t r = 4;  // neighborhood size, restricted attention
  bool dilated = false;

  void validate() const;
};

struct CostReport {
  std::uint64_t mac_count = 0;       // every multiply-accumulate of the layer
  std::uint64_t core_mac_count = 0;  // excluding the d x d projections
  std::uint64_t sequential_ops = 0;
  // Stacked layers needed before every output depends on every earlier or
  // equal input position; unset when not measured or never connected.
  std::optional<std::uint64_t> max_path_length;
  std::uint64_t attention_memory = 0;  // stored attention weights

  bool operator==(const CostReport&) const = default;
};

// Position-level dependency DAG. Node ids are in topological order.
struct DependencyGraph {
  std::vector<std::vector<std::size_t>> predecessors;
  std::vector<std::size_t> inputs;   // node of input position i
  std::vector<std::size_t> outputs;  // node of output position j
};

// Positions output j of layer `layer` (0-based) reads from the layer below.
std::vector<std::size_t> window(const LayerSpec& spec, std::size_t layer, std::size_t j);

// `layers` stacked copies (dilation grows per layer). A recurrent layer is
// a chain of hidden states and ignores `layers`.
DependencyGraph build_graph(const LayerSpec& spec, std::size_t layers);

// Longest shortest path, over pairs with input position <= output position,
// found by breadth-first search from every input. Unset if a pair is
// unreachable.
std::optional<std::size_t> max_path_length(const DependencyGraph& graph);

// Number of dependency-ordered stages: the longest chain of computed nodes.
std::size_t sequential_stages(const DependencyGraph& graph);

// Smallest stack depth that connects all pairs, up to max_layers.
std::optional<std::size_t> layers_to_connect(const LayerSpec& spec, std::size_t max_layers);

// Runs one forward pass with counting arithmetic on fixed pseudo-random
// weights. Path measurement is quadratic or worse in n, so large sweeps
// skip it.
CostReport run_layer(const LayerSpec& spec, bool measure_paths = true);

enum class Axis { kN, kD, kK, kR };
const char* axis_name(Axis axis);
std::size_t axis_value(const LayerSpec& spec, Axis axis);

// Least-squares slope of log2(value) against log2(axis). Requires at least
// four specs that differ only along `axis`.
double scaling_fit(const std::vector<LayerSpec>& sweep, Axis axis,
                   std::uint64_t CostReport::*counter = &CostReport::mac_count);
double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y);

struct BenchRow {
  std::string kind;
  std::string axis;
  double measured = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  std::string sequential_ops;
  std::string max_path_length;
  bool pass = false;
};

struct BenchReport {
  std::vector<BenchRow> rows;

  bool all_pass() const;
  std::string text() const;
  // kind,axis,measured_exponent,expected_exponent,sequential_ops,max_path_length,pass
  std::string csv() const;
};

// Every scaling sweep plus the path-length, memory and cross-layer checks.
BenchReport run_bench();

}  // namespace t2t::bench
