// SPDX-License-Identifier: Apache-2.0
#include "t2t/bench.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "t2t/rng.hpp"

namespace t2t::bench {
namespace {

using Mat = std::vector<double>;  // row-major

Mat random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Mat m(rows * cols);
  for (double& x : m) x = uniform01(rng) - 0.5;
  return m;
}

// x:[n, in] * w:[in, out], one MAC per multiply-add.
Mat linear(const Mat& x, std::size_t n, std::size_t in, const Mat& w, std::size_t out,
           std::uint64_t& macs) {
  Mat y(n * out, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < in; ++a) {
      const double xv = x[i * in + a];
      for (std::size_t b = 0; b < out; ++b) {
        y[i * out + b] += xv * w[a * out + b];
        ++macs;
      }
    }
  }
  return y;
}

// Attention of every query over its key window; counts the score and
// weighted-sum products as core MACs.
Mat attend(const Mat& q, const Mat& k, const Mat& v, const LayerSpec& spec,
           std::uint64_t& core, std::uint64_t& memory) {
  const std::size_t n = spec.n, d = spec.d;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Mat out(n * d, 0.0);
  std::vector<double> scores;
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<std::size_t> keys = window(spec, 0, i);
    scores.assign(keys.size(), 0.0);
    for (std::size_t a = 0; a < keys.size(); ++a) {
      for (std::size_t c = 0; c < d; ++c) {
        scores[a] += q[i * d + c] * k[keys[a] * d + c];
        ++core;
      }
      scores[a] *= scale;
    }
    const double top = *std::max_element(scores.begin(), scores.end());
    double total = 0.0;
    for (double& s : scores) total += (s = std::exp(s - top));
    for (double& s : scores) s /= total;
    memory += scores.size();
    for (std::size_t a = 0; a < keys.size(); ++a) {
      for (std::size_t c = 0; c < d; ++c) {
        out[i * d + c] += scores[a] * v[keys[a] * d + c];
        ++core;
      }
    }
  }
  return out;
}

std::size_t ipow(std::size_t base, std::size_t exp) {
  std::size_t r = 1;
  for (std::size_t i = 0; i < exp; ++i) r *= base;
  return r;
}

bool windowed(LayerKind kind) { return kind != LayerKind::kRecurrent; }

}  // namespace

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kSelfAttention:
      return "self_attention";
    case LayerKind::kRecurrent:
      return "recurrent";
    case LayerKind::kConvolutional:
      return "convolutional";
    case LayerKind::kRestrictedSelfAttention:
      return "restricted_self_attention";
    case LayerKind::kSeparableConvolutional:
      return "separable_convolutional";
  }
  return "unknown";
}

LayerKind parse_layer_kind(const std::string& name) {
  for (LayerKind k : {LayerKind::kSelfAttention, LayerKind::kRecurrent, LayerKind::kConvolutional,
                      LayerKind::kRestrictedSelfAttention, LayerKind::kSeparableConvolutional}) {
    if (name == layer_kind_name(k)) return k;
  }
  throw std::invalid_argument("bench: unknown layer kind '" + name + "'");
}

void LayerSpec::validate() const {
  if (n == 0 || d == 0 || k == 0 || r == 0) {
    throw std::invalid_argument("bench: n, d, k and r must be positive");
  }
  const bool conv = kind == LayerKind::kConvolutional || kind == LayerKind::kSeparableConvolutional;
  if (conv && k > n) {
    throw std::invalid_argument("bench: kernel " + std::to_string(k) + " exceeds n " + std::to_string(n));
  }
  if (kind == LayerKind::kRestrictedSelfAttention && r > n) {
    throw std::invalid_argument("bench: neighborhood " + std::to_string(r) + " exceeds n " +
                                std::to_string(n));
  }
}

std::vector<std::size_t> window(const LayerSpec& spec, std::size_t layer, std::size_t j) {
  std::vector<std::size_t> out;
  switch (spec.kind) {
    case LayerKind::kSelfAttention:
      for (std::size_t p = 0; p < spec.n; ++p) out.push_back(p);
      break;
    case LayerKind::kConvolutional:
    case LayerKind::kSeparableConvolutional: {
      // Causal taps j, j - dil, ..., j - (k-1) dil that fall inside the input.
      const std::size_t dil = spec.dilated ? ipow(spec.k, layer) : 1;
      for (std::size_t m = 0; m < spec.k && m * dil <= j; ++m) out.push_back(j - m * dil);
      std::reverse(out.begin(), out.end());
      break;
    }
    case LayerKind::kRestrictedSelfAttention: {
      // r consecutive positions centred on j, shifted inward at the edges.
      const std::size_t back = (spec.r - 1) / 2;
      const std::size_t start = std::min(j > back ? j - back : 0, spec.n - spec.r);
      for (std::size_t p = start; p < start + spec.r; ++p) out.push_back(p);
      break;
    }
    case LayerKind::kRecurrent:
      throw std::invalid_argument("bench: a recurrent layer has no position window");
  }
  return out;
}

DependencyGraph build_graph(const LayerSpec& spec, std::size_t layers) {
  spec.validate();
  const std::size_t n = spec.n;
  DependencyGraph g;
  if (!windowed(spec.kind)) {
    // x_0..x_{n-1}, then h_j reading x_j and h_{j-1}.
    g.predecessors.resize(2 * n);
    for (std::size_t j = 0; j < n; ++j) {
      g.inputs.push_back(j);
      g.outputs.push_back(n + j);
      g.predecessors[n + j].push_back(j);
      if (j > 0) g.predecessors[n + j].push_back(n + j - 1);
    }
    return g;
  }
  if (layers == 0) throw std::invalid_argument("bench: need at least one layer");
  g.predecessors.resize((layers + 1) * n);
  for (std::size_t l = 1; l <= layers; ++l) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t p : window(spec, l - 1, j)) g.predecessors[l * n + j].push_back((l - 1) * n + p);
    }
  }
  for (std::size_t p = 0; p < n; ++p) {
    g.inputs.push_back(p);
    g.outputs.push_back(layers * n + p);
  }
  return g;
}

std::optional<std::size_t> max_path_length(const DependencyGraph& graph) {
  const std::size_t nodes = graph.predecessors.size();
  std::vector<std::vector<std::size_t>> successors(nodes);
  for (std::size_t v = 0; v < nodes; ++v) {
    for (std::size_t u : graph.predecessors[v]) successors[u].push_back(v);
  }
  constexpr std::size_t kUnseen = static_cast<std::size_t>(-1);
  std::vector<std::size_t> dist(nodes);
  std::size_t longest = 0;
  for (std::size_t i = 0; i < graph.inputs.size(); ++i) {
    std::fill(dist.begin(), dist.end(), kUnseen);
    std::deque<std::size_t> queue{graph.inputs[i]};
    dist[graph.inputs[i]] = 0;
    while (!queue.empty()) {
      const std::size_t u = queue.front();
      queue.pop_front();
      for (std::size_t v : successors[u]) {
        if (dist[v] == kUnseen) {
          dist[v] = dist[u] + 1;
          queue.push_back(v);
        }
      }
    }
    for (std::size_t j = i; j < graph.outputs.size(); ++j) {
      const std::size_t dj = dist[graph.outputs[j]];
      if (dj == kUnseen) return std::nullopt;
      longest = std::max(longest, dj);
    }
  }
  return longest;
}

std::size_t sequential_stages(const DependencyGraph& graph) {
  std::vector<std::size_t> depth(graph.predecessors.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t v = 0; v < depth.size(); ++v) {
    const auto& preds = graph.predecessors[v];
    if (preds.empty()) continue;
    std::size_t d = 0;
    for (std::size_t u : preds) d = std::max(d, depth[u]);
    depth[v] = d + 1;
    deepest = std::max(deepest, depth[v]);
  }
  return deepest;
}

std::optional<std::size_t> layers_to_connect(const LayerSpec& spec, std::size_t max_layers) {
  if (!windowed(spec.kind)) return max_path_length(build_graph(spec, 1));
  for (std::size_t layers = 1; layers <= max_layers; ++layers) {
    if (auto path = max_path_length(build_graph(spec, layers))) return path;
  }
  return std::nullopt;
}

CostReport run_layer(const LayerSpec& spec, bool measure_paths) {
  spec.validate();
  const std::size_t n = spec.n, d = spec.d, k = spec.k;
  Rng rng(0x5eedULL + static_cast<std::uint64_t>(spec.kind));
  const Mat x = random_matrix(n, d, rng);
  CostReport report;
  std::uint64_t macs = 0;

  switch (spec.kind) {
    case LayerKind::kSelfAttention:
    case LayerKind::kRestrictedSelfAttention: {
      const Mat wq = random_matrix(d, d, rng), wk = random_matrix(d, d, rng);
      const Mat wv = random_matrix(d, d, rng), wo = random_matrix(d, d, rng);
      const Mat q = linear(x, n, d, wq, d, macs);
      const Mat kk = linear(x, n, d, wk, d, macs);
      const Mat v = linear(x, n, d, wv, d, macs);
      const Mat context = attend(q, kk, v, spec, report.core_mac_count, report.attention_memory);
      linear(context, n, d, wo, d, macs);
      macs += report.core_mac_count;
      break;
    }
    case LayerKind::kRecurrent: {
      const Mat w = random_matrix(d, d, rng), u = random_matrix(d, d, rng);
      Mat h(d, 0.0);
      for (std::size_t t = 0; t < n; ++t) {
        const Mat xt(x.begin() + static_cast<long>(t * d), x.begin() + static_cast<long>((t + 1) * d));
        const Mat a = linear(xt, 1, d, w, d, macs);
        const Mat b = linear(h, 1, d, u, d, macs);
        for (std::size_t c = 0; c < d; ++c) h[c] = std::tanh(a[c] + b[c]);
      }
      report.core_mac_count = macs;
      break;
    }
    case LayerKind::kConvolutional: {
      // Padded taps before position 0 read zeros but are still computed.
      std::vector<Mat> taps;
      for (std::size_t m = 0; m < k; ++m) taps.push_back(random_matrix(d, d, rng));
      Mat y(n * d, 0.0);
      const Mat zero(d, 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t m = 0; m < k; ++m) {
          const Mat in = m <= j ? Mat(x.begin() + static_cast<long>((j - m) * d),
                                      x.begin() + static_cast<long>((j - m + 1) * d))
                                : zero;
          const Mat out = linear(in, 1, d, taps[m], d, macs);
          for (std::size_t c = 0; c < d; ++c) y[j * d + c] += out[c];
        }
      }
      report.core_mac_count = macs;
      break;
    }
    case LayerKind::kSeparableConvolutional: {
      const Mat depthwise = random_matrix(k, d, rng);
      const Mat pointwise = random_matrix(d, d, rng);
      Mat y(n * d, 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t m = 0; m < k; ++m) {
          for (std::size_t c = 0; c < d; ++c) {
            const double in = m <= j ? x[(j - m) * d + c] : 0.0;
            y[j * d + c] += depthwise[m * d + c] * in;
            ++macs;
          }
        }
      }
      linear(y, n, d, pointwise, d, macs);
      report.core_mac_count = macs;
      break;
    }
  }
  report.mac_count = macs;
  report.sequential_ops = sequential_stages(build_graph(spec, 1));
  if (measure_paths) {
    if (auto p = layers_to_connect(spec, n)) report.max_path_length = *p;
  }
  return report;
}

const char* axis_name(Axis axis) {
  switch (axis) {
    case Axis::kN:
      return "n";
    case Axis::kD:
      return "d";
    case Axis::kK:
      return "k";
    case Axis::kR:
      return "r";
  }
  return "?";
}

std::size_t axis_value(const LayerSpec& spec, Axis axis) {
  switch (axis) {
    case Axis::kN:
      return spec.n;
    case Axis::kD:
      return spec.d;
    case Axis::kK:
      return spec.k;
    case Axis::kR:
      return spec.r;
  }
  return 0;
}

double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit: need paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit: x values are all equal");
  return sxy / sxx;
}

double scaling_fit(const std::vector<LayerSpec>& sweep, Axis axis,
                   std::uint64_t CostReport::*counter) {
  if (sweep.size() < 4) throw std::invalid_argument("scaling_fit: need at least 4 points");
  const LayerSpec& first = sweep.front();
  std::vector<double> xs, ys;
  for (const LayerSpec& s : sweep) {
    for (Axis other : {Axis::kN, Axis::kD, Axis::kK, Axis::kR}) {
      if (other != axis && axis_value(s, other) != axis_value(first, other)) {
        throw std::invalid_argument(std::string("scaling_fit: sweep varies ") + axis_name(other) +
                                    " as well as " + axis_name(axis));
      }
    }
    if (s.kind != first.kind) throw std::invalid_argument("scaling_fit: mixed layer kinds");
    xs.push_back(std::log2(static_cast<double>(axis_value(s, axis))));
    ys.push_back(std::log2(static_cast<double>(run_layer(s, false).*counter)));
  }
  return least_squares_slope(xs, ys);
}

bool BenchReport::all_pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const BenchRow& r) { return r.pass; });
}

std::string BenchReport::text() const {
  std::ostringstream out;
  out << std::left << std::setw(34) << "kind" << std::setw(8) << "axis" << std::right
      << std::setw(10) << "measured" << std::setw(10) << "expected" << "  " << std::left
      << std::setw(16) << "sequential_ops" << std::setw(22) << "max_path_length" << "pass\n";
  out << std::fixed << std::setprecision(3);
  for (const BenchRow& r : rows) {
    out << std::left << std::setw(34) << r.kind << std::setw(8) << r.axis << std::right
        << std::setw(10) << r.measured << std::setw(10) << r.expected << "  " << std::left
        << std::setw(16) << r.sequential_ops << std::setw(22) << r.max_path_length
        << (r.pass ? "PASS" : "FAIL") << '\n';
  }
  return out.str();
}

std::string BenchReport::csv() const {
  std::ostringstream out;
  out << "kind,axis,measured_exponent,expected_exponent,sequential_ops,max_path_length,pass\n";
  out << std::setprecision(6);
  for (const BenchRow& r : rows) {
    out << r.kind << ',' << r.axis << ',' << r.measured << ',' << r.expected << ','
        << r.sequential_ops << ',' << r.max_path_length << ',' << (r.pass ? "true" : "false")
        << '\n';
  }
  return out.str();
}

namespace {

LayerSpec make(LayerKind kind, std::size_t n, std::size_t d, std::size_t k = 3, std::size_t r = 4,
               bool dilated = false) {
  return LayerSpec{kind, n, d, k, r, dilated};
}

std::vector<LayerSpec> sweep(LayerSpec base, Axis axis, std::vector<std::size_t> values) {
  std::vector<LayerSpec> out;
  for (std::size_t v : values) {
    LayerSpec s = base;
    switch (axis) {
      case Axis::kN:
        s.n = v;
        break;
      case Axis::kD:
        s.d = v;
        break;
      case Axis::kK:
        s.k = v;
        break;
      case Axis::kR:
        s.r = v;
        break;
    }
    out.push_back(s);
  }
  return out;
}

std::string with_claim(std::uint64_t measured, const char* claim) {
  return std::to_string(measured) + " (" + claim + ")";
}

std::string with_claim(const std::optional<std::uint64_t>& measured, const char* claim) {
  return (measured ? std::to_string(*measured) : std::string("unreachable")) + " (" + claim + ")";
}

bool within(double measured, double expected, double tol) {
  return std::abs(measured - expected) <= tol;
}

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

}  // namespace

BenchReport run_bench() {
  BenchReport report;
  constexpr double kTol = 0.1;
  const std::size_t probe_n = 16;

  struct KindInfo {
    LayerKind kind;
    LayerSpec probe;
    const char* seq_claim;
    const char* path_claim;
    std::uint64_t expected_seq;
    std::optional<std::uint64_t> expected_path;  // where a closed form exists
  };
  const std::vector<KindInfo> kinds = {
      {LayerKind::kSelfAttention, make(LayerKind::kSelfAttention, probe_n, 4), "O(1)", "O(1)", 1, 1},
      {LayerKind::kRecurrent, make(LayerKind::kRecurrent, probe_n, 4), "O(n)", "O(n)", probe_n,
       probe_n},
      {LayerKind::kConvolutional, make(LayerKind::kConvolutional, probe_n, 4, 3), "O(1)",
       "O(n/k)", 1, ceil_div(probe_n - 1, 2)},
      {LayerKind::kRestrictedSelfAttention,
       make(LayerKind::kRestrictedSelfAttention, probe_n, 4, 3, 5), "O(1)", "O(n/r)", 1,
       std::nullopt},
      {LayerKind::kSeparableConvolutional, make(LayerKind::kSeparableConvolutional, probe_n, 4, 3),
       "O(1)", "O(n/k)", 1, ceil_div(probe_n - 1, 2)},
  };

  struct Sweep {
    LayerKind kind;
    Axis axis;
    std::vector<LayerSpec> specs;
    double expected;
  };
  using K = LayerKind;
  const std::vector<Sweep> sweeps = {
      {K::kSelfAttention, Axis::kN, sweep(make(K::kSelfAttention, 0, 2), Axis::kN, {256, 512, 1024, 2048}), 2.0},
      {K::kSelfAttention, Axis::kD, sweep(make(K::kSelfAttention, 1024, 0), Axis::kD, {1, 2, 4, 8}), 1.0},
      {K::kRecurrent, Axis::kN, sweep(make(K::kRecurrent, 0, 8), Axis::kN, {64, 128, 256, 512}), 1.0},
      {K::kRecurrent, Axis::kD, sweep(make(K::kRecurrent, 16, 0), Axis::kD, {32, 64, 128, 256}), 2.0},
      {K::kConvolutional, Axis::kN, sweep(make(K::kConvolutional, 0, 8, 3), Axis::kN, {64, 128, 256, 512}), 1.0},
      {K::kConvolutional, Axis::kD, sweep(make(K::kConvolutional, 32, 0, 3), Axis::kD, {16, 32, 64, 128}), 2.0},
      {K::kConvolutional, Axis::kK, sweep(make(K::kConvolutional, 256, 4, 0), Axis::kK, {8, 16, 32, 64}), 1.0},
      {K::kRestrictedSelfAttention, Axis::kN, sweep(make(K::kRestrictedSelfAttention, 0, 1, 3, 32), Axis::kN, {512, 1024, 2048, 4096}), 1.0},
      {K::kRestrictedSelfAttention, Axis::kR, sweep(make(K::kRestrictedSelfAttention, 4096, 1, 3, 0), Axis::kR, {32, 64, 128, 256}), 1.0},
      {K::kRestrictedSelfAttention, Axis::kD, sweep(make(K::kRestrictedSelfAttention, 512, 0, 3, 256), Axis::kD, {1, 2, 4, 8}), 1.0},
      {K::kSeparableConvolutional, Axis::kN, sweep(make(K::kSeparableConvolutional, 0, 8, 3), Axis::kN, {64, 128, 256, 512}), 1.0},
      {K::kSeparableConvolutional, Axis::kK, sweep(make(K::kSeparableConvolutional, 256, 1, 0), Axis::kK, {16, 32, 64, 128}), 1.0},
      {K::kSeparableConvolutional, Axis::kD, sweep(make(K::kSeparableConvolutional, 64, 0, 3), Axis::kD, {64, 128, 256, 512}), 2.0},
  };

  for (const KindInfo& info : kinds) {
    const CostReport probe = run_layer(info.probe);
    bool probe_ok = probe.sequential_ops == info.expected_seq && probe.max_path_length.has_value();
    if (info.expected_path) probe_ok = probe_ok && probe.max_path_length == info.expected_path;
    for (const Sweep& s : sweeps) {
      if (s.kind != info.kind) continue;
      BenchRow row;
      row.kind = layer_kind_name(s.kind);
      row.axis = axis_name(s.axis);
      row.measured = scaling_fit(s.specs, s.axis);
      row.expected = s.expected;
      row.tolerance = kTol;
      // Sequential stages must not depend on the swept axis.
      bool seq_ok = true;
      for (const LayerSpec& spec : s.specs) {
        const std::uint64_t expected = s.kind == K::kRecurrent ? spec.n : 1;
        seq_ok = seq_ok && run_layer(spec, false).sequential_ops == expected;
      }
      row.sequential_ops = with_claim(probe.sequential_ops, info.seq_claim);
      row.max_path_length = with_claim(probe.max_path_length, info.path_claim);
      row.pass = probe_ok && seq_ok && within(row.measured, row.expected, kTol);
      report.rows.push_back(row);
    }
  }

  // Attention memory grows with n^2.
  {
    BenchRow row{"self_attention(memory)", "n", 0.0, 2.0, 0.05, "-", "-", false};
    row.measured = scaling_fit(sweep(make(K::kSelfAttention, 0, 2), Axis::kN, {64, 128, 256, 512}),
                               Axis::kN, &CostReport::attention_memory);
    row.pass = within(row.measured, row.expected, row.tolerance);
    report.rows.push_back(row);
  }

  // Contiguous convolution stacks: depth ceil((n-1)/(k-1)), linear in n/k.
  {
    std::vector<double> xs, ys;
    bool exact = true;
    for (std::size_t n : {9, 17, 33, 65}) {
      const auto path = layers_to_connect(make(K::kConvolutional, n, 1, 3), n);
      exact = exact && path == ceil_div(n - 1, 2);
      xs.push_back(static_cast<double>(n) / 3.0);
      ys.push_back(path ? static_cast<double>(*path) : 0.0);
    }
    const double slope = least_squares_slope(xs, ys);
    BenchRow row{"convolutional(path)", "n/k", slope, 1.5, 0.15, "1 (O(1))", "linear (O(n/k))", false};
    row.pass = exact && within(row.measured, row.expected, row.tolerance);
    report.rows.push_back(row);
  }

  // Dilated convolution stacks: depth ceil(log_k n).
  {
    std::vector<double> xs, ys;
    bool exact = true;
    for (std::size_t n : {8, 16, 32, 64}) {
      const auto path = layers_to_connect(make(K::kConvolutional, n, 1, 2, 4, true), n);
      exact = exact && path == static_cast<std::uint64_t>(std::ceil(std::log2(static_cast<double>(n)) - 1e-12));
      xs.push_back(std::log2(static_cast<double>(n)));
      ys.push_back(path ? static_cast<double>(*path) : 0.0);
    }
    BenchRow row{"convolutional(dilated path)", "log_k n", least_squares_slope(xs, ys), 1.0, kTol,
                 "1 (O(1))", "log (O(log_k(n)))", false};
    row.pass = exact && within(row.measured, row.expected, row.tolerance);
    report.rows.push_back(row);
  }

  // Restricted attention stacks: each layer reaches (r-1)/2 positions back,
  // so depth grows like (n-1)/((r-1)/2) and the slope in n/r is 2r/(r-1).
  {
    std::vector<double> xs, ys;
    bool connected = true;
    const std::size_t r = 9;
    for (std::size_t n : {17, 33, 65, 129}) {
      const auto path = layers_to_connect(make(K::kRestrictedSelfAttention, n, 1, 3, r), n);
      connected = connected && path.has_value();
      xs.push_back(static_cast<double>(n) / static_cast<double>(r));
      ys.push_back(path ? static_cast<double>(*path) : 0.0);
    }
    const double slope = 2.0 * static_cast<double>(r) / static_cast<double>(r - 1);
    BenchRow row{"restricted_self_attention(path)", "n/r", least_squares_slope(xs, ys), slope, 0.1 * slope,
                 "1 (O(1))", "linear (O(n/r))", false};
    row.pass = connected && within(row.measured, row.expected, row.tolerance);
    report.rows.push_back(row);
  }

  // A convolution costs about k/2 recurrent layers: k d^2 vs 2 d^2 per step.
  {
    const std::size_t k = 3;
    const double conv = static_cast<double>(run_layer(make(K::kConvolutional, 64, 8, k), false).mac_count);
    const double rnn = static_cast<double>(run_layer(make(K::kRecurrent, 64, 8), false).mac_count);
    BenchRow row{"convolutional/recurrent", "ratio", conv / rnn, static_cast<double>(k), 0.0,
                 "-", "-", false};
    row.pass = row.measured >= row.expected / 2.0 && row.measured <= row.expected * 2.0;
    report.rows.push_back(row);
  }

  // Separable convolution with k = n against self-attention plus one d x d
  // position-wise layer.
  {
    const std::size_t n = 64, d = 8;
    const double separable =
        static_cast<double>(run_layer(make(K::kSeparableConvolutional, n, d, n), false).mac_count);
    const double attention = static_cast<double>(
        run_layer(make(K::kSelfAttention, n, d), false).core_mac_count + n * d * d);
    BenchRow row{"separable(k=n)/attention+ffn", "ratio", separable / attention, 1.0, 0.0, "-", "-",
                 false};
    row.pass = row.measured >= 0.5 && row.measured <= 2.0;
    report.rows.push_back(row);
  }

  // Restricted attention with r = n is unrestricted attention.
  {
    const std::size_t n = 32, d = 4;
    const auto restricted = run_layer(make(K::kRestrictedSelfAttention, n, d, 3, n), false);
    const auto full = run_layer(make(K::kSelfAttention, n, d), false);
    BenchRow row{"restricted(r=n)/self_attention", "core", 0.0, 1.0, 0.0, "-", "-", false};
    row.measured = static_cast<double>(restricted.core_mac_count) / static_cast<double>(full.core_mac_count);
    row.pass = restricted.core_mac_count == full.core_mac_count;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace t2t::bench
