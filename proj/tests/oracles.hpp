// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "t2t/decoding.hpp"
#include "t2t/rng.hpp"
#include "t2t/transformer.hpp"

namespace t2t::testing {

// Random next-token distributions, fixed per prefix and seed.
class TableScorer : public SequenceScorer {
 public:
  TableScorer(std::size_t vocab, std::uint64_t seed, double spread = 3.0)
      : vocab_(vocab), seed_(seed), spread_(spread) {}

  std::size_t vocab_size() const override { return vocab_; }

  std::vector<double> next_log_probs(std::span<const int> prefix) override {
    ++calls_;
    const std::vector<int> key(prefix.begin(), prefix.end());
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    std::uint64_t h = seed_;
    for (int t : key) h = splitmix64(h ^ static_cast<std::uint64_t>(t + 1));
    Rng rng(splitmix64(h + key.size()));
    std::vector<double> logits(vocab_);
    double top = -1e300;
    for (double& x : logits) top = std::max(top, x = spread_ * normal(rng));
    double z = 0.0;
    for (double x : logits) z += std::exp(x - top);
    for (double& x : logits) x = x - top - std::log(z);
    return cache_[key] = logits;
  }

  std::size_t calls() const { return calls_; }

 private:
  std::size_t vocab_;
  std::uint64_t seed_;
  double spread_;
  std::size_t calls_ = 0;
  std::map<std::vector<int>, std::vector<double>> cache_;
};

// Every complete hypothesis up to `cap` tokens: EOS-terminated, or cut at
// the cap. Returns the best by length-normalized score (first found on ties).
inline BeamHypothesis enumerate_best(SequenceScorer& scorer, double alpha, std::size_t cap) {
  BeamHypothesis best;
  best.score = -std::numeric_limits<double>::infinity();
  std::vector<int> prefix;
  auto visit = [&](auto&& self, double sum) -> void {
    const std::vector<double> lp = scorer.next_log_probs(prefix);
    for (std::size_t t = 0; t < lp.size(); ++t) {
      prefix.push_back(static_cast<int>(t));
      const double s = sum + lp[t];
      if (static_cast<int>(t) == kEosId || prefix.size() == cap) {
        const double score = s / length_penalty(prefix.size(), alpha);
        if (score > best.score) best = {prefix, s, score};
      } else {
        self(self, s);
      }
      prefix.pop_back();
    }
  };
  if (cap > 0) visit(visit, 0.0);
  return best;
}

// Parameters for a post-norm, unshared-embedding model whose decoder
// output is the same vector everywhere, so every step predicts `favored`
// and EOS is the least likely token.
inline ParamMap constant_output_params(const Transformer& model, int favored, std::uint64_t seed) {
  const TransformerHParams& hp = model.hparams();
  ParamMap p = model.init_parameters(seed);
  const std::string norm = "decoder/layer_" + std::to_string(hp.num_layers - 1) + "/ffn/norm/";
  p[norm + "gain"] = Tensor::zeros({hp.d_model});
  p[norm + "bias"] = Tensor::ones({hp.d_model});
  std::vector<double> top(hp.vocab_size * hp.d_model, 0.0);
  for (std::size_t c = 0; c < hp.d_model; ++c) {
    top[static_cast<std::size_t>(favored) * hp.d_model + c] = 1.0;
    top[static_cast<std::size_t>(kEosId) * hp.d_model + c] = -1.0;
  }
  p["top/weights"] = Tensor({hp.vocab_size, hp.d_model}, std::move(top));
  return p;
}

}  // namespace t2t::testing
