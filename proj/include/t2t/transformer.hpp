// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "t2t/gradcheck.hpp"
#include "t2t/hparams.hpp"
#include "t2t/pipeline.hpp"
#include "t2t/rng.hpp"
#include "t2t/tensor.hpp"

namespace t2t {

struct TransformerHParams {
  std::size_t num_layers = 2;
  std::size_t d_model = 64;
  std::size_t num_heads = 4;
  std::size_t d_ff = 256;
  double dropout = 0.0;
  std::size_t vocab_size = 0;
  bool share_embeddings = true;
  bool pre_norm = false;
  double layer_norm_epsilon = 1e-6;

  static TransformerHParams from(const HParams& hp, std::size_t vocab_size);
  // Throws unless d_model % num_heads == 0 and all extents are positive.
  void validate() const;
  std::size_t head_dim() const { return d_model / num_heads; }
};

enum class AttentionKind { kSelf, kCausalSelf, kEncDec };
const char* attention_kind_name(AttentionKind kind);

// One head's attention distribution for one batch row.
struct AttentionRecord {
  std::size_t layer = 0;
  std::size_t head = 0;
  std::size_t row = 0;
  AttentionKind kind = AttentionKind::kSelf;
  std::size_t query_len = 0;
  std::size_t key_len = 0;
  std::vector<double> weights;  // [query_len, key_len], row-major
};

// Which keys each query may attend to; a batch of 1 broadcasts.
struct AttentionMask {
  std::size_t batch = 1;
  std::size_t query_len = 0;
  std::size_t key_len = 0;
  std::vector<std::uint8_t> allow;

  bool allowed(std::size_t b, std::size_t q, std::size_t k) const {
    return allow[((batch == 1 ? 0 : b) * query_len + q) * key_len + k] != 0;
  }
};

// Position i may attend to j <= i.
AttentionMask causal_mask(std::size_t len);
// Every query may attend to the non-pad keys of its row.
AttentionMask padding_mask(const IdMatrix& keys, std::size_t query_len);
// Per-row conjunction of two masks of equal extents.
AttentionMask intersect(const AttentionMask& a, const AttentionMask& b);

// Interleaved sinusoids: PE[p, 2i] = sin(p / 10000^(2i/d)),
// PE[p, 2i+1] = cos(p / 10000^(2i/d)). d must be even.
Tensor positional_encoding(std::size_t len, std::size_t d);

// Per-call state for a forward pass. Gradients flow to whatever tape the
// parameters are watched on.
struct ForwardContext {
  bool training = false;
  Rng* dropout_rng = nullptr;
  std::vector<AttentionRecord>* attention = nullptr;
};

// Scaled dot-product attention over num_heads heads using the projection
// matrices <prefix>/{q,k,v,output}, each [d, d] and bias-free. Masked
// logits get -1e9 added before the softmax.
Tensor multi_head_attention(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                            const AttentionMask* mask, const ParamMap& params,
                            const std::string& prefix, std::size_t num_heads,
                            ForwardContext& ctx, AttentionKind kind, std::size_t layer);

// relu(x W1 + b1) W2 + b2 at every position, params <prefix>/{w1,b1,w2,b2}.
Tensor feed_forward(const Tensor& x, const ParamMap& params, const std::string& prefix);

// Right-shifts targets by one, starting every row with EOS.
IdMatrix shift_right(const IdMatrix& targets);

// Mean token cross-entropy over non-pad targets. Throws on an all-pad batch.
Tensor token_loss(const Tensor& logits, const IdMatrix& targets);

struct TokenCounts {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / total : 0.0; }
};
// Argmax (lowest id on ties) against non-pad targets.
TokenCounts token_accuracy(const Tensor& logits, const IdMatrix& targets);

// Encoder-decoder Transformer split into bottom (embedding), body
// (encoder/decoder stacks), top (vocabulary projection) and loss.
class Transformer {
 public:
  explicit Transformer(TransformerHParams hp);

  const TransformerHParams& hparams() const { return hp_; }

  std::vector<std::pair<std::string, Shape>> parameter_shapes() const;
  ParamMap init_parameters(std::uint64_t seed) const;
  // Throws std::invalid_argument naming the first mismatching parameter.
  void check_compatible(const ParamMap& params) const;

  // Embedding * sqrt(d) + positional encoding, then dropout.
  Tensor bottom(const ParamMap& params, const IdMatrix& ids, bool target_side,
                ForwardContext& ctx) const;
  Tensor encode(const ParamMap& params, const IdMatrix& source, ForwardContext& ctx) const;
  // Decoder stack over an already shifted input; returns the body output.
  Tensor decode(const ParamMap& params, const IdMatrix& decoder_input, const Tensor& encoded,
                const IdMatrix& source, ForwardContext& ctx) const;
  Tensor top(const ParamMap& params, const Tensor& body) const;
  // Teacher forcing: shift targets, decode, project to logits.
  Tensor decode_train(const ParamMap& params, const IdMatrix& targets, const Tensor& encoded,
                      const IdMatrix& source, ForwardContext& ctx) const;

 private:
  Tensor sublayer(const Tensor& x, const ParamMap& params, const std::string& norm_prefix,
                  ForwardContext& ctx, const std::function<Tensor(const Tensor&)>& body) const;
  Tensor norm(const Tensor& x, const ParamMap& params, const std::string& prefix) const;
  Tensor apply_dropout(const Tensor& x, ForwardContext& ctx) const;
  const Tensor& embedding_table(const ParamMap& params, bool target_side) const;

  TransformerHParams hp_;
};

}  // namespace t2t
