// SPDX-License-Identifier: Apache-2.0
#include "t2t/transformer.hpp"

#include <cmath>
#include <stdexcept>

#include "t2t/bpe.hpp"
#include "t2t/ops.hpp"

namespace t2t {
namespace {

constexpr double kMaskedLogit = -1e9;

std::string layer_prefix(const char* stack, std::size_t layer) {
  return std::string(stack) + "/layer_" + std::to_string(layer);
}

const Tensor& param(const ParamMap& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw std::out_of_range("missing parameter " + name);
  return it->second;
}

// [B, L, d] -> [B, h, L, d/h]
Tensor split_heads(const Tensor& x, std::size_t heads) {
  const std::size_t b = x.dim(0), len = x.dim(1), d = x.dim(2);
  return ops::permute(ops::reshape(x, {b, len, heads, d / heads}), {0, 2, 1, 3});
}

// [B, h, L, d/h] -> [B, L, d]
Tensor merge_heads(const Tensor& x) {
  const std::size_t b = x.dim(0), h = x.dim(1), len = x.dim(2), dk = x.dim(3);
  return ops::reshape(ops::permute(x, {0, 2, 1, 3}), {b, len, h * dk});
}

}  // namespace

const char* attention_kind_name(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::kSelf:
      return "self";
    case AttentionKind::kCausalSelf:
      return "causal-self";
    case AttentionKind::kEncDec:
      return "encdec";
  }
  return "unknown";
}

TransformerHParams TransformerHParams::from(const HParams& hp, std::size_t vocab_size) {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw std::invalid_argument(std::string("hparams: ") + name + " must be positive");
    return static_cast<std::size_t>(v);
  };
  if (hp.num_layers < 0) throw std::invalid_argument("hparams: num_layers must be >= 0");
  TransformerHParams t;
  t.num_layers = static_cast<std::size_t>(hp.num_layers);
  t.d_model = positive(hp.d_model, "d_model");
  t.num_heads = positive(hp.num_heads, "num_heads");
  t.d_ff = positive(hp.d_ff, "d_ff");
  t.dropout = hp.dropout;
  t.vocab_size = vocab_size;
  t.share_embeddings = hp.share_embeddings;
  t.pre_norm = hp.pre_norm;
  t.layer_norm_epsilon = hp.layer_norm_epsilon;
  t.validate();
  return t;
}

void TransformerHParams::validate() const {
  if (d_model == 0 || num_heads == 0 || d_ff == 0 || vocab_size == 0) {
    throw std::invalid_argument("transformer: all extents must be positive");
  }
  if (d_model % num_heads != 0) {
    throw std::invalid_argument("transformer: d_model " + std::to_string(d_model) +
                                " is not divisible by num_heads " + std::to_string(num_heads));
  }
  if (d_model % 2 != 0) throw std::invalid_argument("transformer: d_model must be even");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw std::invalid_argument("transformer: dropout must be in [0, 1)");
  }
}

AttentionMask causal_mask(std::size_t len) {
  AttentionMask m{1, len, len, std::vector<std::uint8_t>(len * len, 0)};
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t j = 0; j <= i; ++j) m.allow[i * len + j] = 1;
  }
  return m;
}

AttentionMask padding_mask(const IdMatrix& keys, std::size_t query_len) {
  AttentionMask m{keys.rows, query_len, keys.cols,
                  std::vector<std::uint8_t>(keys.rows * query_len * keys.cols, 0)};
  for (std::size_t b = 0; b < keys.rows; ++b) {
    for (std::size_t q = 0; q < query_len; ++q) {
      for (std::size_t k = 0; k < keys.cols; ++k) {
        m.allow[(b * query_len + q) * keys.cols + k] = keys.at(b, k) != kPadId ? 1 : 0;
      }
    }
  }
  return m;
}

AttentionMask intersect(const AttentionMask& a, const AttentionMask& b) {
  if (a.query_len != b.query_len || a.key_len != b.key_len) {
    throw std::invalid_argument("intersect: mask extents differ");
  }
  const std::size_t batch = std::max(a.batch, b.batch);
  AttentionMask m{batch, a.query_len, a.key_len,
                  std::vector<std::uint8_t>(batch * a.query_len * a.key_len, 0)};
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t q = 0; q < a.query_len; ++q) {
      for (std::size_t k = 0; k < a.key_len; ++k) {
        m.allow[(r * a.query_len + q) * a.key_len + k] = a.allowed(r, q, k) && b.allowed(r, q, k);
      }
    }
  }
  return m;
}

Tensor positional_encoding(std::size_t len, std::size_t d) {
  if (d % 2 != 0) throw std::invalid_argument("positional_encoding: d must be even");
  std::vector<double> pe(len * d);
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double angle = static_cast<double>(pos) /
                           std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d));
      pe[pos * d + 2 * i] = std::sin(angle);
      pe[pos * d + 2 * i + 1] = std::cos(angle);
    }
  }
  return Tensor({len, d}, std::move(pe));
}

Tensor multi_head_attention(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                            const AttentionMask* mask, const ParamMap& params,
                            const std::string& prefix, std::size_t num_heads,
                            ForwardContext& ctx, AttentionKind kind, std::size_t layer) {
  if (q_in.rank() != 3 || k_in.rank() != 3 || v_in.rank() != 3) {
    throw std::invalid_argument("attention: inputs must be [batch, len, d]");
  }
  const std::size_t batch = q_in.dim(0), q_len = q_in.dim(1), d = q_in.dim(2);
  const std::size_t k_len = k_in.dim(1);
  if (num_heads == 0 || d % num_heads != 0) {
    throw std::invalid_argument("attention: d " + std::to_string(d) +
                                " is not divisible by heads " + std::to_string(num_heads));
  }
  if (k_in.shape() != v_in.shape() || k_in.dim(0) != batch || k_in.dim(2) != d) {
    throw std::invalid_argument("attention: key/value shape " + shape_string(k_in.shape()) +
                                " incompatible with query " + shape_string(q_in.shape()));
  }
  if (mask && (mask->query_len != q_len || mask->key_len != k_len ||
               (mask->batch != 1 && mask->batch != batch))) {
    throw std::invalid_argument("attention: mask [" + std::to_string(mask->batch) + ", " +
                                std::to_string(mask->query_len) + ", " +
                                std::to_string(mask->key_len) + "] does not broadcast to [" +
                                std::to_string(batch) + ", " + std::to_string(q_len) + ", " +
                                std::to_string(k_len) + "]");
  }
  const std::size_t dk = d / num_heads;

  const Tensor q = split_heads(ops::matmul(q_in, param(params, prefix + "/q")), num_heads);
  const Tensor k = split_heads(ops::matmul(k_in, param(params, prefix + "/k")), num_heads);
  const Tensor v = split_heads(ops::matmul(v_in, param(params, prefix + "/v")), num_heads);

  Tensor logits = ops::scale(ops::matmul(q, ops::transpose(k)), 1.0 / std::sqrt(static_cast<double>(dk)));
  if (mask) {
    std::vector<double> bias(batch * num_heads * q_len * k_len, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t h = 0; h < num_heads; ++h) {
        double* block = bias.data() + (b * num_heads + h) * q_len * k_len;
        for (std::size_t i = 0; i < q_len; ++i) {
          for (std::size_t j = 0; j < k_len; ++j) {
            if (!mask->allowed(b, i, j)) block[i * k_len + j] = kMaskedLogit;
          }
        }
      }
    }
    logits = ops::add(logits, Tensor(logits.shape(), std::move(bias)));
  }
  const Tensor weights = ops::softmax(logits, 3);

  if (ctx.attention) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t h = 0; h < num_heads; ++h) {
        AttentionRecord rec{layer, h, b, kind, q_len, k_len, {}};
        const auto first = weights.data().begin() +
                           static_cast<long>((b * num_heads + h) * q_len * k_len);
        rec.weights.assign(first, first + static_cast<long>(q_len * k_len));
        ctx.attention->push_back(std::move(rec));
      }
    }
  }

  const Tensor context = merge_heads(ops::matmul(weights, v));
  return ops::matmul(context, param(params, prefix + "/output"));
}

Tensor feed_forward(const Tensor& x, const ParamMap& params, const std::string& prefix) {
  const Tensor& w1 = param(params, prefix + "/w1");
  const Tensor& b1 = param(params, prefix + "/b1");
  const Tensor& w2 = param(params, prefix + "/w2");
  const Tensor& b2 = param(params, prefix + "/b2");
  Shape hidden_shape = x.shape();
  hidden_shape.back() = w1.dim(1);
  const Tensor hidden = ops::relu(ops::add(ops::matmul(x, w1), ops::broadcast_to(b1, hidden_shape)));
  Shape out_shape = x.shape();
  out_shape.back() = w2.dim(1);
  return ops::add(ops::matmul(hidden, w2), ops::broadcast_to(b2, out_shape));
}

IdMatrix shift_right(const IdMatrix& targets) {
  IdMatrix out(targets.rows, targets.cols);
  for (std::size_t r = 0; r < targets.rows; ++r) {
    if (targets.cols == 0) continue;
    out.at(r, 0) = kEosId;
    for (std::size_t c = 1; c < targets.cols; ++c) out.at(r, c) = targets.at(r, c - 1);
  }
  return out;
}

Tensor token_loss(const Tensor& logits, const IdMatrix& targets) {
  if (logits.rank() != 3 || logits.dim(0) != targets.rows || logits.dim(1) != targets.cols) {
    throw std::invalid_argument("loss: logits " + shape_string(logits.shape()) +
                                " do not match targets [" + std::to_string(targets.rows) + ", " +
                                std::to_string(targets.cols) + "]");
  }
  const std::size_t count = targets.non_pad();
  if (count == 0) throw std::invalid_argument("loss: batch contains only padding");
  std::vector<double> weights(targets.ids.size());
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = targets.ids[i] == kPadId ? 0.0 : 1.0;
  const Tensor picked = ops::pick(ops::log_softmax(logits, 2), targets.ids);
  const Tensor masked = ops::mul(picked, Tensor(picked.shape(), std::move(weights)));
  return ops::scale(ops::sum(masked), -1.0 / static_cast<double>(count));
}

TokenCounts token_accuracy(const Tensor& logits, const IdMatrix& targets) {
  const std::size_t v = logits.dim(logits.rank() - 1);
  TokenCounts counts;
  for (std::size_t i = 0; i < targets.ids.size(); ++i) {
    if (targets.ids[i] == kPadId) continue;
    const double* row = logits.data().data() + i * v;
    std::size_t best = 0;
    for (std::size_t j = 1; j < v; ++j) {
      if (row[j] > row[best]) best = j;
    }
    ++counts.total;
    if (static_cast<int>(best) == targets.ids[i]) ++counts.correct;
  }
  return counts;
}

Transformer::Transformer(TransformerHParams hp) : hp_(hp) { hp_.validate(); }

std::vector<std::pair<std::string, Shape>> Transformer::parameter_shapes() const {
  const std::size_t d = hp_.d_model, v = hp_.vocab_size, f = hp_.d_ff;
  std::vector<std::pair<std::string, Shape>> shapes;
  if (hp_.share_embeddings) {
    shapes.push_back({"embedding/shared", {v, d}});
  } else {
    shapes.push_back({"embedding/source", {v, d}});
    shapes.push_back({"embedding/target", {v, d}});
    shapes.push_back({"top/weights", {v, d}});
  }
  auto attention = [&](const std::string& p) {
    for (const char* m : {"/q", "/k", "/v", "/output"}) shapes.push_back({p + m, {d, d}});
    shapes.push_back({p + "/norm/gain", {d}});
    shapes.push_back({p + "/norm/bias", {d}});
  };
  auto ffn = [&](const std::string& p) {
    shapes.push_back({p + "/w1", {d, f}});
    shapes.push_back({p + "/b1", {f}});
    shapes.push_back({p + "/w2", {f, d}});
    shapes.push_back({p + "/b2", {d}});
    shapes.push_back({p + "/norm/gain", {d}});
    shapes.push_back({p + "/norm/bias", {d}});
  };
  for (std::size_t l = 0; l < hp_.num_layers; ++l) {
    const std::string p = layer_prefix("encoder", l);
    attention(p + "/self_attention");
    ffn(p + "/ffn");
  }
  for (std::size_t l = 0; l < hp_.num_layers; ++l) {
    const std::string p = layer_prefix("decoder", l);
    attention(p + "/self_attention");
    attention(p + "/encdec_attention");
    ffn(p + "/ffn");
  }
  if (hp_.pre_norm) {
    for (const char* p : {"encoder/final_norm", "decoder/final_norm"}) {
      shapes.push_back({std::string(p) + "/gain", {d}});
      shapes.push_back({std::string(p) + "/bias", {d}});
    }
  }
  return shapes;
}

ParamMap Transformer::init_parameters(std::uint64_t seed) const {
  Rng rng(seed);
  ParamMap params;
  auto ends_with = [](const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (const auto& [name, shape] : parameter_shapes()) {
    std::vector<double> values(num_elements(shape), 0.0);
    if (name.starts_with("embedding/") || name == "top/weights") {
      const double stddev = 1.0 / std::sqrt(static_cast<double>(hp_.d_model));
      for (double& x : values) x = normal(rng) * stddev;
    } else if (shape.size() == 2) {
      const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      for (double& x : values) x = (2.0 * uniform01(rng) - 1.0) * limit;
    } else if (ends_with(name, "/gain")) {
      std::fill(values.begin(), values.end(), 1.0);
    }
    params.emplace(name, Tensor(shape, std::move(values)));
  }
  return params;
}

void Transformer::check_compatible(const ParamMap& params) const {
  const auto shapes = parameter_shapes();
  if (shapes.size() != params.size()) {
    throw std::invalid_argument("checkpoint has " + std::to_string(params.size()) +
                                " parameters, model expects " + std::to_string(shapes.size()));
  }
  for (const auto& [name, shape] : shapes) {
    auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument("checkpoint lacks parameter " + name);
    if (it->second.shape() != shape) {
      throw std::invalid_argument("parameter " + name + " has shape " +
                                  shape_string(it->second.shape()) + ", model expects " +
                                  shape_string(shape));
    }
  }
}

const Tensor& Transformer::embedding_table(const ParamMap& params, bool target_side) const {
  if (hp_.share_embeddings) return param(params, "embedding/shared");
  return param(params, target_side ? "embedding/target" : "embedding/source");
}

Tensor Transformer::apply_dropout(const Tensor& x, ForwardContext& ctx) const {
  if (!ctx.training || hp_.dropout == 0.0) return x;
  if (!ctx.dropout_rng) throw std::logic_error("transformer: training pass without dropout rng");
  return ops::dropout(x, 1.0 - hp_.dropout, *ctx.dropout_rng);
}

Tensor Transformer::norm(const Tensor& x, const ParamMap& params, const std::string& prefix) const {
  return ops::layer_norm(x, param(params, prefix + "/gain"), param(params, prefix + "/bias"),
                         hp_.layer_norm_epsilon);
}

Tensor Transformer::sublayer(const Tensor& x, const ParamMap& params,
                             const std::string& norm_prefix, ForwardContext& ctx,
                             const std::function<Tensor(const Tensor&)>& body) const {
  if (hp_.pre_norm) {
    return ops::add(x, apply_dropout(body(norm(x, params, norm_prefix)), ctx));
  }
  return norm(ops::add(x, apply_dropout(body(x), ctx)), params, norm_prefix);
}

Tensor Transformer::bottom(const ParamMap& params, const IdMatrix& ids, bool target_side,
                           ForwardContext& ctx) const {
  const std::size_t d = hp_.d_model;
  const Tensor embedded = ops::scale(
      ops::embedding(embedding_table(params, target_side), ids.ids, {ids.rows, ids.cols}),
      std::sqrt(static_cast<double>(d)));
  const Tensor pe = ops::broadcast_to(positional_encoding(ids.cols, d), embedded.shape());
  return apply_dropout(ops::add(embedded, pe), ctx);
}

Tensor Transformer::encode(const ParamMap& params, const IdMatrix& source, ForwardContext& ctx) const {
  Tensor x = bottom(params, source, false, ctx);
  const AttentionMask mask = padding_mask(source, source.cols);
  for (std::size_t l = 0; l < hp_.num_layers; ++l) {
    const std::string p = layer_prefix("encoder", l);
    x = sublayer(x, params, p + "/self_attention/norm", ctx, [&](const Tensor& in) {
      return multi_head_attention(in, in, in, &mask, params, p + "/self_attention", hp_.num_heads,
                                  ctx, AttentionKind::kSelf, l);
    });
    x = sublayer(x, params, p + "/ffn/norm", ctx,
                 [&](const Tensor& in) { return feed_forward(in, params, p + "/ffn"); });
  }
  if (hp_.pre_norm) x = norm(x, params, "encoder/final_norm");
  return x;
}

Tensor Transformer::decode(const ParamMap& params, const IdMatrix& decoder_input,
                           const Tensor& encoded, const IdMatrix& source,
                           ForwardContext& ctx) const {
  if (encoded.rank() != 3 || encoded.dim(0) != decoder_input.rows ||
      encoded.dim(1) != source.cols || source.rows != decoder_input.rows) {
    throw std::invalid_argument("decode: encoder output " + shape_string(encoded.shape()) +
                                " does not match batch of " + std::to_string(decoder_input.rows) +
                                " rows and source length " + std::to_string(source.cols));
  }
  Tensor x = bottom(params, decoder_input, true, ctx);
  const AttentionMask self_mask = causal_mask(decoder_input.cols);
  const AttentionMask cross_mask = padding_mask(source, decoder_input.cols);
  for (std::size_t l = 0; l < hp_.num_layers; ++l) {
    const std::string p = layer_prefix("decoder", l);
    x = sublayer(x, params, p + "/self_attention/norm", ctx, [&](const Tensor& in) {
      return multi_head_attention(in, in, in, &self_mask, params, p + "/self_attention",
                                  hp_.num_heads, ctx, AttentionKind::kCausalSelf, l);
    });
    x = sublayer(x, params, p + "/encdec_attention/norm", ctx, [&](const Tensor& in) {
      return multi_head_attention(in, encoded, encoded, &cross_mask, params,
                                  p + "/encdec_attention", hp_.num_heads, ctx,
                                  AttentionKind::kEncDec, l);
    });
    x = sublayer(x, params, p + "/ffn/norm", ctx,
                 [&](const Tensor& in) { return feed_forward(in, params, p + "/ffn"); });
  }
  if (hp_.pre_norm) x = norm(x, params, "decoder/final_norm");
  return x;
}

Tensor Transformer::top(const ParamMap& params, const Tensor& body) const {
  const Tensor& weights = hp_.share_embeddings ? param(params, "embedding/shared")
                                               : param(params, "top/weights");
  return ops::matmul(body, ops::transpose(weights));
}

Tensor Transformer::decode_train(const ParamMap& params, const IdMatrix& targets,
                                 const Tensor& encoded, const IdMatrix& source,
                                 ForwardContext& ctx) const {
  return top(params, decode(params, shift_right(targets), encoded, source, ctx));
}

}  // namespace t2t
