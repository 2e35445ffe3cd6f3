// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "t2t/bpe.hpp"
#include "t2t/gradcheck.hpp"
#include "t2t/ops.hpp"
#include "t2t/transformer.hpp"
#include "test_util.hpp"

using namespace t2t;
using t2t::testing::random_tensor;

namespace {

TransformerHParams small_hparams(std::size_t layers = 2, bool pre_norm = false) {
  TransformerHParams hp;
  hp.num_layers = layers;
  hp.d_model = 8;
  hp.num_heads = 2;
  hp.d_ff = 16;
  hp.vocab_size = 13;
  hp.pre_norm = pre_norm;
  return hp;
}

IdMatrix random_ids(Rng& rng, std::size_t rows, std::size_t cols, std::size_t vocab,
                    bool with_padding = false) {
  IdMatrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t len = with_padding ? 1 + uniform_index(rng, cols) : cols;
    for (std::size_t c = 0; c < len; ++c) m.at(r, c) = 1 + static_cast<int>(uniform_index(rng, vocab - 1));
  }
  return m;
}

IdMatrix append_pads(const IdMatrix& m, std::size_t extra) {
  IdMatrix out(m.rows, m.cols + extra);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) out.at(r, c) = m.at(r, c);
  return out;
}

Tensor logits_for(const Transformer& model, const ParamMap& params, const IdMatrix& src,
                  const IdMatrix& tgt) {
  ForwardContext ctx;
  const Tensor enc = model.encode(params, src, ctx);
  return model.decode_train(params, tgt, enc, src, ctx);
}

// Straight-line multi-head attention on plain arrays: x is [len, d], all
// matrices [d, d], no mask.
std::vector<double> scalar_attention(const std::vector<double>& x, std::size_t len, std::size_t d,
                                     std::size_t heads, const std::vector<double>& wq,
                                     const std::vector<double>& wk, const std::vector<double>& wv,
                                     const std::vector<double>& wo) {
  auto project = [&](const std::vector<double>& w) {
    std::vector<double> y(len * d, 0.0);
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) y[i * d + b] += x[i * d + a] * w[a * d + b];
    return y;
  };
  const auto q = project(wq), k = project(wk), v = project(wv);
  const std::size_t dk = d / heads;
  std::vector<double> concat(len * d, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < len; ++i) {
      std::vector<double> s(len);
      double top = -1e300;
      for (std::size_t j = 0; j < len; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dk; ++c) dot += q[i * d + h * dk + c] * k[j * d + h * dk + c];
        s[j] = dot / std::sqrt(static_cast<double>(dk));
        top = std::max(top, s[j]);
      }
      double z = 0.0;
      for (double& e : s) z += (e = std::exp(e - top));
      for (std::size_t j = 0; j < len; ++j)
        for (std::size_t c = 0; c < dk; ++c) concat[i * d + h * dk + c] += s[j] / z * v[j * d + h * dk + c];
    }
  }
  std::vector<double> out(len * d, 0.0);
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) out[i * d + b] += concat[i * d + a] * wo[a * d + b];
  return out;
}

ParamMap attention_params(Rng& rng, std::size_t d, const std::string& prefix = "att") {
  ParamMap p;
  for (const char* m : {"/q", "/k", "/v", "/output"}) p.emplace(prefix + m, random_tensor({d, d}, rng));
  return p;
}

}  // namespace

TEST_CASE("positional encoding values") {
  const Tensor pe = positional_encoding(4, 6);
  for (std::size_t c = 0; c < 6; ++c) CHECK(pe[c] == (c % 2 == 0 ? 0.0 : 1.0));
  CHECK(pe[6] == doctest::Approx(0.8414709848).epsilon(1e-10));
  const Tensor wide = positional_encoding(50, 16);
  for (double v : wide.data()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS(positional_encoding(3, 5));
}

TEST_CASE("causal mask is lower triangular") {
  CHECK(causal_mask(1).allow == std::vector<std::uint8_t>{1});
  CHECK(causal_mask(3).allow == std::vector<std::uint8_t>{1, 0, 0, 1, 1, 0, 1, 1, 1});
}

TEST_CASE("padding mask hides pad keys") {
  const IdMatrix keys = IdMatrix::from_rows({{4, 1}, {4, 5, 1}});
  const AttentionMask m = padding_mask(keys, 2);
  CHECK(m.allowed(0, 1, 1));
  CHECK_FALSE(m.allowed(0, 0, 2));
  CHECK(m.allowed(1, 0, 2));
  const AttentionMask both = intersect(padding_mask(IdMatrix::from_rows({{4, 5, 0}}), 3), causal_mask(3));
  CHECK(both.allow == std::vector<std::uint8_t>{1, 0, 0, 1, 1, 0, 1, 1, 0});
}

TEST_CASE("attention over a single position is exactly one") {
  Rng rng(1);
  const ParamMap p = attention_params(rng, 8);
  std::vector<AttentionRecord> records;
  ForwardContext ctx;
  ctx.attention = &records;
  const Tensor x = random_tensor({2, 1, 8}, rng);
  multi_head_attention(x, x, x, nullptr, p, "att", 2, ctx, AttentionKind::kSelf, 0);
  REQUIRE(records.size() == 4);
  for (const auto& r : records) CHECK(r.weights == std::vector<double>{1.0});
}

TEST_CASE("identical keys give uniform attention") {
  Rng rng(2);
  const ParamMap p = attention_params(rng, 4);
  const Tensor row = random_tensor({1, 1, 4}, rng);
  std::vector<double> same;
  for (int i = 0; i < 5; ++i) same.insert(same.end(), row.data().begin(), row.data().end());
  const Tensor keys({1, 5, 4}, same);
  const Tensor queries = random_tensor({1, 3, 4}, rng);
  std::vector<AttentionRecord> records;
  ForwardContext ctx;
  ctx.attention = &records;
  multi_head_attention(queries, keys, keys, nullptr, p, "att", 2, ctx, AttentionKind::kEncDec, 0);
  for (const auto& r : records)
    for (double w : r.weights) CHECK(w == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("multi-head attention matches a scalar implementation") {
  Rng rng(3);
  const ParamMap p = attention_params(rng, 8);
  const Tensor x = random_tensor({1, 3, 8}, rng);
  ForwardContext ctx;
  const Tensor y = multi_head_attention(x, x, x, nullptr, p, "att", 2, ctx, AttentionKind::kSelf, 0);
  auto vec = [](const Tensor& t) { return std::vector<double>(t.data().begin(), t.data().end()); };
  const auto expect = scalar_attention(vec(x), 3, 8, 2, vec(p.at("att/q")), vec(p.at("att/k")),
                                       vec(p.at("att/v")), vec(p.at("att/output")));
  for (std::size_t i = 0; i < expect.size(); ++i) CHECK(std::abs(y[i] - expect[i]) < 1e-12);
}

TEST_CASE("attention rows are distributions with exact zeros at masked keys") {
  Rng rng(4);
  const ParamMap p = attention_params(rng, 8);
  const IdMatrix keys = IdMatrix::from_rows({{5, 6, 1, 0, 0}, {5, 1, 0, 0, 0}});
  const AttentionMask mask = intersect(padding_mask(keys, 5), causal_mask(5));
  const Tensor x = random_tensor({2, 5, 8}, rng, -3, 3);
  std::vector<AttentionRecord> records;
  ForwardContext ctx;
  ctx.attention = &records;
  multi_head_attention(x, x, x, &mask, p, "att", 2, ctx, AttentionKind::kCausalSelf, 0);
  REQUIRE(records.size() == 4);
  for (const auto& r : records) {
    for (std::size_t q = 0; q < r.query_len; ++q) {
      double total = 0.0;
      for (std::size_t k = 0; k < r.key_len; ++k) {
        const double w = r.weights[q * r.key_len + k];
        CHECK(w >= 0.0);
        if (!mask.allowed(r.row, q, k)) CHECK(w == 0.0);
        total += w;
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("attention rejects bad shapes") {
  Rng rng(5);
  const ParamMap p = attention_params(rng, 6);
  const Tensor x = random_tensor({1, 2, 6}, rng);
  ForwardContext ctx;
  CHECK_THROWS_AS(multi_head_attention(x, x, x, nullptr, p, "att", 4, ctx, AttentionKind::kSelf, 0),
                  std::invalid_argument);
  const AttentionMask wrong = causal_mask(3);
  CHECK_THROWS_AS(multi_head_attention(x, x, x, &wrong, p, "att", 2, ctx, AttentionKind::kSelf, 0),
                  std::invalid_argument);
  TransformerHParams hp = small_hparams();
  hp.num_heads = 3;
  CHECK_THROWS(Transformer(hp));
}

TEST_CASE("feed-forward is position-wise") {
  Rng rng(6);
  ParamMap p{{"ffn/w1", random_tensor({4, 6}, rng)},
             {"ffn/b1", random_tensor({6}, rng)},
             {"ffn/w2", random_tensor({6, 4}, rng)},
             {"ffn/b2", random_tensor({4}, rng)}};
  const Tensor x = random_tensor({1, 3, 4}, rng);
  const Tensor y = feed_forward(x, p, "ffn");
  // reverse the positions of the input; outputs reverse with them
  std::vector<double> rev;
  for (int pos = 2; pos >= 0; --pos) rev.insert(rev.end(), x.data().begin() + pos * 4, x.data().begin() + pos * 4 + 4);
  const Tensor yr = feed_forward(Tensor({1, 3, 4}, rev), p, "ffn");
  for (std::size_t pos = 0; pos < 3; ++pos)
    for (std::size_t c = 0; c < 4; ++c) CHECK(yr[(2 - pos) * 4 + c] == y[pos * 4 + c]);

  ParamMap zero;
  for (const auto& [name, t] : p) zero.emplace(name, Tensor::zeros(t.shape()));
  const Tensor zero_out = feed_forward(x, zero, "ffn");
  for (double v : zero_out.data()) CHECK(v == 0.0);

  auto f = [&](const ParamMap& q) {
    Rng w(7);
    const Tensor out = feed_forward(x, q, "ffn");
    return ops::sum(ops::mul(out, random_tensor(out.shape(), w)));
  };
  CHECK(check_gradients(f, p, 1e-6).max_relative_error < 1e-6);
}

TEST_CASE("parameter init is seeded and shapes are checked") {
  const Transformer model(small_hparams());
  const ParamMap a = model.init_parameters(1), b = model.init_parameters(1), c = model.init_parameters(2);
  CHECK(a.size() == model.parameter_shapes().size());
  for (const auto& [name, t] : a) {
    CHECK(t.shape() == b.at(name).shape());
    CHECK(t2t::testing::max_abs_diff(t, b.at(name)) == 0.0);
  }
  CHECK(t2t::testing::max_abs_diff(a.at("embedding/shared"), c.at("embedding/shared")) > 0.0);
  CHECK(a.at("encoder/layer_0/ffn/norm/gain")[0] == 1.0);
  model.check_compatible(a);
  ParamMap broken = a;
  broken["encoder/layer_0/ffn/w1"] = Tensor::zeros({2, 2});
  CHECK_THROWS_AS(model.check_compatible(broken), std::invalid_argument);
  broken.erase("encoder/layer_0/ffn/w1");
  CHECK_THROWS_AS(model.check_compatible(broken), std::invalid_argument);
}

TEST_CASE("empty encoder stack returns the embedded input") {
  const Transformer model(small_hparams(0));
  const ParamMap p = model.init_parameters(3);
  const IdMatrix src = IdMatrix::from_rows({{4, 5, 1}});
  ForwardContext ctx;
  const Tensor enc = model.encode(p, src, ctx);
  const Tensor& table = p.at("embedding/shared");
  const Tensor pe = positional_encoding(3, 8);
  for (std::size_t pos = 0; pos < 3; ++pos)
    for (std::size_t c = 0; c < 8; ++c) {
      const double expect = table[static_cast<std::size_t>(src.at(0, pos)) * 8 + c] * std::sqrt(8.0) + pe[pos * 8 + c];
      CHECK(enc[pos * 8 + c] == doctest::Approx(expect).epsilon(1e-14));
    }
}

TEST_CASE("encoder and decoder shapes and row independence") {
  const Transformer model(small_hparams());
  const ParamMap p = model.init_parameters(4);
  const IdMatrix src = IdMatrix::from_rows({{4, 5, 6, 1}, {4, 5, 6, 1}});
  const IdMatrix tgt = IdMatrix::from_rows({{7, 8, 1}, {7, 8, 1}});
  ForwardContext ctx;
  const Tensor enc = model.encode(p, src, ctx);
  CHECK(enc.shape() == Shape{2, 4, 8});
  for (std::size_t i = 0; i < 32; ++i) CHECK(enc[i] == enc[32 + i]);
  const Tensor logits = model.decode_train(p, tgt, enc, src, ctx);
  CHECK(logits.shape() == Shape{2, 3, 13});
  CHECK_THROWS(model.encode(p, IdMatrix::from_rows({{13}}), ctx));
}

TEST_CASE("shared embeddings make the top layer the transposed table") {
  const Transformer model(small_hparams());
  const ParamMap p = model.init_parameters(5);
  Rng rng(8);
  const Tensor body = random_tensor({1, 2, 8}, rng);
  const Tensor logits = model.top(p, body);
  const Tensor& e = p.at("embedding/shared");
  for (std::size_t pos = 0; pos < 2; ++pos)
    for (std::size_t v = 0; v < 13; ++v) {
      double dot = 0.0;
      for (std::size_t c = 0; c < 8; ++c) dot += body[pos * 8 + c] * e[v * 8 + c];
      CHECK(logits[pos * 13 + v] == doctest::Approx(dot).epsilon(1e-12));
    }
  TransformerHParams unshared = small_hparams();
  unshared.share_embeddings = false;
  const Transformer m2(unshared);
  const ParamMap p2 = m2.init_parameters(5);
  CHECK(p2.count("top/weights") == 1);
  CHECK(p2.count("embedding/shared") == 0);
}

TEST_CASE("shift_right starts with EOS") {
  const IdMatrix t = IdMatrix::from_rows({{4, 5, 1}, {6, 1, 0}});
  const IdMatrix s = shift_right(t);
  CHECK(s.ids == std::vector<int>{1, 4, 5, 1, 6, 1});
}

TEST_CASE("loss values") {
  const IdMatrix tgt = IdMatrix::from_rows({{3, 4, 1}, {5, 1, 0}});
  const Tensor uniform = Tensor::zeros({2, 3, 7});
  CHECK(token_loss(uniform, tgt).item() == doctest::Approx(std::log(7.0)).epsilon(1e-12));
  std::vector<double> peaked(2 * 3 * 7, 0.0);
  for (std::size_t i = 0; i < tgt.ids.size(); ++i) peaked[i * 7 + static_cast<std::size_t>(tgt.ids[i])] = 100.0;
  CHECK(token_loss(Tensor({2, 3, 7}, peaked), tgt).item() < 1e-30);
  const TokenCounts acc = token_accuracy(Tensor({2, 3, 7}, peaked), tgt);
  CHECK(acc.total == 5);
  CHECK(acc.correct == 5);
  CHECK_THROWS_AS(token_loss(Tensor::zeros({1, 2, 7}), IdMatrix(1, 2)), std::invalid_argument);
}

TEST_CASE("decoder is causal") {
  const Transformer model(small_hparams());
  const ParamMap p = model.init_parameters(6);
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const IdMatrix src = random_ids(rng, 2, 4, 13);
    IdMatrix tgt = random_ids(rng, 2, 6, 13);
    const Tensor base = logits_for(model, p, src, tgt);
    const std::size_t t = uniform_index(rng, 5);
    // decoder input position j reads target j-1, so changing target t+1..
    // may only move logits at positions > t+1
    for (std::size_t c = t + 1; c < 6; ++c) tgt.at(0, c) = 1 + static_cast<int>(uniform_index(rng, 12));
    const Tensor moved = logits_for(model, p, src, tgt);
    for (std::size_t pos = 0; pos <= t + 1 && pos < 6; ++pos)
      for (std::size_t v = 0; v < 13; ++v) CHECK(std::abs(moved[pos * 13 + v] - base[pos * 13 + v]) <= 1e-12);
  }
}

TEST_CASE("appending pads leaves the loss unchanged") {
  const Transformer model(small_hparams());
  const ParamMap p = model.init_parameters(7);
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const IdMatrix src = random_ids(rng, 3, 5, 13, true);
    const IdMatrix tgt = random_ids(rng, 3, 4, 13, true);
    const double base = token_loss(logits_for(model, p, src, tgt), tgt).item();
    const IdMatrix src2 = append_pads(src, 3), tgt2 = append_pads(tgt, 2);
    const double padded = token_loss(logits_for(model, p, src2, tgt2), tgt2).item();
    CHECK(std::abs(base - padded) < 1e-12);
  }
}

TEST_CASE("full-model gradient check") {
  for (bool pre_norm : {false, true}) {
    const Transformer model(small_hparams(2, pre_norm));
    const ParamMap p = model.init_parameters(8);
    Rng rng(11);
    const IdMatrix src = random_ids(rng, 2, 5, 13, true);
    const IdMatrix tgt = random_ids(rng, 2, 5, 13, true);
    auto f = [&](const ParamMap& q) {
      ForwardContext ctx;
      const Tensor enc = model.encode(q, src, ctx);
      return token_loss(model.decode_train(q, tgt, enc, src, ctx), tgt);
    };
    const GradCheckResult r = check_gradients(f, p, 1e-5);
    INFO("worst ", r.worst_param, "[", r.worst_index, "]");
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("dropout only applies in training") {
  TransformerHParams hp = small_hparams();
  hp.dropout = 0.5;
  const Transformer model(hp);
  const ParamMap p = model.init_parameters(9);
  const IdMatrix src = IdMatrix::from_rows({{4, 5, 1}});
  ForwardContext eval;
  const Tensor a = model.encode(p, src, eval), b = model.encode(p, src, eval);
  CHECK(t2t::testing::max_abs_diff(a, b) == 0.0);
  Rng rng(1);
  ForwardContext train{true, &rng, nullptr};
  CHECK(t2t::testing::max_abs_diff(model.encode(p, src, train), a) > 0.0);
  ForwardContext no_rng{true, nullptr, nullptr};
  CHECK_THROWS(model.encode(p, src, no_rng));
}
