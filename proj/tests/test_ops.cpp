// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "t2t/gradcheck.hpp"
#include "t2t/ops.hpp"
#include "test_util.hpp"

using namespace t2t;
using t2t::testing::random_tensor;

namespace {

constexpr double kOpTolerance = 1e-6;

// Weighted sum with fixed random weights so that every output element gets
// a distinct, non-trivial upstream gradient.
Tensor weighted_sum(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  return ops::sum(ops::mul(y, random_tensor(y.shape(), rng)));
}

double check_unary(const std::function<Tensor(const Tensor&)>& op, const Shape& shape,
                   std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  ParamMap params{{"x", random_tensor(shape, rng, lo, hi)}};
  auto f = [&](const ParamMap& p) { return weighted_sum(op(p.at("x")), seed + 1); };
  return check_gradients(f, params, 1e-6).max_relative_error;
}

// Plain triple loop, independent of the library kernel.
std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t t = 0; t < k; ++t) c[i * n + j] += a[i * k + t] * b[t * n + j];
  return c;
}

}  // namespace

TEST_CASE("matmul matches a naive product") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + uniform_index(rng, 6), k = 1 + uniform_index(rng, 6),
                      n = 1 + uniform_index(rng, 6);
    const Tensor a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng);
    const Tensor c = ops::matmul(a, b);
    const auto expect = naive_matmul(a, b);
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(c[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(ops::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), std::invalid_argument);
}

TEST_CASE("batched matmul folds leading dims") {
  Rng rng(4);
  const Tensor a = random_tensor({2, 3, 4}, rng), b = random_tensor({4, 5}, rng);
  const Tensor c = ops::matmul(a, b);
  CHECK(c.shape() == Shape{2, 3, 5});
  const Tensor a1({3, 4}, std::vector<double>(a.data().begin() + 12, a.data().end()));
  const auto expect = naive_matmul(a1, b);
  for (std::size_t i = 0; i < expect.size(); ++i) CHECK(c[15 + i] == doctest::Approx(expect[i]));
}

TEST_CASE("permute and transpose move elements") {
  const Tensor a({2, 3}, {0, 1, 2, 3, 4, 5});
  const Tensor t = ops::transpose(a);
  CHECK(t.shape() == Shape{3, 2});
  CHECK(t[1] == 3.0);
  CHECK(t[4] == 2.0);
  const Tensor p = ops::permute(Tensor({1, 2, 3}, {0, 1, 2, 3, 4, 5}), {2, 0, 1});
  CHECK(p.shape() == Shape{3, 1, 2});
  CHECK(p[1] == 3.0);
  CHECK_THROWS(ops::permute(a, {0, 0}));
}

TEST_CASE("softmax rows are distributions") {
  Rng rng(5);
  const Tensor s = ops::softmax(random_tensor({4, 7}, rng, -30, 30), 1);
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 7; ++c) {
      CHECK(s[r * 7 + c] >= 0.0);
      total += s[r * 7 + c];
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  const Tensor ls = ops::log_softmax(Tensor({3}, {0, 0, 0}), 0);
  CHECK(ls[0] == doctest::Approx(-std::log(3.0)));
}

TEST_CASE("layer_norm normalizes the last axis") {
  const Tensor x({2, 4}, {1, 2, 3, 4, -1, 0, 0, 1});
  const Tensor y = ops::layer_norm(x, Tensor::ones({4}), Tensor::zeros({4}), 1e-12);
  double mean = 0.0, var = 0.0;
  for (int i = 0; i < 4; ++i) mean += y[i];
  for (int i = 0; i < 4; ++i) var += y[i] * y[i];
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(var / 4 == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS(ops::layer_norm(x, Tensor::ones({4}), Tensor::zeros({4}), 0.0));
}

TEST_CASE("dropout with keep_prob 1 is the identity and draws nothing") {
  Rng rng(1), untouched(1);
  const Tensor x({3}, {1, 2, 3});
  const Tensor y = ops::dropout(x, 1.0, rng);
  CHECK(y[2] == 3.0);
  CHECK(rng() == untouched());
}

TEST_CASE("dropout zeroes or rescales every element") {
  Rng rng(9);
  const Tensor y = ops::dropout(Tensor::ones({1000}), 0.8, rng);
  std::size_t zeros = 0;
  for (double v : y.data()) {
    CHECK((v == 0.0 || v == doctest::Approx(1.25)));
    zeros += v == 0.0;
  }
  CHECK(zeros > 120);
  CHECK(zeros < 280);
}

TEST_CASE("embedding and pick select rows and entries") {
  const Tensor table({3, 2}, {0, 1, 10, 11, 20, 21});
  const std::vector<int> ids{2, 0};
  const Tensor e = ops::embedding(table, ids, {2});
  CHECK(e.shape() == Shape{2, 2});
  CHECK(e[0] == 20.0);
  CHECK(e[3] == 1.0);
  const std::vector<int> bad{3};
  CHECK_THROWS_AS(ops::embedding(table, bad, {1}), std::out_of_range);
  const Tensor picked = ops::pick(table, std::vector<int>{1, 0, 1});
  CHECK(picked[0] == 1.0);
  CHECK(picked[1] == 10.0);
}

TEST_CASE("per-op gradient checks") {
  CHECK(check_unary([](const Tensor& x) { return ops::relu(x); }, {3, 4}, 11) < kOpTolerance);
  CHECK(check_unary([](const Tensor& x) { return ops::tanh(x); }, {3, 4}, 12) < kOpTolerance);
  CHECK(check_unary([](const Tensor& x) { return ops::softmax(x, 1); }, {3, 5}, 13) < kOpTolerance);
  CHECK(check_unary([](const Tensor& x) { return ops::softmax(x, 0); }, {3, 5}, 14) < kOpTolerance);
  CHECK(check_unary([](const Tensor& x) { return ops::log_softmax(x, 2); }, {2, 3, 4}, 15) < kOpTolerance);
  CHECK(check_unary([](const Tensor& x) { return ops::transpose(x); }, {2, 3, 4}, 16) < kOpTolerance);
  CHECK(check_unary([](const Tensor& x) { return ops::permute(x, {1, 2, 0}); }, {2, 3, 4}, 17) < kOpTolerance);
  CHECK(check_unary([](const Tensor& x) { return ops::reshape(x, {6, 4}); }, {2, 3, 4}, 18) < kOpTolerance);
  CHECK(check_unary([](const Tensor& x) { return ops::broadcast_to(x, {3, 2, 4}); }, {2, 4}, 19) < kOpTolerance);
  CHECK(check_unary([](const Tensor& x) { return ops::scale(x, -2.5); }, {5}, 20) < kOpTolerance);
  CHECK(check_unary([](const Tensor& x) { return ops::add_scalar(x, 3.0); }, {5}, 21) < kOpTolerance);
  CHECK(check_unary([](const Tensor& x) { return ops::mean(x); }, {2, 5}, 22) < kOpTolerance);
  CHECK(check_unary([](const Tensor& x) { return ops::pick(x, std::vector<int>{0, 3, 2}); }, {3, 4}, 23) < kOpTolerance);
}

TEST_CASE("binary and parameterised op gradient checks") {
  Rng rng(30);
  ParamMap p{{"a", random_tensor({2, 3, 4}, rng)},
             {"b", random_tensor({2, 4, 5}, rng)},
             {"w", random_tensor({4, 2}, rng)},
             {"c", random_tensor({2, 3, 4}, rng)}};
  auto mm = [](const ParamMap& q) { return weighted_sum(ops::matmul(q.at("a"), q.at("b")), 1); };
  CHECK(check_gradients(mm, p, 1e-6).max_relative_error < kOpTolerance);
  auto mm2 = [](const ParamMap& q) { return weighted_sum(ops::matmul(q.at("a"), q.at("w")), 2); };
  CHECK(check_gradients(mm2, p, 1e-6).max_relative_error < kOpTolerance);
  auto arith = [](const ParamMap& q) {
    return weighted_sum(ops::sub(ops::mul(q.at("a"), q.at("c")), ops::add(q.at("c"), q.at("a"))), 3);
  };
  CHECK(check_gradients(arith, p, 1e-6).max_relative_error < kOpTolerance);

  ParamMap ln{{"x", random_tensor({3, 6}, rng, -2, 2)},
              {"g", random_tensor({6}, rng, 0.5, 1.5)},
              {"b", random_tensor({6}, rng)}};
  auto norm = [](const ParamMap& q) {
    return weighted_sum(ops::layer_norm(q.at("x"), q.at("g"), q.at("b"), 1e-6), 4);
  };
  CHECK(check_gradients(norm, ln, 1e-6).max_relative_error < kOpTolerance);

  ParamMap emb{{"table", random_tensor({5, 3}, rng)}};
  auto lookup = [](const ParamMap& q) {
    return weighted_sum(ops::embedding(q.at("table"), std::vector<int>{4, 1, 4, 0}, {2, 2}), 5);
  };
  CHECK(check_gradients(lookup, emb, 1e-6).max_relative_error < kOpTolerance);
}

TEST_CASE("dropout gradient follows its mask") {
  Rng init(40);
  ParamMap p{{"x", random_tensor({4, 4}, init)}};
  auto f = [](const ParamMap& q) {
    Rng rng(77);  // same mask on every evaluation
    return weighted_sum(ops::dropout(q.at("x"), 0.7, rng), 6);
  };
  CHECK(check_gradients(f, p, 1e-6).max_relative_error < kOpTolerance);
}
