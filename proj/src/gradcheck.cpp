// SPDX-License-Identifier: Apache-2.0
#include "t2t/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace t2t {

ParamMap watch_all(Tape* tape, const ParamMap& params) {
  ParamMap bound;
  for (const auto& [name, value] : params) {
    bound.emplace(name, tape ? tape->watch(value) : value.detach());
  }
  return bound;
}

GradCheckResult check_gradients(const std::function<Tensor(const ParamMap&)>& f,
                                const ParamMap& params, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("check_gradients: h must be positive");

  Tape tape;
  const ParamMap bound = watch_all(&tape, params);
  const Tensor loss = f(bound);
  if (!std::isfinite(loss.item())) {
    throw std::domain_error("check_gradients: non-finite loss");
  }
  const Gradients grads = tape.backward(loss);

  auto evaluate = [&](const ParamMap& p) {
    const double v = f(p).item();
    if (!std::isfinite(v)) throw std::domain_error("check_gradients: non-finite loss");
    return v;
  };

  GradCheckResult result;
  ParamMap probe = watch_all(nullptr, params);
  for (const auto& [name, value] : params) {
    const Tensor analytic = grads.of(bound.at(name));
    std::vector<double> values(value.data().begin(), value.data().end());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + h;
      probe[name] = Tensor(value.shape(), values);
      const double up = evaluate(probe);
      values[i] = original - h;
      probe[name] = Tensor(value.shape(), values);
      const double down = evaluate(probe);
      values[i] = original;

      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i];
      if (!std::isfinite(a)) {
        throw std::domain_error("check_gradients: non-finite gradient for " + name);
      }
      const double err = std::abs(a - numeric) / std::max(1e-12, std::abs(a) + std::abs(numeric));
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_param = name;
        result.worst_index = i;
      }
    }
    probe[name] = value.detach();
  }
  return result;
}

}  // namespace t2t
