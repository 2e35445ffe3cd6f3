// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <string>

#include "t2t/tensor.hpp"

namespace t2t {

using ParamMap = std::map<std::string, Tensor>;

// Binds every parameter to the tape as a leaf. With a null tape the values
// are returned unbound.
ParamMap watch_all(Tape* tape, const ParamMap& params);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
};

// Compares reverse-mode gradients of `f` against central differences with
// step h. Per element the error is
//   |analytic - numeric| / max(1e-12, |analytic| + |numeric|)
// and the maximum over all parameters is reported. `f` must be
// deterministic (disable dropout).
GradCheckResult check_gradients(const std::function<Tensor(const ParamMap&)>& f,
                                const ParamMap& params, double h);

}  // namespace t2t
