// SPDX-License-Identifier: Apache-2.0
#include "t2t/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace t2t::ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// Records on the tape of the first tracked input, or returns a constant.
Tensor finish(Shape shape, std::vector<double> value, std::vector<const Tensor*> inputs,
              BackwardFn backward) {
  Tape* tape = nullptr;
  for (const Tensor* in : inputs) {
    if (in->tracked()) {
      tape = in->tape();
      break;
    }
  }
  if (!tape) return Tensor(std::move(shape), std::move(value));
  return tape->record(std::move(shape), std::move(value), std::move(inputs), std::move(backward));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                                " vs " + shape_string(b.shape()));
  }
}

std::vector<double> copy_values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  auto mismatch = [&] {
    return std::invalid_argument("matmul: incompatible shapes " + shape_string(a.shape()) +
                                 " and " + shape_string(b.shape()));
  };
  if (a.rank() < 2 || b.rank() < 2) throw mismatch();
  const std::size_t m = a.dim(a.rank() - 2);
  const std::size_t k = a.dim(a.rank() - 1);
  if (b.dim(b.rank() - 2) != k) throw mismatch();
  const std::size_t n = b.dim(b.rank() - 1);

  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(n);

  if (b.rank() == 2) {
    // Fold all leading dims of `a` into rows.
    const std::size_t rows = a.size() / k;
    std::vector<double> out(rows * n);
    MutMap(out.data(), rows, n).noalias() = ConstMap(a.data().data(), rows, k) *
                                            ConstMap(b.data().data(), k, n);
    return finish(out_shape, std::move(out), {&a, &b},
                  [a = a.detach(), b = b.detach(), rows, k, n](std::span<const double> g,
                                                               GradSink& sink) {
                    ConstMap dc(g.data(), rows, n);
                    if (auto da = sink.input(0); !da.empty()) {
                      MutMap(da.data(), rows, k).noalias() +=
                          dc * ConstMap(b.data().data(), k, n).transpose();
                    }
                    if (auto db = sink.input(1); !db.empty()) {
                      MutMap(db.data(), k, n).noalias() +=
                          ConstMap(a.data().data(), rows, k).transpose() * dc;
                    }
                  });
  }

  if (a.rank() != b.rank() ||
      !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin())) {
    throw mismatch();
  }
  const std::size_t batch = a.size() / (m * k);
  std::vector<double> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    MutMap(out.data() + i * m * n, m, n).noalias() =
        ConstMap(a.data().data() + i * m * k, m, k) * ConstMap(b.data().data() + i * k * n, k, n);
  }
  return finish(out_shape, std::move(out), {&a, &b},
                [a = a.detach(), b = b.detach(), batch, m, k, n](std::span<const double> g,
                                                                 GradSink& sink) {
                  auto da = sink.input(0);
                  auto db = sink.input(1);
                  for (std::size_t i = 0; i < batch; ++i) {
                    ConstMap dc(g.data() + i * m * n, m, n);
                    if (!da.empty()) {
                      MutMap(da.data() + i * m * k, m, k).noalias() +=
                          dc * ConstMap(b.data().data() + i * k * n, k, n).transpose();
                    }
                    if (!db.empty()) {
                      MutMap(db.data() + i * k * n, k, n).noalias() +=
                          ConstMap(a.data().data() + i * m * k, m, k).transpose() * dc;
                    }
                  }
                });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() < 2) {
    throw std::invalid_argument("transpose: rank " + std::to_string(a.rank()) + " < 2");
  }
  const std::size_t r = a.dim(a.rank() - 2);
  const std::size_t c = a.dim(a.rank() - 1);
  const std::size_t batch = a.size() / (r * c);
  Shape shape = a.shape();
  std::swap(shape[shape.size() - 2], shape[shape.size() - 1]);

  auto swap_last = [batch](std::span<const double> src, std::span<double> dst, std::size_t rows,
                           std::size_t cols, bool accumulate) {
    for (std::size_t b = 0; b < batch; ++b) {
      const double* s = src.data() + b * rows * cols;
      double* d = dst.data() + b * rows * cols;
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
          if (accumulate) {
            d[j * rows + i] += s[i * cols + j];
          } else {
            d[j * rows + i] = s[i * cols + j];
          }
        }
      }
    }
  };
  std::vector<double> out(a.size());
  swap_last(a.data(), out, r, c, false);
  return finish(shape, std::move(out), {&a},
                [swap_last, r, c](std::span<const double> g, GradSink& sink) {
                  if (auto da = sink.input(0); !da.empty()) swap_last(g, da, c, r, true);
                });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
  const std::size_t rank = a.rank();
  std::vector<bool> seen(rank, false);
  if (axes.size() != rank) {
    throw std::invalid_argument("permute: need " + std::to_string(rank) + " axes");
  }
  for (std::size_t ax : axes) {
    if (ax >= rank || seen[ax]) throw std::invalid_argument("permute: invalid axis list");
    seen[ax] = true;
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = a.dim(axes[i]);

  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * a.dim(i);
  // Source offset for each output element, computed once and shared with backward.
  auto gather = std::make_shared<std::vector<std::size_t>>(a.size());
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t o = 0; o < a.size(); ++o) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < rank; ++i) off += idx[i] * in_strides[axes[i]];
    (*gather)[o] = off;
    for (std::size_t i = rank; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<double> out(a.size());
  for (std::size_t o = 0; o < out.size(); ++o) out[o] = a[(*gather)[o]];
  return finish(out_shape, std::move(out), {&a}, [gather](std::span<const double> g, GradSink& sink) {
    if (auto da = sink.input(0); !da.empty()) {
      for (std::size_t o = 0; o < g.size(); ++o) da[(*gather)[o]] += g[o];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (num_elements(shape) != a.size()) {
    throw std::invalid_argument("reshape: cannot reshape " + shape_string(a.shape()) + " to " +
                                shape_string(shape));
  }
  return finish(std::move(shape), copy_values(a), {&a}, [](std::span<const double> g, GradSink& sink) {
    if (auto da = sink.input(0); !da.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    }
  });
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  if (shape.size() < a.rank() || !std::equal(a.shape().begin(), a.shape().end(),
                                             shape.end() - static_cast<long>(a.rank()))) {
    throw std::invalid_argument("broadcast_to: " + shape_string(a.shape()) +
                                " is not a suffix of " + shape_string(shape));
  }
  const std::size_t block = a.size();
  const std::size_t repeats = num_elements(shape) / block;
  std::vector<double> out;
  out.reserve(block * repeats);
  for (std::size_t r = 0; r < repeats; ++r) out.insert(out.end(), a.data().begin(), a.data().end());
  return finish(shape, std::move(out), {&a},
                [block, repeats](std::span<const double> g, GradSink& sink) {
                  if (auto da = sink.input(0); !da.empty()) {
                    for (std::size_t r = 0; r < repeats; ++r) {
                      for (std::size_t i = 0; i < block; ++i) da[i] += g[r * block + i];
                    }
                  }
                });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return finish(a.shape(), std::move(out), {&a, &b}, [](std::span<const double> g, GradSink& sink) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto d = sink.input(k); !d.empty()) {
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return finish(a.shape(), std::move(out), {&a, &b}, [](std::span<const double> g, GradSink& sink) {
    if (auto da = sink.input(0); !da.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    }
    if (auto db = sink.input(1); !db.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return finish(a.shape(), std::move(out), {&a, &b},
                [a = a.detach(), b = b.detach()](std::span<const double> g, GradSink& sink) {
                  if (auto da = sink.input(0); !da.empty()) {
                    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * b[i];
                  }
                  if (auto db = sink.input(1); !db.empty()) {
                    for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * a[i];
                  }
                });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return finish(a.shape(), std::move(out), {&a}, [factor](std::span<const double> g, GradSink& sink) {
    if (auto da = sink.input(0); !da.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * factor;
    }
  });
}

Tensor add_scalar(const Tensor& a, double value) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + value;
  return finish(a.shape(), std::move(out), {&a}, [](std::span<const double> g, GradSink& sink) {
    if (auto da = sink.input(0); !da.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    }
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
  return finish(a.shape(), std::move(out), {&a},
                [a = a.detach()](std::span<const double> g, GradSink& sink) {
                  if (auto da = sink.input(0); !da.empty()) {
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      if (a[i] > 0.0) da[i] += g[i];
                    }
                  }
                });
}

Tensor tanh(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a[i]);
  auto y = std::make_shared<const std::vector<double>>(out);
  return finish(a.shape(), std::move(out), {&a}, [y](std::span<const double> g, GradSink& sink) {
    if (auto da = sink.input(0); !da.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * (1.0 - (*y)[i] * (*y)[i]);
    }
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw std::out_of_range("softmax: axis " + std::to_string(axis) + " out of range for shape " +
                            shape_string(x.shape()));
  }
  const AxisSplit s = split_at(x.shape(), axis);
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      double peak = x[base];
      for (std::size_t j = 1; j < s.extent; ++j) peak = std::max(peak, x[base + j * s.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < s.extent; ++j) {
        const double e = std::exp(x[base + j * s.inner] - peak);
        out[base + j * s.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < s.extent; ++j) out[base + j * s.inner] /= total;
    }
  }
  auto y = std::make_shared<const std::vector<double>>(out);
  return finish(x.shape(), std::move(out), {&x}, [y, s](std::span<const double> g, GradSink& sink) {
    auto dx = sink.input(0);
    if (dx.empty()) return;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.extent * s.inner + i;
        double dot = 0.0;
        for (std::size_t j = 0; j < s.extent; ++j) {
          const std::size_t p = base + j * s.inner;
          dot += g[p] * (*y)[p];
        }
        for (std::size_t j = 0; j < s.extent; ++j) {
          const std::size_t p = base + j * s.inner;
          dx[p] += (*y)[p] * (g[p] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw std::out_of_range("log_softmax: axis " + std::to_string(axis) +
                            " out of range for shape " + shape_string(x.shape()));
  }
  const AxisSplit s = split_at(x.shape(), axis);
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      double peak = x[base];
      for (std::size_t j = 1; j < s.extent; ++j) peak = std::max(peak, x[base + j * s.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < s.extent; ++j) total += std::exp(x[base + j * s.inner] - peak);
      const double log_z = peak + std::log(total);
      for (std::size_t j = 0; j < s.extent; ++j) {
        out[base + j * s.inner] = x[base + j * s.inner] - log_z;
      }
    }
  }
  auto y = std::make_shared<const std::vector<double>>(out);
  return finish(x.shape(), std::move(out), {&x}, [y, s](std::span<const double> g, GradSink& sink) {
    auto dx = sink.input(0);
    if (dx.empty()) return;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.extent * s.inner + i;
        double total = 0.0;
        for (std::size_t j = 0; j < s.extent; ++j) total += g[base + j * s.inner];
        for (std::size_t j = 0; j < s.extent; ++j) {
          const std::size_t p = base + j * s.inner;
          dx[p] += g[p] - std::exp((*y)[p]) * total;
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("layer_norm: epsilon must be positive");
  if (x.rank() == 0) throw std::invalid_argument("layer_norm: scalar input");
  const std::size_t d = x.dim(x.rank() - 1);
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw std::invalid_argument("layer_norm: gain/bias " + shape_string(gain.shape()) + "/" +
                                shape_string(bias.shape()) + " do not match last dim of " +
                                shape_string(x.shape()));
  }
  const std::size_t rows = x.size() / d;
  auto normed = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.data().data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + epsilon);
    (*inv_std)[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (row[j] - mu) * inv;
      (*normed)[r * d + j] = xh;
      out[r * d + j] = gain[j] * xh + bias[j];
    }
  }
  return finish(x.shape(), std::move(out), {&x, &gain, &bias},
                [normed, inv_std, gain = gain.detach(), rows, d](std::span<const double> g,
                                                                 GradSink& sink) {
                  const auto& xh = *normed;
                  if (auto dg = sink.input(1); !dg.empty()) {
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t j = 0; j < d; ++j) dg[j] += g[r * d + j] * xh[r * d + j];
                    }
                  }
                  if (auto db = sink.input(2); !db.empty()) {
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t j = 0; j < d; ++j) db[j] += g[r * d + j];
                    }
                  }
                  auto dx = sink.input(0);
                  if (dx.empty()) return;
                  const double inv_d = 1.0 / static_cast<double>(d);
                  for (std::size_t r = 0; r < rows; ++r) {
                    double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                      const double dxh = g[r * d + j] * gain[j];
                      mean_dxh += dxh;
                      mean_dxh_xh += dxh * xh[r * d + j];
                    }
                    mean_dxh *= inv_d;
                    mean_dxh_xh *= inv_d;
                    for (std::size_t j = 0; j < d; ++j) {
                      const double dxh = g[r * d + j] * gain[j];
                      dx[r * d + j] +=
                          (*inv_std)[r] * (dxh - mean_dxh - xh[r * d + j] * mean_dxh_xh);
                    }
                  }
                });
}

Tensor dropout(const Tensor& x, double keep_prob, std::mt19937_64& rng) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw std::invalid_argument("dropout: keep_prob must be in (0, 1]");
  }
  if (keep_prob == 1.0) return x;
  auto mask = std::make_shared<std::vector<double>>(x.size());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = uniform01(rng) < keep_prob ? 1.0 / keep_prob : 0.0;
    out[i] = x[i] * (*mask)[i];
  }
  return finish(x.shape(), std::move(out), {&x}, [mask](std::span<const double> g, GradSink& sink) {
    if (auto dx = sink.input(0); !dx.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (*mask)[i];
    }
  });
}

Tensor embedding(const Tensor& table, std::span<const int> ids, const Shape& ids_shape) {
  if (table.rank() != 2) throw std::invalid_argument("embedding: table must be [V, d]");
  if (num_elements(ids_shape) != ids.size()) {
    throw std::invalid_argument("embedding: ids do not match shape " + shape_string(ids_shape));
  }
  const std::size_t vocab = table.dim(0);
  const std::size_t d = table.dim(1);
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw std::out_of_range("embedding: id " + std::to_string(id) + " out of range for vocab " +
                              std::to_string(vocab));
    }
  }
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(table.data().begin() + static_cast<long>(ids[i] * d), d, out.begin() + static_cast<long>(i * d));
  }
  Shape shape = ids_shape;
  shape.push_back(d);
  auto kept = std::make_shared<const std::vector<int>>(ids.begin(), ids.end());
  return finish(shape, std::move(out), {&table}, [kept, d](std::span<const double> g, GradSink& sink) {
    if (auto dt = sink.input(0); !dt.empty()) {
      for (std::size_t i = 0; i < kept->size(); ++i) {
        const std::size_t row = static_cast<std::size_t>((*kept)[i]) * d;
        for (std::size_t j = 0; j < d; ++j) dt[row + j] += g[i * d + j];
      }
    }
  });
}

Tensor pick(const Tensor& x, std::span<const int> ids) {
  if (x.rank() == 0) throw std::invalid_argument("pick: scalar input");
  const std::size_t v = x.dim(x.rank() - 1);
  const std::size_t rows = x.size() / v;
  if (ids.size() != rows) {
    throw std::invalid_argument("pick: " + std::to_string(ids.size()) + " ids for " +
                                std::to_string(rows) + " rows");
  }
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= v) {
      throw std::out_of_range("pick: id " + std::to_string(ids[r]) + " out of range");
    }
    out[r] = x[r * v + static_cast<std::size_t>(ids[r])];
  }
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  auto kept = std::make_shared<const std::vector<int>>(ids.begin(), ids.end());
  return finish(shape, std::move(out), {&x}, [kept, v](std::span<const double> g, GradSink& sink) {
    if (auto dx = sink.input(0); !dx.empty()) {
      for (std::size_t r = 0; r < g.size(); ++r) dx[r * v + static_cast<std::size_t>((*kept)[r])] += g[r];
    }
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return finish({}, {total}, {&x}, [](std::span<const double> g, GradSink& sink) {
    if (auto dx = sink.input(0); !dx.empty()) {
      for (double& v : dx) v += g[0];
    }
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw std::invalid_argument("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

}  // namespace t2t::ops
