// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace t2t {

using Shape = std::vector<std::size_t>;

std::size_t num_elements(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;

// Dense row-major array of doubles. Values are immutable and shared between
// copies; a tensor may additionally be bound to a node on a Tape.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(const Shape& shape);
  static Tensor ones(const Shape& shape);
  static Tensor full(const Shape& shape, double value);
  static Tensor scalar(double value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_->size(); }

  std::span<const double> data() const { return *data_; }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  // Value of a single-element tensor.
  double item() const;

  Tape* tape() const { return tape_; }
  int node() const { return node_; }
  bool tracked() const { return tape_ != nullptr; }

  // Same values, no tape binding.
  Tensor detach() const;

  // Copy of the values with a different shape of equal element count.
  // Not recorded; use ops::reshape for differentiable reshapes.
  Tensor with_shape(Shape shape) const;

 private:
  friend class Tape;

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Gives a backward rule writable access to the gradient buffers of its
// inputs. An input that is not tracked yields an empty span.
class GradSink {
 public:
  virtual ~GradSink() = default;
  virtual std::span<double> input(std::size_t k) = 0;
};

using BackwardFn =
    std::function<void(std::span<const double> grad_out, GradSink& sink)>;

class Gradients {
 public:
  // Gradient of the loss w.r.t. a tensor watched on the tape. Leaves the
  // loss does not depend on get zeros.
  Tensor of(const Tensor& watched) const;
  bool contains(const Tensor& watched) const;

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<std::shared_ptr<std::vector<double>>> leaf_grads_;
};

// Append-only record of primitive operations for reverse-mode
// differentiation. Confined to one thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a leaf (a parameter or input we want gradients for).
  Tensor watch(const Tensor& value);

  // Used by primitive ops. Inputs that are not tracked are kept as
  // constants; the rule is only invoked when the output receives gradient.
  Tensor record(Shape shape, std::vector<double> value,
                std::vector<const Tensor*> inputs, BackwardFn backward);

  Gradients backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Shape shape;
    std::vector<int> inputs;
    BackwardFn backward;
    bool leaf = false;
  };
  std::vector<Node> nodes_;
};

}  // namespace t2t
