// SPDX-License-Identifier: Apache-2.0
#include "t2t/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace t2t {

std::size_t num_elements(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor() : data_(std::make_shared<const std::vector<double>>(1, 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  if (num_elements(shape_) != data.size()) {
    throw std::invalid_argument("tensor: shape " + shape_string(shape_) + " needs " +
                                std::to_string(num_elements(shape_)) + " values, got " +
                                std::to_string(data.size()));
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::zeros(const Shape& shape) { return full(shape, 0.0); }
Tensor Tensor::ones(const Shape& shape) { return full(shape, 1.0); }

Tensor Tensor::full(const Shape& shape, double value) {
  return Tensor(shape, std::vector<double>(num_elements(shape), value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

double Tensor::item() const {
  if (size() != 1) {
    throw std::logic_error("item() on tensor of shape " + shape_string(shape_));
  }
  return (*data_)[0];
}

Tensor Tensor::detach() const {
  Tensor out = *this;
  out.tape_ = nullptr;
  out.node_ = -1;
  return out;
}

Tensor Tensor::with_shape(Shape shape) const {
  if (num_elements(shape) != size()) {
    throw std::invalid_argument("with_shape: cannot view " + shape_string(shape_) + " as " +
                                shape_string(shape));
  }
  Tensor out = detach();
  out.shape_ = std::move(shape);
  return out;
}

Tensor Gradients::of(const Tensor& watched) const {
  if (watched.tape() != tape_ || watched.node() < 0 ||
      static_cast<std::size_t>(watched.node()) >= leaf_grads_.size()) {
    throw std::invalid_argument("gradients: tensor is not on this tape");
  }
  const auto& g = leaf_grads_[watched.node()];
  if (!g) return Tensor::zeros(watched.shape());
  return Tensor(watched.shape(), *g);
}

bool Gradients::contains(const Tensor& watched) const {
  return watched.tape() == tape_ && watched.node() >= 0 &&
         static_cast<std::size_t>(watched.node()) < leaf_grads_.size() &&
         leaf_grads_[watched.node()] != nullptr;
}

Tensor Tape::watch(const Tensor& value) {
  Tensor out = value.detach();
  out.tape_ = this;
  out.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{value.shape(), {}, {}, true});
  return out;
}

Tensor Tape::record(Shape shape, std::vector<double> value,
                    std::vector<const Tensor*> inputs, BackwardFn backward) {
  Tensor out(std::move(shape), std::move(value));
  Node node;
  node.shape = out.shape();
  node.inputs.reserve(inputs.size());
  for (const Tensor* in : inputs) {
    if (in->tracked() && in->tape() != this) {
      throw std::logic_error("tape: op mixes tensors from different tapes");
    }
    node.inputs.push_back(in->tracked() ? in->node() : -1);
  }
  node.backward = std::move(backward);
  out.tape_ = this;
  out.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(std::move(node));
  return out;
}

namespace {

class BufferSink : public GradSink {
 public:
  BufferSink(std::vector<std::vector<double>>& grads, const std::vector<int>& inputs,
             const std::vector<Shape>& shapes)
      : grads_(grads), inputs_(inputs), shapes_(shapes) {}

  std::span<double> input(std::size_t k) override {
    const int id = inputs_.at(k);
    if (id < 0) return {};
    auto& g = grads_[id];
    if (g.empty()) g.assign(num_elements(shapes_[id]), 0.0);
    return g;
  }

 private:
  std::vector<std::vector<double>>& grads_;
  const std::vector<int>& inputs_;
  const std::vector<Shape>& shapes_;
};

}  // namespace

Gradients Tape::backward(const Tensor& loss) {
  if (loss.tape() != this || loss.node() < 0) {
    throw std::invalid_argument("backward: loss is not on this tape");
  }
  if (loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_string(loss.shape()));
  }
  std::vector<Shape> shapes;
  shapes.reserve(nodes_.size());
  for (const auto& n : nodes_) shapes.push_back(n.shape);

  std::vector<std::vector<double>> grads(nodes_.size());
  grads[loss.node()] = {1.0};

  Gradients result;
  result.tape_ = this;
  result.leaf_grads_.resize(nodes_.size());

  for (int i = loss.node(); i >= 0; --i) {
    if (grads[i].empty()) continue;
    Node& node = nodes_[i];
    if (node.leaf) {
      result.leaf_grads_[i] = std::make_shared<std::vector<double>>(std::move(grads[i]));
      continue;
    }
    BufferSink sink(grads, node.inputs, shapes);
    node.backward(grads[i], sink);
    // intermediates are not needed once propagated
    std::vector<double>().swap(grads[i]);
  }
  return result;
}

}  // namespace t2t
