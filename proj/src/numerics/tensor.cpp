#include "splatforge/numerics/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "splatforge/errors.hpp"

namespace splatforge {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

std::span<double> Node::grad_buffer() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

void require_finite(const char* op, std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite value produced by ") + op);
  }
}

namespace {

Tensor make_impl(const char* op, Shape shape, std::vector<double> value, const Tensor* begin,
                 const Tensor* end, BackwardFn backward) {
  if (shape_numel(shape) != value.size()) {
    throw ValidationError(std::string(op) + ": shape " + shape_string(shape) + " does not match " +
                          std::to_string(value.size()) + " values");
  }
  require_finite(op, value);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  node->is_leaf = false;
  bool tracked = false;
  for (const Tensor* t = begin; t != end; ++t) tracked = tracked || (t->defined() && t->requires_grad());
  if (tracked) {
    node->requires_grad = true;
    for (const Tensor* t = begin; t != end; ++t) {
      if (t->defined() && t->requires_grad()) node->inputs.push_back(t->node());
    }
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

}  // namespace

Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   std::initializer_list<Tensor> inputs, BackwardFn backward) {
  return make_impl(op, std::move(shape), std::move(value), inputs.begin(), inputs.end(),
                   std::move(backward));
}

Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   const std::vector<Tensor>& inputs, BackwardFn backward) {
  return make_impl(op, std::move(shape), std::move(value), inputs.data(),
                   inputs.data() + inputs.size(), std::move(backward));
}

std::span<double> grad_sink(const Tensor& t) {
  if (!t.defined() || !t.requires_grad()) return {};
  return t.node()->grad_buffer();
}

std::vector<double>& mutable_values(Tensor& t) { return t.node()->value; }
std::vector<double>& mutable_grad(Tensor& t) {
  t.node()->grad_buffer();
  return t.node()->grad;
}

}  // namespace detail

namespace {

Tensor leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ValidationError("tensor shape " + shape_string(shape) + " does not match " +
                          std::to_string(values.size()) + " values");
  }
  detail::require_finite("constant", values);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

}  // namespace

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return leaf(std::move(shape), std::move(values), false);
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  std::size_t n = shape_numel(shape);
  return leaf(std::move(shape), std::vector<double>(n, value), false);
}

Tensor Tensor::scalar(double value) { return leaf({}, {value}, false); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  return leaf(std::move(shape), std::move(values), true);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    throw ValidationError("axis " + std::to_string(axis) + " out of range for shape " +
                          shape_string(node_->shape));
  }
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }
std::span<const double> Tensor::values() const { return node_->value; }

double Tensor::item() const {
  if (numel() != 1) throw ValidationError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
std::span<const double> Tensor::grad() const { return node_->grad; }
const char* Tensor::op() const { return node_->op; }

Tensor Tensor::detach() const { return Tensor::constant(shape(), node_->value); }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ValidationError("backward needs a scalar loss, got shape " +
                          (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (inputs before outputs).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* node : order) {
    if (!node->is_leaf) node->grad.assign(node->value.size(), 0.0);
  }
  loss.node()->grad_buffer()[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->backward) continue;
    node->backward(node->grad);
    for (const auto& input : node->inputs) {
      for (double g : input->grad) {
        if (!std::isfinite(g)) {
          throw NumericalError(std::string("non-finite gradient during backward of ") + node->op);
        }
      }
    }
  }
}

}  // namespace splatforge
