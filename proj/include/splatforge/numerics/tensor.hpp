#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace splatforge {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor;

namespace detail {

using BackwardFn = std::function<void(std::span<const double> grad_out)>;

// One recorded value on the tape. Inputs are owned so the graph stays alive
// as long as its output does.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;

  std::span<double> grad_buffer();
};

}  // namespace detail

/// Dense row-major f64 array with optional gradient tracking.
///
/// A Tensor is a cheap handle; copies share the underlying node. Values are
/// immutable once constructed, except for parameter leaves updated by a
/// ParamStore. Every op checks its output for NaN/Inf and throws
/// NumericalError rather than propagating non-finite values.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  /// Leaf that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  std::span<const double> values() const;
  double operator[](std::size_t i) const { return values()[i]; }
  /// Value of a one-element tensor.
  double item() const;

  bool requires_grad() const;
  /// Accumulated gradient; empty when nothing has flowed into this node.
  std::span<const double> grad() const;
  const char* op() const;

  /// Same values, cut from the tape.
  Tensor detach() const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Reverse pass from a scalar. Intermediate gradients are reset first, so a
/// graph may be differentiated more than once; parameter leaves accumulate.
void backward(const Tensor& loss);

namespace detail {

/// Records an op result. When no input requires a gradient the backward
/// closure is dropped and the result is a plain constant.
Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   std::initializer_list<Tensor> inputs, BackwardFn backward);
Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   const std::vector<Tensor>& inputs, BackwardFn backward);

/// Gradient buffer of an input, or an empty span if it is not tracked.
std::span<double> grad_sink(const Tensor& t);

/// Mutable access for optimizers and gradient checks.
std::vector<double>& mutable_values(Tensor& t);
std::vector<double>& mutable_grad(Tensor& t);

void require_finite(const char* op, std::span<const double> values);

}  // namespace detail

}  // namespace splatforge
