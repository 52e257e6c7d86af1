#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "vdip/tensor.hpp"

// Minimal reverse-mode automatic differentiation over dense double tensors.
//
// A Var is a shared handle to a graph node. Operations record a backward
// closure on the node they create; Var::backward() walks the graph in reverse
// topological order and accumulates gradients into every node that requires
// them. Graphs are rebuilt on every evaluation and released with their Vars.
namespace vdip::ad {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node& self)> backward;

  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  /// Mutable access for in-place parameter updates. Never use on interior nodes.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  /// Gradient accumulated so far; a zero tensor if nothing has flowed here.
  Tensor grad() const;
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad = Tensor(); }

  /// Backpropagate from a scalar (single element) node with seed 1.
  void backward() const;
  /// Backpropagate with an explicit output gradient of the node's shape.
  void backward(const Tensor& seed) const;

  /// Same value, cut from the graph.
  Var detach() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Tensor value);
Var parameter(Tensor value);

double scalar(const Var& v);

// Elementwise arithmetic. Operands must have identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);
Var square(const Var& a);
Var log(const Var& a);
/// sqrt of max(x, 0); the derivative is taken as 0 where the value is 0.
Var sqrt_safe(const Var& a);
/// max(x, lo), passing gradient only where x > lo.
Var clamp_min(const Var& a, double lo);
Var sigmoid(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var relu6(const Var& a);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);

/// Sum over all elements, returned as a rank-0 tensor.
Var sum(const Var& a);
/// Sum of a ⊙ b, returned as a rank-0 tensor.
Var dot(const Var& a, const Var& b);

Var reshape(const Var& a, Shape shape);

// Channel-first (C x H x W) structural ops.
Var slice_channels(const Var& a, int begin, int end);
/// Concatenate along channels; inputs with larger spatial extent are
/// center-cropped to the smallest height and width among the inputs.
Var concat_channels(const std::vector<Var>& parts);
Var center_crop(const Var& a, int height, int width);

// Network layers.
/// 2-D convolution (cross-correlation) with reflection padding of (k-1)/2.
/// weight: Cout x Cin x k x k, bias: {Cout} (may be undefined).
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride);
/// Batch normalisation with statistics of the single input sample (training mode).
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
/// Bilinear x2 upsampling, half-pixel centers (align_corners = false).
Var upsample_bilinear2x(const Var& x);
/// y = W x + b for a vector x of length n and W of shape m x n.
Var linear(const Var& x, const Var& weight, const Var& bias);
/// Softmax over all elements.
Var softmax(const Var& x);

// Image-domain ops.
/// Valid cross-correlation of every channel of a C x H x W image with one
/// Kh x Kw kernel: out(c,m,n) = sum_ij k(i,j) img(c, m+i, n+j).
Var correlate_valid(const Var& image, const Var& kernel);
/// out(m) = a(m) - a(m-1) along spatial axis 1 (rows) or 2 (cols); 0 at m = 0.
Var diff(const Var& a, int axis);
/// out(m) = a(m) + a(m-1) along spatial axis 1 or 2; 0 at m = 0.
Var neighbor_sum(const Var& a, int axis);
/// Minimum over channels and over the (2r+1)^2 window with replicate borders.
/// Output has a single channel. Gradient routes to the arg-min element.
Var patch_channel_min(const Var& a, int radius);

}  // namespace vdip::ad
