#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "detail.hpp"
#include "vdip/error.hpp"

namespace vdip::ad {

using detail::make_node;
using detail::wants;

Tensor& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Tensor::zeros_like(value);
  if (grad.shape() != value.shape()) grad = Tensor::zeros_like(value);
  return grad;
}

Tensor Var::grad() const {
  if (node_->grad.empty()) return Tensor::zeros_like(node_->value);
  return node_->grad;
}

void Var::backward() const {
  if (node_->value.size() != 1) {
    throw DimensionError("backward() without a seed needs a single-element output, got " +
                         shape_string(node_->value.shape()));
  }
  backward(Tensor(node_->value.shape(), 1.0));
}

void Var::backward(const Tensor& seed) const {
  require_same_shape(node_->value, seed, "backward seed");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order of the sub-graph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buffer() += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

Var Var::detach() const { return constant(node_->value); }

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var parameter(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

double scalar(const Var& v) {
  if (v.size() != 1) throw DimensionError("scalar() on " + shape_string(v.shape()));
  return v.value()[0];
}

namespace detail {

Var make_node(Tensor value, const std::vector<Var>& inputs, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const Var& in : inputs) n->requires_grad = n->requires_grad || in.requires_grad();
  if (n->requires_grad) {
    n->inputs.reserve(inputs.size());
    for (const Var& in : inputs) n->inputs.push_back(in.shared());
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

void require_rank(const Tensor& t, int rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
  }
}

}  // namespace detail

namespace {

template <typename F, typename G>
Var unary(const Var& a, F f, G dfdx) {
  Tensor out = a.value();
  for (double& v : out.data()) v = f(v);
  return make_node(std::move(out), {a}, [dfdx](Node& self) {
    auto& in = self.inputs[0];
    Tensor& g = in->grad_buffer();
    const std::size_t n = g.size();
    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * dfdx(in->value[i], self.value[i]);
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  return make_node(a.value() + b.value(), {a, b}, [](Node& self) {
    for (auto& in : self.inputs)
      if (wants(in)) in->grad_buffer() += self.grad;
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  return make_node(a.value() - b.value(), {a, b}, [](Node& self) {
    if (wants(self.inputs[0])) self.inputs[0]->grad_buffer() += self.grad;
    if (wants(self.inputs[1])) self.inputs[1]->grad_buffer() -= self.grad;
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    auto& x = self.inputs[0];
    auto& y = self.inputs[1];
    const std::size_t n = self.grad.size();
    if (wants(x)) {
      Tensor& g = x->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * y->value[i];
    }
    if (wants(y)) {
      Tensor& g = y->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * x->value[i];
    }
  });
}

Var scale(const Var& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var log(const Var& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt_safe(const Var& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? std::sqrt(x) : 0.0; },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var clamp_min(const Var& a, double lo) {
  return unary(
      a, [lo](double x) { return std::max(x, lo); },
      [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

Var sigmoid(const Var& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Var relu6(const Var& a) {
  return unary(
      a, [](double x) { return std::clamp(x, 0.0, 6.0); },
      [](double x, double) { return (x > 0.0 && x < 6.0) ? 1.0 : 0.0; });
}

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator*(const Var& a, const Var& b) { return mul(a, b); }

Var sum(const Var& a) {
  return make_node(Tensor(Shape{}, a.value().sum()), {a}, [](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    const double s = self.grad[0];
    for (double& v : g.data()) v += s;
  });
}

Var dot(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.value()[i] * b.value()[i];
  return make_node(Tensor(Shape{}, acc), {a, b}, [](Node& self) {
    const double s = self.grad[0];
    auto& x = self.inputs[0];
    auto& y = self.inputs[1];
    if (wants(x)) {
      Tensor& g = x->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * y->value[i];
    }
    if (wants(y)) {
      Tensor& g = y->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * x->value[i];
    }
  });
}

Var reshape(const Var& a, Shape shape) {
  return make_node(a.value().reshaped(std::move(shape)), {a}, [](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var slice_channels(const Var& a, int begin, int end) {
  detail::require_rank(a.value(), 3, "slice_channels");
  const int C = a.value().dim(0);
  if (begin < 0 || end > C || begin >= end) {
    throw DimensionError("slice_channels: invalid range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") for " + std::to_string(C) + " channels");
  }
  const std::size_t plane = static_cast<std::size_t>(a.value().dim(1)) * a.value().dim(2);
  Tensor out({end - begin, a.value().dim(1), a.value().dim(2)});
  std::copy_n(a.value().ptr() + begin * plane, out.size(), out.ptr());
  return make_node(std::move(out), {a}, [begin, plane](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    double* dst = g.ptr() + begin * plane;
    for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += self.grad[i];
  });
}

Var center_crop(const Var& a, int height, int width) {
  detail::require_rank(a.value(), 3, "center_crop");
  const int top = (a.value().dim(1) - height) / 2;
  const int left = (a.value().dim(2) - width) / 2;
  return make_node(vdip::crop(a.value(), top, left, height, width), {a},
                   [top, left](Node& self) {
                     Tensor& g = self.inputs[0]->grad_buffer();
                     const int C = self.grad.dim(0), H = self.grad.dim(1), W = self.grad.dim(2);
                     for (int c = 0; c < C; ++c)
                       for (int h = 0; h < H; ++h)
                         for (int w = 0; w < W; ++w) g.at(c, top + h, left + w) += self.grad.at(c, h, w);
                   });
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  int H = parts[0].value().dim(1), W = parts[0].value().dim(2);
  for (const Var& p : parts) {
    detail::require_rank(p.value(), 3, "concat_channels");
    H = std::min(H, p.value().dim(1));
    W = std::min(W, p.value().dim(2));
  }
  std::vector<Var> cropped;
  cropped.reserve(parts.size());
  int C = 0;
  for (const Var& p : parts) {
    cropped.push_back(p.value().dim(1) == H && p.value().dim(2) == W ? p : center_crop(p, H, W));
    C += p.value().dim(0);
  }
  Tensor out({C, H, W});
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : cropped) {
    offsets.push_back(off);
    std::copy_n(p.value().ptr(), p.size(), out.ptr() + off);
    off += p.size();
  }
  return make_node(std::move(out), cropped, [offsets](Node& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      auto& in = self.inputs[k];
      if (!wants(in)) continue;
      Tensor& g = in->grad_buffer();
      const double* src = self.grad.ptr() + offsets[k];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
    }
  });
}

}  // namespace vdip::ad
