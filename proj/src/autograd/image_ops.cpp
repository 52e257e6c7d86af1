#include <algorithm>
#include <limits>

#include "detail.hpp"
#include "vdip/error.hpp"

namespace vdip::ad {

using detail::make_node;
using detail::wants;

Var correlate_valid(const Var& image, const Var& kernel) {
  detail::require_rank(image.value(), 3, "correlate_valid image");
  detail::require_rank(kernel.value(), 2, "correlate_valid kernel");
  const Tensor& img = image.value();
  const Tensor& ker = kernel.value();
  const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
  const int kh = ker.dim(0), kw = ker.dim(1);
  if (H < kh || W < kw) {
    throw DimensionError("correlate_valid: image " + shape_string(img.shape()) + " smaller than kernel " +
                         shape_string(ker.shape()));
  }
  const int Ho = H - kh + 1, Wo = W - kw + 1;
  Tensor out({C, Ho, Wo});
  for (int c = 0; c < C; ++c)
    for (int m = 0; m < Ho; ++m) {
      double* orow = &out.at(c, m, 0);
      for (int i = 0; i < kh; ++i)
        for (int j = 0; j < kw; ++j) {
          const double k = ker.at(i, j);
          const double* irow = img.ptr() + img.index(c, m + i, j);
          for (int n = 0; n < Wo; ++n) orow[n] += k * irow[n];
        }
    }
  return make_node(std::move(out), {image, kernel}, [](Node& self) {
    auto& iin = self.inputs[0];
    auto& kin = self.inputs[1];
    const Tensor& img = iin->value;
    const Tensor& ker = kin->value;
    const int C = self.grad.dim(0), Ho = self.grad.dim(1), Wo = self.grad.dim(2);
    const int kh = ker.dim(0), kw = ker.dim(1);
    if (wants(iin)) {
      Tensor& gi = iin->grad_buffer();
      for (int c = 0; c < C; ++c)
        for (int m = 0; m < Ho; ++m) {
          const double* drow = self.grad.ptr() + self.grad.index(c, m, 0);
          for (int i = 0; i < kh; ++i)
            for (int j = 0; j < kw; ++j) {
              const double k = ker.at(i, j);
              double* grow = &gi.at(c, m + i, j);
              for (int n = 0; n < Wo; ++n) grow[n] += k * drow[n];
            }
        }
    }
    if (wants(kin)) {
      Tensor& gk = kin->grad_buffer();
      for (int i = 0; i < kh; ++i)
        for (int j = 0; j < kw; ++j) {
          double acc = 0.0;
          for (int c = 0; c < C; ++c)
            for (int m = 0; m < Ho; ++m) {
              const double* drow = self.grad.ptr() + self.grad.index(c, m, 0);
              const double* irow = img.ptr() + img.index(c, m + i, j);
              for (int n = 0; n < Wo; ++n) acc += irow[n] * drow[n];
            }
          gk.at(i, j) += acc;
        }
    }
  });
}

namespace {

void check_spatial_axis(const Tensor& t, int axis, const char* op) {
  detail::require_rank(t, 3, op);
  if (axis != 1 && axis != 2) throw DimensionError(std::string(op) + ": axis must be 1 or 2");
}

// out(m) = a(m) + sign * a(m-1) along axis, 0 at the first index.
Var shifted_combine(const Var& a, int axis, double sign, const char* op) {
  check_spatial_axis(a.value(), axis, op);
  const Tensor& x = a.value();
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int dh = axis == 1 ? 1 : 0, dw = axis == 2 ? 1 : 0;
  Tensor out(x.shape());
  for (int c = 0; c < C; ++c)
    for (int h = dh; h < H; ++h)
      for (int w = dw; w < W; ++w) out.at(c, h, w) = x.at(c, h, w) + sign * x.at(c, h - dh, w - dw);
  return make_node(std::move(out), {a}, [dh, dw, sign](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    const int C = g.dim(0), H = g.dim(1), W = g.dim(2);
    for (int c = 0; c < C; ++c)
      for (int h = dh; h < H; ++h)
        for (int w = dw; w < W; ++w) {
          const double d = self.grad.at(c, h, w);
          g.at(c, h, w) += d;
          g.at(c, h - dh, w - dw) += sign * d;
        }
  });
}

}  // namespace

Var diff(const Var& a, int axis) { return shifted_combine(a, axis, -1.0, "diff"); }

Var neighbor_sum(const Var& a, int axis) { return shifted_combine(a, axis, 1.0, "neighbor_sum"); }

Var patch_channel_min(const Var& a, int radius) {
  detail::require_rank(a.value(), 3, "patch_channel_min");
  if (radius < 0) throw ParameterError("patch_channel_min: radius must be >= 0");
  const Tensor& x = a.value();
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t plane = static_cast<std::size_t>(H) * W;

  // Channel minimum with its flat source index.
  std::vector<double> cval(plane);
  std::vector<std::size_t> cidx(plane);
  for (std::size_t p = 0; p < plane; ++p) {
    cval[p] = x[p];
    cidx[p] = p;
    for (int c = 1; c < C; ++c) {
      const std::size_t q = c * plane + p;
      if (x[q] < cval[p]) {
        cval[p] = x[q];
        cidx[p] = q;
      }
    }
  }
  // Separable window minimum; clamped coordinates implement replicate borders.
  std::vector<double> hval(plane);
  std::vector<std::size_t> hidx(plane);
  for (int h = 0; h < H; ++h)
    for (int w = 0; w < W; ++w) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (int d = -radius; d <= radius; ++d) {
        const std::size_t p = static_cast<std::size_t>(h) * W + std::clamp(w + d, 0, W - 1);
        if (cval[p] < best) {
          best = cval[p];
          arg = cidx[p];
        }
      }
      hval[h * W + w] = best;
      hidx[h * W + w] = arg;
    }
  Tensor out({1, H, W});
  std::vector<std::size_t> arg_out(plane);
  for (int h = 0; h < H; ++h)
    for (int w = 0; w < W; ++w) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (int d = -radius; d <= radius; ++d) {
        const std::size_t p = static_cast<std::size_t>(std::clamp(h + d, 0, H - 1)) * W + w;
        if (hval[p] < best) {
          best = hval[p];
          arg = hidx[p];
        }
      }
      out[h * W + w] = best;
      arg_out[h * W + w] = arg;
    }
  return make_node(std::move(out), {a}, [arg_out = std::move(arg_out)](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t p = 0; p < arg_out.size(); ++p) g[arg_out[p]] += self.grad[p];
  });
}

}  // namespace vdip::ad
