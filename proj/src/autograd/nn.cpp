#include <algorithm>
#include <cmath>

#include "detail.hpp"
#include "gemm.hpp"
#include "vdip/error.hpp"

namespace vdip::ad {

using detail::make_node;
using detail::reflect_index;
using detail::wants;

namespace {

struct ConvGeometry {
  int cin, h, w, cout, k, stride, pad, ho, wo;
  std::size_t out_plane() const { return static_cast<std::size_t>(ho) * wo; }
  int patch() const { return cin * k * k; }
};

// Upper bound on im2col scratch, in doubles.
constexpr std::size_t kColBudget = std::size_t{1} << 22;

int rows_per_chunk(const ConvGeometry& g) {
  const std::size_t per_row = static_cast<std::size_t>(g.patch()) * g.wo;
  return static_cast<int>(std::clamp<std::size_t>(kColBudget / std::max<std::size_t>(per_row, 1), 1,
                                                  static_cast<std::size_t>(g.ho)));
}

// Columns for output rows [r0, r1): col[(c*k + i)*k + j][(r - r0)*wo + q].
void im2col(const ConvGeometry& g, const double* x, int r0, int r1, double* col) {
  const std::size_t ncols = static_cast<std::size_t>(r1 - r0) * g.wo;
  for (int c = 0; c < g.cin; ++c) {
    const double* xc = x + static_cast<std::size_t>(c) * g.h * g.w;
    for (int i = 0; i < g.k; ++i) {
      for (int j = 0; j < g.k; ++j) {
        double* dst = col + static_cast<std::size_t>((c * g.k + i) * g.k + j) * ncols;
        for (int r = r0; r < r1; ++r) {
          const int sy = reflect_index(r * g.stride + i - g.pad, g.h);
          const double* row = xc + static_cast<std::size_t>(sy) * g.w;
          for (int q = 0; q < g.wo; ++q) *dst++ = row[reflect_index(q * g.stride + j - g.pad, g.w)];
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const double* col, int r0, int r1, double* dx) {
  const std::size_t ncols = static_cast<std::size_t>(r1 - r0) * g.wo;
  for (int c = 0; c < g.cin; ++c) {
    double* dxc = dx + static_cast<std::size_t>(c) * g.h * g.w;
    for (int i = 0; i < g.k; ++i) {
      for (int j = 0; j < g.k; ++j) {
        const double* src = col + static_cast<std::size_t>((c * g.k + i) * g.k + j) * ncols;
        for (int r = r0; r < r1; ++r) {
          const int sy = reflect_index(r * g.stride + i - g.pad, g.h);
          double* row = dxc + static_cast<std::size_t>(sy) * g.w;
          for (int q = 0; q < g.wo; ++q) row[reflect_index(q * g.stride + j - g.pad, g.w)] += *src++;
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride) {
  detail::require_rank(x.value(), 3, "conv2d input");
  detail::require_rank(weight.value(), 4, "conv2d weight");
  const Tensor& wt = weight.value();
  if (wt.dim(1) != x.value().dim(0) || wt.dim(2) != wt.dim(3) || wt.dim(2) % 2 == 0) {
    throw DimensionError("conv2d: weight " + shape_string(wt.shape()) + " incompatible with input " +
                         shape_string(x.value().shape()));
  }
  if (stride < 1) throw ParameterError("conv2d: stride must be >= 1");
  ConvGeometry g{};
  g.cin = x.value().dim(0);
  g.h = x.value().dim(1);
  g.w = x.value().dim(2);
  g.cout = wt.dim(0);
  g.k = wt.dim(2);
  g.stride = stride;
  g.pad = (g.k - 1) / 2;
  g.ho = (g.h + 2 * g.pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * g.pad - g.k) / stride + 1;
  if (bias.defined() && (bias.value().rank() != 1 || bias.value().dim(0) != g.cout)) {
    throw DimensionError("conv2d: bias shape " + shape_string(bias.value().shape()));
  }

  Tensor out({g.cout, g.ho, g.wo});
  const std::size_t plane = g.out_plane();
  const bool pointwise = g.k == 1 && g.stride == 1;
  if (pointwise) {
    detail::gemm(false, false, g.cout, static_cast<int>(plane), g.cin, 1.0,
                wt.ptr(), g.cin, x.value().ptr(), static_cast<int>(plane), 0.0, out.ptr(),
                static_cast<int>(plane));
  } else {
    const int chunk = rows_per_chunk(g);
    std::vector<double> col(static_cast<std::size_t>(g.patch()) * chunk * g.wo);
    for (int r0 = 0; r0 < g.ho; r0 += chunk) {
      const int r1 = std::min(g.ho, r0 + chunk);
      const int n = (r1 - r0) * g.wo;
      im2col(g, x.value().ptr(), r0, r1, col.data());
      detail::gemm(false, false, g.cout, n, g.patch(), 1.0, wt.ptr(),
                  g.patch(), col.data(), n, 0.0, out.ptr() + static_cast<std::size_t>(r0) * g.wo,
                  static_cast<int>(plane));
    }
  }
  if (bias.defined()) {
    for (int c = 0; c < g.cout; ++c) {
      const double b = bias.value()[c];
      double* o = out.ptr() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) o[i] += b;
    }
  }

  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_node(std::move(out), inputs, [g, pointwise](Node& self) {
    auto& xin = self.inputs[0];
    auto& win = self.inputs[1];
    const std::size_t plane = g.out_plane();
    const double* dout = self.grad.ptr();
    if (self.inputs.size() > 2 && wants(self.inputs[2])) {
      Tensor& gb = self.inputs[2]->grad_buffer();
      for (int c = 0; c < g.cout; ++c) {
        double s = 0.0;
        const double* d = dout + c * plane;
        for (std::size_t i = 0; i < plane; ++i) s += d[i];
        gb[c] += s;
      }
    }
    const bool need_w = wants(win);
    const bool need_x = wants(xin);
    if (!need_w && !need_x) return;
    if (pointwise) {
      if (need_w) {
        detail::gemm(false, true, g.cout, g.cin, static_cast<int>(plane), 1.0,
                    dout, static_cast<int>(plane), xin->value.ptr(), static_cast<int>(plane), 1.0,
                    win->grad_buffer().ptr(), g.cin);
      }
      if (need_x) {
        detail::gemm(true, false, g.cin, static_cast<int>(plane), g.cout, 1.0,
                    win->value.ptr(), g.cin, dout, static_cast<int>(plane), 1.0, xin->grad_buffer().ptr(),
                    static_cast<int>(plane));
      }
      return;
    }
    const int chunk = rows_per_chunk(g);
    std::vector<double> col(static_cast<std::size_t>(g.patch()) * chunk * g.wo);
    std::vector<double> dcol(need_x ? col.size() : 0);
    double* gw = need_w ? win->grad_buffer().ptr() : nullptr;
    double* gx = need_x ? xin->grad_buffer().ptr() : nullptr;
    for (int r0 = 0; r0 < g.ho; r0 += chunk) {
      const int r1 = std::min(g.ho, r0 + chunk);
      const int n = (r1 - r0) * g.wo;
      const double* dchunk = dout + static_cast<std::size_t>(r0) * g.wo;
      if (need_w) {
        im2col(g, xin->value.ptr(), r0, r1, col.data());
        detail::gemm(false, true, g.cout, g.patch(), n, 1.0, dchunk,
                    static_cast<int>(plane), col.data(), n, 1.0, gw, g.patch());
      }
      if (need_x) {
        detail::gemm(true, false, g.patch(), n, g.cout, 1.0, win->value.ptr(),
                    g.patch(), dchunk, static_cast<int>(plane), 0.0, dcol.data(), n);
        col2im(g, dcol.data(), r0, r1, gx);
      }
    }
  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  detail::require_rank(x.value(), 3, "batch_norm");
  const int C = x.value().dim(0);
  const std::size_t plane = static_cast<std::size_t>(x.value().dim(1)) * x.value().dim(2);
  if (gamma.value().size() != static_cast<std::size_t>(C) ||
      beta.value().size() != static_cast<std::size_t>(C)) {
    throw DimensionError("batch_norm: affine parameters do not match channel count");
  }
  Tensor out(x.value().shape());
  Tensor normalized(x.value().shape());
  std::vector<double> inv_std(C);
  for (int c = 0; c < C; ++c) {
    const double* xc = x.value().ptr() + c * plane;
    double mean = 0.0;
    for (std::size_t i = 0; i < plane; ++i) mean += xc[i];
    mean /= static_cast<double>(plane);
    double var = 0.0;
    for (std::size_t i = 0; i < plane; ++i) var += (xc[i] - mean) * (xc[i] - mean);
    var /= static_cast<double>(plane);
    inv_std[c] = 1.0 / std::sqrt(var + eps);
    double* nc = normalized.ptr() + c * plane;
    double* oc = out.ptr() + c * plane;
    const double gm = gamma.value()[c], bt = beta.value()[c];
    for (std::size_t i = 0; i < plane; ++i) {
      nc[i] = (xc[i] - mean) * inv_std[c];
      oc[i] = gm * nc[i] + bt;
    }
  }
  return make_node(std::move(out), {x, gamma, beta},
                   [normalized = std::move(normalized), inv_std = std::move(inv_std), plane](Node& self) {
                     auto& xin = self.inputs[0];
                     auto& gin = self.inputs[1];
                     auto& bin = self.inputs[2];
                     const int C = static_cast<int>(inv_std.size());
                     const double n = static_cast<double>(plane);
                     for (int c = 0; c < C; ++c) {
                       const double* d = self.grad.ptr() + c * plane;
                       const double* xh = normalized.ptr() + c * plane;
                       double sd = 0.0, sdx = 0.0;
                       for (std::size_t i = 0; i < plane; ++i) {
                         sd += d[i];
                         sdx += d[i] * xh[i];
                       }
                       if (wants(gin)) gin->grad_buffer()[c] += sdx;
                       if (wants(bin)) bin->grad_buffer()[c] += sd;
                       if (wants(xin)) {
                         double* gx = xin->grad_buffer().ptr() + c * plane;
                         const double k = gin->value[c] * inv_std[c] / n;
                         for (std::size_t i = 0; i < plane; ++i) gx[i] += k * (n * d[i] - sd - xh[i] * sdx);
                       }
                     }
                   });
}

namespace {

struct Tap {
  int i0, i1;
  double w1;  // weight of i1; weight of i0 is 1 - w1
};

std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(out);
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * (static_cast<double>(in) / out) - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(src);
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - i0};
  }
  return taps;
}

}  // namespace

Var upsample_bilinear2x(const Var& x) {
  detail::require_rank(x.value(), 3, "upsample_bilinear2x");
  const int C = x.value().dim(0), H = x.value().dim(1), W = x.value().dim(2);
  const int Ho = 2 * H, Wo = 2 * W;
  auto ty = bilinear_taps(H, Ho);
  auto tx = bilinear_taps(W, Wo);
  Tensor out({C, Ho, Wo});
  const Tensor& in = x.value();
  for (int c = 0; c < C; ++c)
    for (int yo = 0; yo < Ho; ++yo) {
      const Tap& a = ty[yo];
      for (int xo = 0; xo < Wo; ++xo) {
        const Tap& b = tx[xo];
        const double top = (1 - b.w1) * in.at(c, a.i0, b.i0) + b.w1 * in.at(c, a.i0, b.i1);
        const double bot = (1 - b.w1) * in.at(c, a.i1, b.i0) + b.w1 * in.at(c, a.i1, b.i1);
        out.at(c, yo, xo) = (1 - a.w1) * top + a.w1 * bot;
      }
    }
  return make_node(std::move(out), {x}, [ty = std::move(ty), tx = std::move(tx)](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    const int C = self.grad.dim(0), Ho = self.grad.dim(1), Wo = self.grad.dim(2);
    for (int c = 0; c < C; ++c)
      for (int yo = 0; yo < Ho; ++yo) {
        const Tap& a = ty[yo];
        for (int xo = 0; xo < Wo; ++xo) {
          const Tap& b = tx[xo];
          const double d = self.grad.at(c, yo, xo);
          g.at(c, a.i0, b.i0) += d * (1 - a.w1) * (1 - b.w1);
          g.at(c, a.i0, b.i1) += d * (1 - a.w1) * b.w1;
          g.at(c, a.i1, b.i0) += d * a.w1 * (1 - b.w1);
          g.at(c, a.i1, b.i1) += d * a.w1 * b.w1;
        }
      }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  detail::require_rank(x.value(), 1, "linear input");
  detail::require_rank(weight.value(), 2, "linear weight");
  const int m = weight.value().dim(0), n = weight.value().dim(1);
  if (x.value().dim(0) != n || bias.value().size() != static_cast<std::size_t>(m)) {
    throw DimensionError("linear: incompatible shapes " + shape_string(weight.value().shape()) + " and " +
                         shape_string(x.value().shape()));
  }
  Tensor out = bias.value();
  detail::gemv(false, m, n, 1.0, weight.value().ptr(), x.value().ptr(), 1.0, out.ptr());
  return make_node(std::move(out), {x, weight, bias}, [m, n](Node& self) {
    auto& xin = self.inputs[0];
    auto& win = self.inputs[1];
    auto& bin = self.inputs[2];
    if (wants(bin)) bin->grad_buffer() += self.grad;
    if (wants(win)) {
      detail::ger(m, n, 1.0, self.grad.ptr(), xin->value.ptr(), win->grad_buffer().ptr());
    }
    if (wants(xin)) {
      detail::gemv(true, m, n, 1.0, win->value.ptr(), self.grad.ptr(), 1.0, xin->grad_buffer().ptr());
    }
  });
}

Var softmax(const Var& x) {
  Tensor out = x.value();
  const double mx = out.max();
  double z = 0.0;
  for (double& v : out.data()) {
    v = std::exp(v - mx);
    z += v;
  }
  out *= 1.0 / z;
  return make_node(std::move(out), {x}, [](Node& self) {
    double s = 0.0;
    for (std::size_t i = 0; i < self.value.size(); ++i) s += self.grad[i] * self.value[i];
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.value[i] * (self.grad[i] - s);
  });
}

}  // namespace vdip::ad
