#include "vdip/imaging.hpp"

#include <png.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "vdip/error.hpp"

namespace vdip {

double psnr(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "psnr");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sse += (a[i] - b[i]) * (a[i] - b[i]);
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(static_cast<double>(a.size()) / sse);
}

namespace {

constexpr int kSsimWindow = 11;

std::vector<double> gaussian_window() {
  std::vector<double> w(kSsimWindow);
  double total = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

// Valid separable filtering of one H x W plane.
std::vector<double> filter_valid(const double* x, int H, int W, const std::vector<double>& w) {
  const int k = static_cast<int>(w.size());
  const int Ho = H - k + 1, Wo = W - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(H) * Wo);
  for (int h = 0; h < H; ++h)
    for (int c = 0; c < Wo; ++c) {
      double s = 0.0;
      for (int j = 0; j < k; ++j) s += w[j] * x[h * W + c + j];
      rows[h * Wo + c] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(Ho) * Wo);
  for (int r = 0; r < Ho; ++r)
    for (int c = 0; c < Wo; ++c) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += w[i] * rows[(r + i) * Wo + c];
      out[r * Wo + c] = s;
    }
  return out;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "ssim");
  if (a.rank() != 3) throw DimensionError("ssim expects C x H x W images");
  const int C = a.dim(0), H = a.dim(1), W = a.dim(2);
  if (H < kSsimWindow || W < kSsimWindow) throw ParameterError("ssim: image smaller than the 11x11 window");
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto w = gaussian_window();
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  double total = 0.0;
  for (int c = 0; c < C; ++c) {
    const double* x = a.ptr() + c * plane;
    const double* y = b.ptr() + c * plane;
    std::vector<double> xx(plane), yy(plane), xy(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, H, W, w);
    const auto my = filter_valid(y, H, W, w);
    const auto sxx = filter_valid(xx.data(), H, W, w);
    const auto syy = filter_valid(yy.data(), H, W, w);
    const auto sxy = filter_valid(xy.data(), H, W, w);
    double acc = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cxy = sxy[i] - mx[i] * my[i];
      acc += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / C;
}

AlignedScore aligned_score(const Tensor& estimate, const Tensor& reference) {
  if (estimate.rank() != 3 || reference.rank() != 3 || estimate.dim(0) != reference.dim(0)) {
    throw DimensionError("aligned_score: incompatible images");
  }
  const int M = estimate.dim(1), N = estimate.dim(2);
  if (reference.dim(1) < M || reference.dim(2) < N) {
    throw DimensionError("aligned_score: reference smaller than estimate");
  }
  AlignedScore best;
  best.psnr = -std::numeric_limits<double>::infinity();
  for (int top = 0; top + M <= reference.dim(1); ++top)
    for (int left = 0; left + N <= reference.dim(2); ++left) {
      const double p = psnr(estimate, crop(reference, top, left, M, N));
      if (p > best.psnr) {
        best.psnr = p;
        best.dy = top;
        best.dx = left;
      }
    }
  best.ssim = ssim(estimate, crop(reference, best.dy, best.dx, M, N));
  best.dy -= (reference.dim(1) - M) / 2;
  best.dx -= (reference.dim(2) - N) / 2;
  return best;
}

Tensor normalize_kernel(const Tensor& kernel) {
  if (kernel.rank() != 2) throw DimensionError("kernel must be 2-D");
  if (kernel.min() < 0.0) throw ParameterError("kernel has negative entries");
  const double s = kernel.sum();
  if (!(s > 0.0)) throw ParameterError("kernel cannot be normalised (all zero)");
  return kernel * (1.0 / s);
}

double kernel_recovery_error(const Tensor& estimate, const Tensor& truth) {
  const Tensor a0 = normalize_kernel(estimate);
  const Tensor b0 = normalize_kernel(truth);
  const int Hc = std::max(a0.dim(0), b0.dim(0));
  const int Wc = std::max(a0.dim(1), b0.dim(1));
  auto pad = [&](const Tensor& k) {
    Tensor out({Hc, Wc});
    const int oy = (Hc - k.dim(0)) / 2, ox = (Wc - k.dim(1)) / 2;
    for (int i = 0; i < k.dim(0); ++i)
      for (int j = 0; j < k.dim(1); ++j) out.at(oy + i, ox + j) = k.at(i, j);
    return out;
  };
  const Tensor a = pad(a0), b = pad(b0);
  double energy = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) energy += a[i] * a[i] + b[i] * b[i];
  // sum_p (a(p) - b(p - d))^2 = |a|^2 + |b|^2 - 2 xcorr(d); maximise the correlation.
  double best = -std::numeric_limits<double>::infinity();
  for (int dy = -(Hc - 1); dy <= Hc - 1; ++dy)
    for (int dx = -(Wc - 1); dx <= Wc - 1; ++dx) {
      double xc = 0.0;
      for (int i = std::max(0, dy); i < std::min(Hc, Hc + dy); ++i)
        for (int j = std::max(0, dx); j < std::min(Wc, Wc + dx); ++j) xc += a.at(i, j) * b.at(i - dy, j - dx);
      best = std::max(best, xc);
    }
  return std::max(0.0, energy - 2.0 * best) / (static_cast<double>(Hc) * Wc);
}

// ---- files -------------------------------------------------------------------

Tensor load_image(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError("cannot read image " + path.string() + ": " + img.message);
  }
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int C = color ? 3 : 1;
  const int H = static_cast<int>(img.height), W = static_cast<int>(img.width);
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError("cannot decode image " + path.string() + ": " + msg);
  }
  Tensor out({C, H, W});
  for (int h = 0; h < H; ++h)
    for (int w = 0; w < W; ++w)
      for (int c = 0; c < C; ++c) out.at(c, h, w) = buf[(static_cast<std::size_t>(h) * W + w) * C + c] / 255.0;
  return out;
}

void save_image(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw DimensionError("save_image expects a 1 or 3 channel C x H x W tensor, got " +
                         shape_string(image.shape()));
  }
  const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
  std::vector<png_byte> buf(static_cast<std::size_t>(C) * H * W);
  for (int h = 0; h < H; ++h)
    for (int w = 0; w < W; ++w)
      for (int c = 0; c < C; ++c) {
        const double v = std::clamp(image.at(c, h, w), 0.0, 1.0);
        buf[(static_cast<std::size_t>(h) * W + w) * C + c] = static_cast<png_byte>(std::lround(v * 255.0));
      }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(W);
  img.height = static_cast<png_uint_32>(H);
  img.format = C == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw IoError("cannot write image " + path.string() + ": " + img.message);
  }
}

Tensor load_kernel(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read kernel " + path.string());
  std::vector<double> values;
  int rows = 0, cols = -1;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string tok;
    int n = 0;
    while (ls >> tok) {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw IoError("invalid number '" + tok + "' in kernel " + path.string());
      }
      values.push_back(v);
      ++n;
    }
    if (n == 0) continue;
    if (cols >= 0 && n != cols) throw IoError("ragged rows in kernel " + path.string());
    cols = n;
    ++rows;
  }
  if (rows == 0) throw IoError("empty kernel file " + path.string());
  return Tensor({rows, cols}, std::move(values));
}

void save_kernel(const std::filesystem::path& path, const Tensor& kernel) {
  if (kernel.rank() != 2) throw DimensionError("save_kernel expects a 2-D kernel");
  std::ofstream os(path);
  if (!os) throw IoError("cannot write kernel " + path.string());
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (int i = 0; i < kernel.dim(0); ++i) {
    for (int j = 0; j < kernel.dim(1); ++j) os << (j ? " " : "") << kernel.at(i, j);
    os << '\n';
  }
  if (!os) throw IoError("failed writing kernel " + path.string());
}

void save_kernel_png(const std::filesystem::path& path, const Tensor& kernel) {
  if (kernel.rank() != 2) throw DimensionError("save_kernel_png expects a 2-D kernel");
  const double mx = kernel.max();
  Tensor img({1, kernel.dim(0), kernel.dim(1)});
  for (std::size_t i = 0; i < kernel.size(); ++i) img[i] = mx > 0 ? std::max(kernel[i], 0.0) / mx : 0.0;
  save_image(path, img);
}

void write_eval_csv(std::ostream& os, const std::vector<EvalRecord>& records) {
  os << "image,mode,psnr,ssim,kernel_error,seconds\n";
  os << std::setprecision(8);
  for (const auto& r : records) {
    os << r.image << ',' << r.mode << ',';
    if (std::isinf(r.psnr)) os << "inf"; else os << r.psnr;
    os << ',' << r.ssim << ',' << r.kernel_error << ',' << r.runtime_seconds << '\n';
  }
}

// ---- synthetic data ------------------------------------------------------------

namespace {

void splat(Tensor& k, double y, double x, double w) {
  const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
  const double fy = y - y0, fx = x - x0;
  const int H = k.dim(0), W = k.dim(1);
  auto add = [&](int r, int c, double v) {
    if (r >= 0 && r < H && c >= 0 && c < W) k.at(r, c) += v;
  };
  add(y0, x0, w * (1 - fy) * (1 - fx));
  add(y0, x0 + 1, w * (1 - fy) * fx);
  add(y0 + 1, x0, w * fy * (1 - fx));
  add(y0 + 1, x0 + 1, w * fy * fx);
}

}  // namespace

Tensor linear_motion_kernel(int height, int width, double length, double angle_radians) {
  if (height < 1 || width < 1 || !(length >= 0.0)) throw ParameterError("invalid motion kernel parameters");
  Tensor k({height, width});
  const double cy = (height - 1) / 2.0, cx = (width - 1) / 2.0;
  const double half = std::max(length - 1.0, 0.0) / 2.0;
  const int n = std::max(1, static_cast<int>(std::ceil(2.0 * half / 0.05)));
  for (int i = 0; i <= n; ++i) {
    const double t = n == 0 ? 0.0 : -half + 2.0 * half * i / n;
    splat(k, cy + t * std::sin(angle_radians), cx + t * std::cos(angle_radians), 1.0);
  }
  return normalize_kernel(k);
}

Tensor random_walk_kernel(int height, int width, int steps, std::uint64_t seed) {
  if (height < 1 || width < 1 || steps < 1) throw ParameterError("invalid random-walk kernel parameters");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<std::pair<double, double>> path{{0.0, 0.0}};
  double vy = n(rng), vx = n(rng);
  for (int s = 0; s < steps; ++s) {
    vy = 0.8 * vy + 0.6 * n(rng);
    vx = 0.8 * vx + 0.6 * n(rng);
    path.emplace_back(path.back().first + vy, path.back().second + vx);
  }
  double ymin = 1e300, ymax = -1e300, xmin = 1e300, xmax = -1e300, my = 0, mx = 0;
  for (auto [y, x] : path) {
    ymin = std::min(ymin, y), ymax = std::max(ymax, y);
    xmin = std::min(xmin, x), xmax = std::max(xmax, x);
    my += y, mx += x;
  }
  my /= path.size();
  mx /= path.size();
  const double extent = std::max({ymax - ymin, xmax - xmin, 1e-9});
  const double fit = 0.8 * (std::min(height, width) - 1) / extent;
  const double scale = std::min(fit, 1.0 * std::min(height, width) / 2.0);
  Tensor k({height, width});
  const double cy = (height - 1) / 2.0, cx = (width - 1) / 2.0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    // Dense sampling along each segment keeps the trace connected.
    for (int s = 0; s < 20; ++s) {
      const double t = s / 20.0;
      const double y = path[i - 1].first + t * (path[i].first - path[i - 1].first);
      const double x = path[i - 1].second + t * (path[i].second - path[i - 1].second);
      splat(k, cy + (y - my) * scale, cx + (x - mx) * scale, 1.0);
    }
  }
  return normalize_kernel(k);
}

Tensor synthetic_scene(int channels, int height, int width, std::uint64_t seed) {
  if (channels < 1 || height < 1 || width < 1) throw ParameterError("invalid scene size");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor img({channels, height, width});

  // Background: linear ramp between two levels.
  const double a = 0.2 + 0.6 * u(rng), b = 0.2 + 0.6 * u(rng);
  const double theta = 2.0 * std::numbers::pi * u(rng);
  const double gy = std::sin(theta), gx = std::cos(theta);
  const double span = std::abs(gy) * height + std::abs(gx) * width;
  for (int h = 0; h < height; ++h)
    for (int w = 0; w < width; ++w) {
      const double t = ((h - height / 2.0) * gy + (w - width / 2.0) * gx) / span + 0.5;
      for (int c = 0; c < channels; ++c) img.at(c, h, w) = a + (b - a) * t;
    }

  enum Kind { Rect, Disc, Bar };
  const int shapes = 6 + static_cast<int>(u(rng) * 6);
  const double size = std::min(height, width);
  for (int s = 0; s < shapes; ++s) {
    const Kind kind = static_cast<Kind>(static_cast<int>(u(rng) * 3) % 3);
    const double cy = u(rng) * height, cx = u(rng) * width;
    const double ry = size * (0.06 + 0.2 * u(rng)), rx = size * (0.06 + 0.2 * u(rng));
    const double rot = std::numbers::pi * u(rng);
    const double thick = size * (0.02 + 0.04 * u(rng));
    std::vector<double> level(channels);
    const double base = u(rng);
    for (int c = 0; c < channels; ++c) level[c] = std::clamp(base + 0.15 * (u(rng) - 0.5), 0.0, 1.0);
    auto inside = [&](double y, double x) {
      const double dy = y - cy, dx = x - cx;
      const double py = dy * std::cos(rot) - dx * std::sin(rot);
      const double px = dy * std::sin(rot) + dx * std::cos(rot);
      switch (kind) {
        case Rect: return std::abs(py) <= ry && std::abs(px) <= rx;
        case Disc: return (py * py) / (ry * ry) + (px * px) / (rx * rx) <= 1.0;
        case Bar: return std::abs(py) <= thick && std::abs(px) <= rx * 1.5;
      }
      return false;
    };
    for (int h = 0; h < height; ++h)
      for (int w = 0; w < width; ++w) {
        int hits = 0;  // 4x supersampling for anti-aliased edges
        for (int sy = 0; sy < 2; ++sy)
          for (int sx = 0; sx < 2; ++sx) hits += inside(h + 0.25 + 0.5 * sy, w + 0.25 + 0.5 * sx) ? 1 : 0;
        if (hits == 0) continue;
        const double cover = hits / 4.0;
        for (int c = 0; c < channels; ++c) img.at(c, h, w) = (1 - cover) * img.at(c, h, w) + cover * level[c];
      }
  }
  for (double& v : img.data()) v = std::clamp(v, 0.05, 0.95);
  return img;
}

}  // namespace vdip
