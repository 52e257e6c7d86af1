#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "vdip/tensor.hpp"

namespace vdip {

struct EvalRecord {
  std::string image;
  std::string mode;
  double psnr = 0.0;  // +inf for an exact match
  double ssim = 0.0;
  double kernel_error = 0.0;
  double runtime_seconds = 0.0;
};

/// 10 log10(1 / MSE) for images in [0, 1]; +infinity when identical.
double psnr(const Tensor& a, const Tensor& b);

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2,
/// C2 = 0.03^2, averaged over channels.
double ssim(const Tensor& a, const Tensor& b);

/// Best PSNR of `estimate` (C x M x N) against every M x N window of the
/// larger `reference`, with the SSIM at that window. Blind estimates are
/// only defined up to a translation shared by image and kernel.
struct AlignedScore {
  double psnr = 0.0;
  double ssim = 0.0;
  int dy = 0;
  int dx = 0;
};
AlignedScore aligned_score(const Tensor& estimate, const Tensor& reference);

/// Minimum over integer translations of the mean squared difference between
/// the unit-sum normalised kernels, both zero-padded to a common size.
double kernel_recovery_error(const Tensor& estimate, const Tensor& truth);

/// 8-bit PNG, gray or RGB, scaled to [0, 1]; returns C x H x W.
Tensor load_image(const std::filesystem::path& path);
/// Values are clamped to [0, 1] and rounded to 8 bits. 1 or 3 channels.
void save_image(const std::filesystem::path& path, const Tensor& image);

/// One row per line, whitespace separated; written with round-trip precision.
Tensor load_kernel(const std::filesystem::path& path);
void save_kernel(const std::filesystem::path& path, const Tensor& kernel);
/// Kernel scaled by its maximum, as a gray PNG.
void save_kernel_png(const std::filesystem::path& path, const Tensor& kernel);

/// CSV with header image,mode,psnr,ssim,kernel_error,seconds.
void write_eval_csv(std::ostream& os, const std::vector<EvalRecord>& records);

// Synthetic data --------------------------------------------------------------

/// Anti-aliased straight-line motion blur through the kernel center.
Tensor linear_motion_kernel(int height, int width, double length, double angle_radians);

/// Camera-shake style kernel from a smoothed random walk, centered by its centroid.
Tensor random_walk_kernel(int height, int width, int steps, std::uint64_t seed);

/// Piecewise-smooth test scene of random rectangles, discs and bars over a
/// gradient background, values within [0.05, 0.95].
Tensor synthetic_scene(int channels, int height, int width, std::uint64_t seed);

/// Normalise to unit sum; throws ParameterError for an all-zero or negative kernel.
Tensor normalize_kernel(const Tensor& kernel);

}  // namespace vdip
