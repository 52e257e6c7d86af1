#pragma once

#include <cstdint>
#include <random>

#include "vdip/autograd.hpp"
#include "vdip/tensor.hpp"

namespace vdip {

using Rng = std::mt19937_64;

/// Per-pixel Gaussian belief over the latent sharp image, C x Mp x Np with
/// Mp = M + Kh - 1 and Np = N + Kw - 1 for an M x N observation.
struct SharpImageBelief {
  ad::Var mean;  // in [0, 1]
  ad::Var std;   // >= 0

  int channels() const { return mean.value().dim(0); }
  int height() const { return mean.value().dim(1); }
  int width() const { return mean.value().dim(2); }

  /// Throws DimensionError / ParameterError when an invariant is violated.
  void validate() const;
};

/// Expected blur kernel (non-negative, unit sum) with one shared standard deviation.
struct KernelBelief {
  ad::Var mean;  // Kh x Kw
  double std_scalar = 1.0;

  int height() const { return mean.value().dim(0); }
  int width() const { return mean.value().dim(1); }
  void validate(double sum_tolerance = 1e-6) const;
};

struct BlurredObservation {
  Tensor image;  // C x M x N in [0, 1]
  double noise_sigma = 0.02;

  void validate() const;
};

/// Generator inputs drawn once per run and never modified.
class NoiseInputs {
 public:
  /// z_image ~ U[0, 0.1) of shape channels x height x width, z_kernel ~ U[0, 0.1) of length kernel_dim.
  static NoiseInputs draw(int channels, int height, int width, int kernel_dim, std::uint64_t seed);

  const Tensor& z_image() const { return z_image_; }
  const Tensor& z_kernel() const { return z_kernel_; }
  std::uint64_t seed() const { return seed_; }

 private:
  NoiseInputs(Tensor zi, Tensor zk, std::uint64_t seed)
      : z_image_(std::move(zi)), z_kernel_(std::move(zk)), seed_(seed) {}
  Tensor z_image_;
  Tensor z_kernel_;
  std::uint64_t seed_;
};

Tensor standard_normal(const Shape& shape, Rng& rng);

/// Valid cross-correlation (no kernel flip) of every channel with one kernel.
/// The same orientation is used by degrade() and by the solver.
Tensor convolve_valid(const Tensor& image, const Tensor& kernel);
ad::Var convolve_valid(const ad::Var& image, const ad::Var& kernel);

/// Reparameterised draw mean + eps ⊙ std; differentiable in mean and std.
ad::Var sample_image(const SharpImageBelief& belief, const Tensor& eps);

/// Synthetic observation: valid blur, i.i.d. Gaussian noise of std sigma, clamp to [0, 1].
BlurredObservation degrade(const Tensor& sharp, const Tensor& kernel, double sigma, std::uint64_t seed);

}  // namespace vdip
