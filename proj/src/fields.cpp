#include "vdip/fields.hpp"

#include <algorithm>
#include <cmath>

#include "vdip/error.hpp"

namespace vdip {

void SharpImageBelief::validate() const {
  if (!mean.defined() || !std.defined()) throw ParameterError("belief fields are not set");
  if (mean.value().rank() != 3) throw DimensionError("belief mean must be C x H x W");
  require_same_shape(mean.value(), std.value(), "belief mean/std");
  if (mean.value().min() < 0.0 || mean.value().max() > 1.0) {
    throw ParameterError("belief mean outside [0, 1]");
  }
  if (std.value().min() < 0.0) throw ParameterError("belief std is negative");
  if (!mean.value().all_finite() || !std.value().all_finite()) throw NumericError("belief is not finite");
}

void KernelBelief::validate(double sum_tolerance) const {
  if (!mean.defined() || mean.value().rank() != 2) throw DimensionError("kernel mean must be Kh x Kw");
  if (mean.value().min() < 0.0) throw ParameterError("kernel has negative entries");
  if (std::abs(mean.value().sum() - 1.0) > sum_tolerance) throw ParameterError("kernel does not sum to 1");
  if (!(std_scalar >= 0.0)) throw ParameterError("kernel std must be non-negative");
}

void BlurredObservation::validate() const {
  if (image.rank() != 3) throw DimensionError("observation must be C x M x N");
  if (image.min() < 0.0 || image.max() > 1.0) throw ParameterError("observation outside [0, 1]");
  if (!(noise_sigma > 0.0)) throw ParameterError("noise sigma must be positive");
}

NoiseInputs NoiseInputs::draw(int channels, int height, int width, int kernel_dim, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 0.1);
  Tensor zi({channels, height, width});
  for (double& v : zi.data()) v = u(rng);
  Tensor zk({kernel_dim});
  for (double& v : zk.data()) v = u(rng);
  return NoiseInputs(std::move(zi), std::move(zk), seed);
}

Tensor standard_normal(const Shape& shape, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(shape);
  for (double& v : t.data()) v = n(rng);
  return t;
}

Tensor convolve_valid(const Tensor& image, const Tensor& kernel) {
  return ad::correlate_valid(ad::constant(image), ad::constant(kernel)).value();
}

ad::Var convolve_valid(const ad::Var& image, const ad::Var& kernel) {
  return ad::correlate_valid(image, kernel);
}

ad::Var sample_image(const SharpImageBelief& belief, const Tensor& eps) {
  require_same_shape(belief.mean.value(), eps, "sample_image eps");
  require_same_shape(belief.mean.value(), belief.std.value(), "sample_image belief");
  return ad::add(belief.mean, ad::mul(ad::constant(eps), belief.std));
}

BlurredObservation degrade(const Tensor& sharp, const Tensor& kernel, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ParameterError("degrade: sigma must be >= 0");
  if (kernel.rank() != 2 || kernel.min() < 0.0) throw ParameterError("degrade: kernel must be non-negative");
  if (std::abs(kernel.sum() - 1.0) > 1e-6) throw ParameterError("degrade: kernel must sum to 1");
  Tensor blurred = convolve_valid(sharp, kernel);
  if (sigma > 0.0) {
    Rng rng(seed);
    std::normal_distribution<double> n(0.0, sigma);
    for (double& v : blurred.data()) v += n(rng);
  }
  for (double& v : blurred.data()) v = std::clamp(v, 0.0, 1.0);
  // Noise level recorded in the observation must be positive even for noiseless data.
  return BlurredObservation{std::move(blurred), sigma > 0.0 ? sigma : 1e-3};
}

}  // namespace vdip
