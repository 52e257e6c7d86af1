#include "vdip/priors.hpp"

#include <algorithm>
#include <cmath>

#include "vdip/error.hpp"

namespace vdip {

std::string to_string(PriorType t) {
  switch (t) {
    case PriorType::None: return "none";
    case PriorType::Sparse: return "sparse";
    case PriorType::ExtremeChannel: return "extreme";
  }
  return "none";
}

PriorType parse_prior_type(const std::string& s) {
  if (s == "none") return PriorType::None;
  if (s == "sparse") return PriorType::Sparse;
  if (s == "extreme") return PriorType::ExtremeChannel;
  throw ParameterError("unknown prior '" + s + "' (expected none, sparse or extreme)");
}

double rho(double x, double floor) { return std::log(std::max(std::abs(x), floor)); }

double rho_prime(double x, double floor) {
  const double a = std::max(std::abs(x), floor);
  return x < 0 ? -1.0 / a : 1.0 / a;
}

Tensor xi_expectation(const Tensor& v, double floor) {
  Tensor out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double c = std::max(v[i], floor);
    out[i] = 1.0 / (c * c);
  }
  return out;
}

XiField xi_from_moments(const PriorMoments& m, double floor) {
  auto weights = [floor](const ad::Var& second_moment) {
    Tensor v = second_moment.value();
    for (double& e : v.data()) e = std::sqrt(std::max(e, 0.0));
    return xi_expectation(v, floor);
  };
  return XiField{weights(m.x), weights(m.y)};
}

PriorMoments sparse_second_moments(const SharpImageBelief& belief) {
  const ad::Var var = ad::square(belief.std);
  auto along = [&](int axis) {
    return ad::add(ad::square(ad::diff(belief.mean, axis)), ad::neighbor_sum(var, axis));
  };
  return PriorMoments{along(1), along(2)};
}

namespace {

ad::Var squared_std(const ad::Var& e, const ad::Var& s) {
  const ad::Var s2 = ad::square(s);
  return ad::sqrt_safe(ad::add(ad::scale(ad::mul(ad::square(e), s2), 4.0), ad::scale(ad::square(s2), 2.0)));
}

}  // namespace

std::pair<ad::Var, ad::Var> squared_moments(const SharpImageBelief& belief) {
  return {ad::add(ad::square(belief.mean), ad::square(belief.std)), squared_std(belief.mean, belief.std)};
}

std::pair<ad::Var, ad::Var> complement_squared_moments(const SharpImageBelief& belief,
                                                       ComplementVariant variant) {
  const ad::Var one_minus = ad::add_scalar(ad::neg(belief.mean), 1.0);
  ad::Var e2 = ad::add(ad::square(one_minus), ad::square(belief.std));
  if (variant == ComplementVariant::Consistent) return {e2, squared_std(one_minus, belief.std)};
  const ad::Var s2 = ad::square(belief.std);
  ad::Var printed = ad::sqrt_safe(ad::add(ad::add(ad::scale(s2, 4.0), ad::scale(ad::mul(ad::square(belief.mean), s2), 4.0)),
                                          ad::scale(ad::square(s2), 2.0)));
  return {e2, printed};
}

ad::Var extreme_channel_samples(const ad::Var& e2, const ad::Var& s2, int patch_radius, int samples, Rng& rng) {
  if (samples < 1) throw ParameterError("extreme_channel_samples: sample count must be >= 1");
  require_same_shape(e2.value(), s2.value(), "extreme_channel_samples");
  ad::Var acc;
  for (int a = 0; a < samples; ++a) {
    // A squared variable is non-negative; the Gaussian draw is not.
    const ad::Var draw =
        ad::clamp_min(ad::add(e2, ad::mul(ad::constant(standard_normal(e2.shape(), rng)), s2)), 0.0);
    const ad::Var m = ad::patch_channel_min(draw, patch_radius);
    acc = acc.defined() ? ad::add(acc, m) : m;
  }
  return samples == 1 ? acc : ad::scale(acc, 1.0 / samples);
}

PriorMoments extreme_channel_moments(const SharpImageBelief& belief, int patch_radius, int samples, Rng& rng,
                                     ComplementVariant variant) {
  auto [dark_e, dark_s] = squared_moments(belief);
  auto [bright_e, bright_s] = complement_squared_moments(belief, variant);
  ad::Var x = extreme_channel_samples(dark_e, dark_s, patch_radius, samples, rng);
  ad::Var y = extreme_channel_samples(bright_e, bright_s, patch_radius, samples, rng);
  return PriorMoments{x, y};
}

PriorMoments prior_moments(const SharpImageBelief& belief, const PriorKind& kind, int samples, Rng& rng,
                           ComplementVariant variant) {
  switch (kind.type) {
    case PriorType::None: return {};
    case PriorType::Sparse: return sparse_second_moments(belief);
    case PriorType::ExtremeChannel:
      if (kind.patch_radius < 0) throw ParameterError("patch radius must be >= 0");
      return extreme_channel_moments(belief, kind.patch_radius, samples, rng, variant);
  }
  return {};
}

}  // namespace vdip
