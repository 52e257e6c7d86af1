#include "vdip/elbo.hpp"

#include <cmath>
#include <numbers>

#include "vdip/error.hpp"

namespace vdip {

std::string LossMode::name() const {
  std::string base = variational ? "VDIP" : "DIP";
  switch (prior.type) {
    case PriorType::None: return variational ? base + "-Std" : base;
    case PriorType::Sparse: return base + "-Sparse";
    case PriorType::ExtremeChannel: return base + "-Extreme";
  }
  return base;
}

LossMode LossMode::parse(const std::string& name, int patch_radius) {
  for (const LossMode& m : ablation_modes(patch_radius))
    if (m.name() == name) return m;
  throw ParameterError("unknown loss mode '" + name + "'");
}

std::vector<LossMode> LossMode::ablation_modes(int patch_radius) {
  std::vector<LossMode> modes;
  for (bool variational : {false, true})
    for (PriorType t : {PriorType::None, PriorType::Sparse, PriorType::ExtremeChannel})
      modes.push_back(LossMode{variational, PriorKind{t, patch_radius}, true});
  return modes;
}

ad::Var kernel_kl_term(const KernelBelief& kernel) {
  const double s = kernel.std_scalar;
  if (!(s > 0.0)) throw ParameterError("kernel_kl_term: kernel std must be positive");
  const double n = static_cast<double>(kernel.mean.size());
  // sum over entries of (1 + 2 ln s - s^2) is constant; only -E^2 depends on the kernel.
  const double constant_part = 0.5 * n * (1.0 + 2.0 * std::log(s) - s * s);
  return ad::add_scalar(ad::scale(ad::sum(ad::square(kernel.mean)), -0.5), constant_part);
}

ad::Var image_entropy_term(const SharpImageBelief& belief, double floor) {
  const double n = static_cast<double>(belief.std.size());
  const double constant_part = 0.5 * n * (std::log(2.0 * std::numbers::pi) + 1.0);
  return ad::add_scalar(ad::sum(ad::log(ad::clamp_min(belief.std, floor))), constant_part);
}

std::pair<ad::Var, ad::Var> prior_terms(const PriorMoments& moments, const XiField& xi) {
  auto term = [](const ad::Var& m, const Tensor& w) {
    return ad::scale(ad::dot(m, ad::constant(w)), -0.25);
  };
  return {term(moments.x, xi.xi_x), term(moments.y, xi.xi_y)};
}

std::pair<ad::Var, ad::Var> prior_terms(const SharpImageBelief& belief, const XiField& xi, const PriorKind& kind,
                                        int samples, Rng& rng, const ElboOptions& options) {
  if (kind.type == PriorType::None) {
    return {ad::constant(Tensor(Shape{}, 0.0)), ad::constant(Tensor(Shape{}, 0.0))};
  }
  return prior_terms(prior_moments(belief, kind, samples, rng, options.complement), xi);
}

namespace {

ad::Var negative_sse(const BlurredObservation& obs, const ad::Var& image, const ad::Var& kernel) {
  const ad::Var residual = ad::sub(ad::constant(obs.image), ad::correlate_valid(image, kernel));
  return ad::neg(ad::sum(ad::square(residual)));
}

}  // namespace

ad::Var data_term(const BlurredObservation& obs, const SharpImageBelief& belief, const KernelBelief& kernel,
                  int samples, Rng& rng) {
  if (samples < 1) throw ParameterError("data_term: sample count must be >= 1");
  if (!(obs.noise_sigma > 0.0)) throw ParameterError("data_term: noise sigma must be positive");
  ad::Var acc;
  for (int a = 0; a < samples; ++a) {
    const ad::Var draw = sample_image(belief, standard_normal(belief.mean.shape(), rng));
    const ad::Var term = negative_sse(obs, draw, kernel.mean);
    acc = acc.defined() ? ad::add(acc, term) : term;
  }
  const double weight = 1.0 / (2.0 * obs.noise_sigma * obs.noise_sigma * samples);
  return ad::scale(acc, weight);
}

double expected_data_term(const BlurredObservation& obs, const Tensor& mean, const Tensor& std,
                          const Tensor& kernel) {
  const Tensor blurred_mean = convolve_valid(mean, kernel);
  require_same_shape(blurred_mean, obs.image, "expected_data_term");
  double sse = 0.0;
  for (std::size_t i = 0; i < blurred_mean.size(); ++i) {
    const double r = obs.image[i] - blurred_mean[i];
    sse += r * r;
  }
  Tensor k2 = kernel;
  for (double& v : k2.data()) v *= v;
  Tensor s2 = std;
  for (double& v : s2.data()) v *= v;
  const double spread = convolve_valid(s2, k2).sum();
  return -(sse + spread) / (2.0 * obs.noise_sigma * obs.noise_sigma);
}

LossValue assemble_loss(const ElboTerms& terms) {
  ElboBreakdown b;
  ad::Var total;
  auto take = [&](const ad::Var& term, double& slot, const char* name) {
    if (!term.defined()) return;
    slot = scalar(term);
    if (!std::isfinite(slot)) throw NumericError(std::string("non-finite ") + name + " term");
    total = total.defined() ? ad::add(total, term) : term;
  };
  take(terms.kernel_kl, b.kernel_kl, "kernel_kl");
  take(terms.image_entropy, b.image_entropy, "image_entropy");
  take(terms.prior_x, b.prior_x, "prior_x");
  take(terms.prior_y, b.prior_y, "prior_y");
  take(terms.data, b.data, "data");
  if (!total.defined()) throw ParameterError("assemble_loss: no terms");
  b.total = scalar(total);
  if (!std::isfinite(b.total)) throw NumericError("non-finite total");
  return LossValue{ad::neg(total), b};
}

SharpImageBelief effective_belief(const LossMode& mode, const SharpImageBelief& belief) {
  if (mode.variational) return belief;
  return SharpImageBelief{belief.mean, ad::constant(Tensor(belief.mean.shape(), 0.0))};
}

LossValue loss(const LossMode& mode, const BlurredObservation& obs, const SharpImageBelief& belief,
               const KernelBelief& kernel, int samples, Rng& rng, const ElboOptions& options,
               const XiField* fixed_xi) {
  const SharpImageBelief used = effective_belief(mode, belief);
  ElboTerms terms;
  if (mode.prior.type != PriorType::None) {
    const PriorMoments moments = prior_moments(used, mode.prior, samples, rng, options.complement);
    const XiField xi = fixed_xi ? *fixed_xi : xi_from_moments(moments, options.v_floor);
    std::tie(terms.prior_x, terms.prior_y) = prior_terms(moments, xi);
  }
  // Non-variational modes use the mean directly; with a zero std the sample equals it.
  terms.data = mode.variational ? data_term(obs, used, kernel, samples, rng) : data_term(obs, used, kernel, 1, rng);
  if (mode.variational && mode.include_entropy_and_kl) {
    terms.kernel_kl = kernel_kl_term(kernel);
    terms.image_entropy = image_entropy_term(used, options.entropy_floor);
  }
  return assemble_loss(terms);
}

}  // namespace vdip
