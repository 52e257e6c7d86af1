#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vdip/fields.hpp"
#include "vdip/priors.hpp"

namespace vdip {

/// Values of the individual lower-bound terms; total is their sum.
struct ElboBreakdown {
  double kernel_kl = 0.0;
  double image_entropy = 0.0;
  double prior_x = 0.0;
  double prior_y = 0.0;
  double data = 0.0;
  double total = 0.0;
};

/// Objective family. Non-variational modes ignore the std field (it is
/// forced to zero) and carry no entropy or kernel terms.
struct LossMode {
  bool variational = true;
  PriorKind prior{PriorType::Sparse, 17};
  /// When false the entropy and kernel-KL terms are left out of a variational loss.
  bool include_entropy_and_kl = true;

  /// "DIP", "DIP-Sparse", "DIP-Extreme", "VDIP-Std", "VDIP-Sparse" or "VDIP-Extreme".
  std::string name() const;
  static LossMode parse(const std::string& name, int patch_radius = 17);
  static std::vector<LossMode> ablation_modes(int patch_radius = 17);
};

struct ElboOptions {
  double entropy_floor = 1e-6;  // S(I_s) is clamped below by this inside ln
  double v_floor = kDefaultVFloor;
  ComplementVariant complement = ComplementVariant::Consistent;
};

/// 1/2 sum (1 + 2 ln S - E^2 - S^2) over kernel entries, S = kernel.std_scalar.
ad::Var kernel_kl_term(const KernelBelief& kernel);

/// 1/2 sum (ln 2 pi + 1 + 2 ln max(S, floor)) over every latent pixel.
ad::Var image_entropy_term(const SharpImageBelief& belief, double floor = 1e-6);

/// -1/4 sum E[F^2] E(xi) for both directions, from precomputed moments.
std::pair<ad::Var, ad::Var> prior_terms(const PriorMoments& moments, const XiField& xi);

/// Computes the moments of `kind` and evaluates them against `xi`.
/// PriorType::None returns two zero constants.
std::pair<ad::Var, ad::Var> prior_terms(const SharpImageBelief& belief, const XiField& xi, const PriorKind& kind,
                                        int samples, Rng& rng, const ElboOptions& options = {});

/// -(1/A) sum_a ||I_b - E(k) ⊗ (E + eps_a ⊙ S)||^2 / (2 sigma^2).
ad::Var data_term(const BlurredObservation& obs, const SharpImageBelief& belief, const KernelBelief& kernel,
                  int samples, Rng& rng);

/// Closed-form expectation of data_term: -(||I_b - k ⊗ E||^2 + sum k^2 ⊗ S^2) / (2 sigma^2).
double expected_data_term(const BlurredObservation& obs, const Tensor& mean, const Tensor& std,
                          const Tensor& kernel);

/// Terms entering the objective; undefined entries are excluded.
struct ElboTerms {
  ad::Var kernel_kl;
  ad::Var image_entropy;
  ad::Var prior_x;
  ad::Var prior_y;
  ad::Var data;
};

struct LossValue {
  ad::Var loss;  // minimised scalar, the negated lower bound
  ElboBreakdown breakdown;
};

/// Negated sum of the defined terms. Throws NumericError naming the first non-finite term.
LossValue assemble_loss(const ElboTerms& terms);

/// Belief actually used by `mode`: non-variational modes replace std with zeros.
SharpImageBelief effective_belief(const LossMode& mode, const SharpImageBelief& belief);

/// Full objective. When `fixed_xi` is given it replaces the weights
/// computed from the current belief.
LossValue loss(const LossMode& mode, const BlurredObservation& obs, const SharpImageBelief& belief,
               const KernelBelief& kernel, int samples, Rng& rng, const ElboOptions& options = {},
               const XiField* fixed_xi = nullptr);

}  // namespace vdip
