#pragma once

#include <string>
#include <utility>

#include "vdip/fields.hpp"

namespace vdip {

enum class PriorType { None, Sparse, ExtremeChannel };

struct PriorKind {
  PriorType type = PriorType::None;
  int patch_radius = 17;  // half-width of the extreme-channel window
};

std::string to_string(PriorType t);
PriorType parse_prior_type(const std::string& s);

/// How the standard deviation of (1 - I)^2 is formed.
enum class ComplementVariant {
  Consistent,  // sqrt(4 (1-E)^2 S^2 + 2 S^4)
  Printed,     // sqrt(4 S^2 + 4 E^2 S^2 + 2 S^4)
};

/// Penalty weights E(xi_x), E(xi_y), shaped like the prior operator output.
/// Always detached from the graph.
struct XiField {
  Tensor xi_x;
  Tensor xi_y;
};

/// Second moments E[(F_x)^2], E[(F_y)^2] of the prior operator.
struct PriorMoments {
  ad::Var x;
  ad::Var y;
};

inline constexpr double kDefaultVFloor = 1e-4;

/// Penalty rho(x) = ln|x| with |x| clamped below by floor.
double rho(double x, double floor = kDefaultVFloor);
double rho_prime(double x, double floor = kDefaultVFloor);

/// E(xi) = rho'(v) / v = 1 / max(v, floor)^2, elementwise.
Tensor xi_expectation(const Tensor& v, double floor = kDefaultVFloor);

/// XiField from second moments: v = sqrt(E[F^2]).
XiField xi_from_moments(const PriorMoments& m, double floor = kDefaultVFloor);

/// Closed-form second moments of first differences along rows (x) and columns (y):
/// (E(m) - E(m-1))^2 + S(m)^2 + S(m-1)^2. The first row/column differences
/// against a replicated copy of themselves, so their moment is 0.
PriorMoments sparse_second_moments(const SharpImageBelief& belief);

/// E(I^2) = E^2 + S^2 and S(I^2) = sqrt(4 E^2 S^2 + 2 S^4).
std::pair<ad::Var, ad::Var> squared_moments(const SharpImageBelief& belief);

/// Moments of (1 - I)^2.
std::pair<ad::Var, ad::Var> complement_squared_moments(
    const SharpImageBelief& belief, ComplementVariant variant = ComplementVariant::Consistent);

/// Monte Carlo estimate of E[min over window and channels of a squared variable]:
/// average over `samples` draws of patch_channel_min(max(E2 + eps ⊙ S2, 0)).
ad::Var extreme_channel_samples(const ad::Var& e2, const ad::Var& s2, int patch_radius, int samples, Rng& rng);

/// Second moments of the dark channel (x) and the complemented bright channel (y).
PriorMoments extreme_channel_moments(const SharpImageBelief& belief, int patch_radius, int samples, Rng& rng,
                                     ComplementVariant variant = ComplementVariant::Consistent);

/// Dispatch on the prior type; PriorType::None yields undefined moments.
PriorMoments prior_moments(const SharpImageBelief& belief, const PriorKind& kind, int samples, Rng& rng,
                           ComplementVariant variant = ComplementVariant::Consistent);

}  // namespace vdip
