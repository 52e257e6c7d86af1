#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "grad_check.hpp"
#include "vdip/elbo.hpp"
#include "vdip/error.hpp"

using namespace vdip;
using vdip::testing::random_tensor;
using vdip::testing::rel_error;

namespace {

SharpImageBelief belief_of(const Tensor& mean, const Tensor& std) {
  return SharpImageBelief{ad::constant(mean), ad::constant(std)};
}

KernelBelief kernel_of(const Tensor& k, double s = 1.0) { return KernelBelief{ad::constant(k), s}; }

Tensor random_kernel(std::mt19937_64& rng, int kh, int kw) {
  Tensor k = random_tensor({kh, kw}, rng, 0.05, 1.0);
  k *= 1.0 / k.sum();
  return k;
}

struct Instance {
  BlurredObservation obs;
  Tensor mean, std, kernel;
};

Instance random_instance(std::uint64_t seed, int channels, int side, int ks, double sigma) {
  std::mt19937_64 rng(seed);
  Instance in;
  in.mean = random_tensor({channels, side + ks - 1, side + ks - 1}, rng, 0.05, 0.95);
  in.std = random_tensor(in.mean.shape(), rng, 0.01, 0.1);
  in.kernel = random_kernel(rng, ks, ks);
  in.obs = BlurredObservation{random_tensor({channels, side, side}, rng, 0, 1), sigma};
  return in;
}

}  // namespace

TEST(KernelKl, Examples) {
  EXPECT_NEAR(scalar(kernel_kl_term(kernel_of(Tensor({1, 1}, 0.0), 1.0))), 0.0, 1e-15);
  EXPECT_NEAR(scalar(kernel_kl_term(kernel_of(Tensor({1, 1}, 1.0), 1.0))), -0.5, 1e-15);
  EXPECT_NEAR(scalar(kernel_kl_term(kernel_of(Tensor({1, 1}, 0.0), 0.5))), 0.5 * (1 + 2 * std::log(0.5) - 0.25),
              1e-15);
  EXPECT_NEAR(scalar(kernel_kl_term(kernel_of(Tensor({1, 1}, 0.0), 0.5))), -0.318147, 1e-6);
  EXPECT_THROW(kernel_kl_term(kernel_of(Tensor({1, 1}, 0.0), 0.0)), ParameterError);
  EXPECT_THROW(kernel_kl_term(kernel_of(Tensor({1, 1}, 0.0), -1.0)), ParameterError);
}

TEST(ImageEntropy, Examples) {
  const double half_log = 0.5 * (std::log(2 * std::numbers::pi) + 1);
  EXPECT_NEAR(scalar(image_entropy_term(belief_of(Tensor({1, 1, 1}, 0.5), Tensor({1, 1, 1}, 1.0)))), half_log,
              1e-15);
  EXPECT_NEAR(half_log, 1.41894, 1e-5);
  const double zero_point = 1.0 / std::sqrt(2 * std::numbers::pi * std::numbers::e);
  EXPECT_NEAR(scalar(image_entropy_term(belief_of(Tensor({1, 1, 1}, 0.5), Tensor({1, 1, 1}, zero_point)))), 0.0,
              1e-14);
  const double clamped = scalar(image_entropy_term(belief_of(Tensor({1, 1, 1}, 0.5), Tensor({1, 1, 1}, 0.0))));
  EXPECT_TRUE(std::isfinite(clamped));
  EXPECT_NEAR(clamped, half_log + std::log(1e-6), 1e-12);
}

TEST(ImageEntropy, FullAndReducedFormsDifferByConstant) {
  std::mt19937_64 rng(1);
  const Tensor mean({2, 4, 4}, 0.5);
  double offset = std::numeric_limits<double>::quiet_NaN();
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor s = random_tensor(mean.shape(), rng, 0.01, 0.2);
    double reduced = 0.0;
    for (double v : s.data()) reduced += std::log(v);
    const double full = scalar(image_entropy_term(belief_of(mean, s)));
    if (trial == 0) offset = full - reduced;
    EXPECT_NEAR(full - reduced, offset, 1e-10);
  }
}

TEST(ImageEntropy, MonotoneAndSparsePriorNonIncreasingInStd) {
  std::mt19937_64 rng(2);
  const Tensor mean = random_tensor({1, 6, 6}, rng, 0, 1);
  Tensor std = random_tensor(mean.shape(), rng, 0.01, 0.1);
  Rng unused(0);
  const XiField xi = xi_from_moments(sparse_second_moments(belief_of(mean, std)));
  const PriorKind sparse{PriorType::Sparse, 17};
  for (std::size_t i = 0; i < std.size(); i += 5) {
    const double h0 = scalar(image_entropy_term(belief_of(mean, std)));
    const auto [px0, py0] = prior_terms(belief_of(mean, std), xi, sparse, 1, unused);
    Tensor bumped = std;
    bumped[i] += 0.02;
    const double h1 = scalar(image_entropy_term(belief_of(mean, bumped)));
    const auto [px1, py1] = prior_terms(belief_of(mean, bumped), xi, sparse, 1, unused);
    EXPECT_GT(h1, h0);
    EXPECT_LE(scalar(px1), scalar(px0));
    EXPECT_LE(scalar(py1), scalar(py0));
  }
}

TEST(PriorTerms, Examples) {
  Rng rng(3);
  const PriorKind sparse{PriorType::Sparse, 17};
  const auto flat = belief_of(Tensor({1, 4, 4}, 0.4), Tensor({1, 4, 4}));
  const XiField ones{Tensor({1, 4, 4}, 1.0), Tensor({1, 4, 4}, 1.0)};
  const auto [fx, fy] = prior_terms(flat, ones, sparse, 1, rng);
  EXPECT_EQ(scalar(fx), 0.0);
  EXPECT_EQ(scalar(fy), 0.0);

  Tensor ex2({1, 3, 3});
  ex2.at(0, 1, 1) = 0.14;
  Tensor w({1, 3, 3});
  w.at(0, 1, 1) = 0.25;
  const auto [px, py] = prior_terms(PriorMoments{ad::constant(ex2), ad::constant(Tensor({1, 3, 3}))},
                                    XiField{w, Tensor({1, 3, 3})});
  EXPECT_NEAR(scalar(px), -0.00875, 1e-15);
  EXPECT_EQ(scalar(py), 0.0);

  const auto dark = belief_of(Tensor({3, 5, 5}), Tensor({3, 5, 5}));
  const XiField w1{Tensor({1, 5, 5}, 1.0), Tensor({1, 5, 5}, 1.0)};
  const auto [dx, dy] = prior_terms(dark, w1, PriorKind{PriorType::ExtremeChannel, 2}, 1, rng);
  EXPECT_EQ(scalar(dx), 0.0);
  EXPECT_LE(scalar(dy), 0.0);

  const auto [nx, ny] = prior_terms(dark, w1, PriorKind{PriorType::None, 2}, 1, rng);
  EXPECT_EQ(scalar(nx), 0.0);
  EXPECT_EQ(scalar(ny), 0.0);
}

TEST(PriorTerms, NonPositive) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Instance in = random_instance(seed, 3, 6, 3, 0.1);
    Rng rng(seed);
    for (PriorType t : {PriorType::Sparse, PriorType::ExtremeChannel}) {
      const PriorKind kind{t, 1};
      const SharpImageBelief b = belief_of(in.mean, in.std);
      const XiField xi = xi_from_moments(prior_moments(b, kind, 1, rng));
      const auto [px, py] = prior_terms(b, xi, kind, 1, rng);
      EXPECT_LE(scalar(px), 0.0);
      EXPECT_LE(scalar(py), 0.0);
    }
  }
}

TEST(DataTerm, Examples) {
  Rng rng(4);
  Tensor delta({3, 3});
  delta.at(1, 1) = 1.0;
  std::mt19937_64 gen(5);
  const Tensor mean = random_tensor({1, 6, 6}, gen, 0, 1);
  const BlurredObservation exact{center_crop(mean, 4, 4), 0.02};
  EXPECT_EQ(scalar(data_term(exact, belief_of(mean, Tensor(mean.shape())), kernel_of(delta), 1, rng)), 0.0);

  // SSE 0.5 at sigma 0.5 gives -0.5 / (2 * 0.25).
  Tensor target({1, 1, 2});
  target[0] = 0.5;
  target[1] = 0.5;
  const BlurredObservation obs{target, 0.5};
  const auto b = belief_of(Tensor({1, 1, 2}), Tensor({1, 1, 2}));
  EXPECT_DOUBLE_EQ(scalar(data_term(obs, b, kernel_of(Tensor({1, 1}, 1.0)), 1, rng)), -1.0);
  EXPECT_THROW(data_term(obs, b, kernel_of(Tensor({1, 1}, 1.0)), 0, rng), ParameterError);
}

TEST(DataTerm, MatchesClosedFormExpectation) {
  const Instance in = random_instance(6, 1, 6, 3, 0.1);
  Rng rng(7);
  const double mc = scalar(data_term(in.obs, belief_of(in.mean, in.std), kernel_of(in.kernel), 100000, rng));
  const double closed = expected_data_term(in.obs, in.mean, in.std, in.kernel);
  EXPECT_LT(rel_error(mc, closed), 0.01);
  EXPECT_LE(mc, 0.0);
}

TEST(DataTerm, SeedInvariantAtZeroStd) {
  const Instance in = random_instance(8, 2, 5, 3, 0.05);
  const auto b = belief_of(in.mean, Tensor(in.mean.shape()));
  Rng a(1), c(12345);
  EXPECT_EQ(scalar(data_term(in.obs, b, kernel_of(in.kernel), 3, a)),
            scalar(data_term(in.obs, b, kernel_of(in.kernel), 3, c)));
}

TEST(Loss, DipPerfectReconstructionIsZero) {
  std::mt19937_64 gen(9);
  const Tensor mean = random_tensor({1, 6, 6}, gen, 0, 1);
  Tensor delta({3, 3});
  delta.at(1, 1) = 1.0;
  const BlurredObservation obs{center_crop(mean, 4, 4), 0.02};
  Rng rng(1);
  const LossValue v = loss(LossMode::parse("DIP"), obs, belief_of(mean, Tensor(mean.shape(), 0.05)),
                           kernel_of(delta), 1, rng);
  EXPECT_EQ(scalar(v.loss), 0.0);
  EXPECT_EQ(v.breakdown.image_entropy, 0.0);
  EXPECT_EQ(v.breakdown.kernel_kl, 0.0);
}

TEST(Loss, ModesRoundTripByName) {
  const auto modes = LossMode::ablation_modes();
  ASSERT_EQ(modes.size(), 6u);
  std::vector<std::string> names;
  for (const auto& m : modes) names.push_back(m.name());
  EXPECT_EQ(names, (std::vector<std::string>{"DIP", "DIP-Sparse", "DIP-Extreme", "VDIP-Std", "VDIP-Sparse",
                                             "VDIP-Extreme"}));
  for (const auto& n : names) EXPECT_EQ(LossMode::parse(n).name(), n);
  EXPECT_THROW(LossMode::parse("VDIP-TV"), ParameterError);
}

TEST(Loss, BreakdownTotalIsSumOfParts) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Instance in = random_instance(seed + 20, 2, 6, 3, 0.05);
    for (const LossMode& m : LossMode::ablation_modes(2)) {
      Rng rng(seed);
      const LossValue v = loss(m, in.obs, belief_of(in.mean, in.std), kernel_of(in.kernel), 2, rng);
      const ElboBreakdown& b = v.breakdown;
      EXPECT_NEAR(b.total, b.kernel_kl + b.image_entropy + b.prior_x + b.prior_y + b.data, 1e-9);
      EXPECT_DOUBLE_EQ(scalar(v.loss), -b.total);
      if (!m.variational) {
        EXPECT_EQ(b.kernel_kl, 0.0);
        EXPECT_EQ(b.image_entropy, 0.0);
      }
      if (m.prior.type == PriorType::None) {
        EXPECT_EQ(b.prior_x, 0.0);
        EXPECT_EQ(b.prior_y, 0.0);
      }
    }
  }
}

TEST(Loss, NonVariationalModesIgnoreStd) {
  const Instance in = random_instance(30, 1, 6, 3, 0.05);
  for (const char* name : {"DIP", "DIP-Sparse", "DIP-Extreme"}) {
    Rng a(1), b(1);
    const LossMode m = LossMode::parse(name, 1);
    const double with_std = scalar(loss(m, in.obs, belief_of(in.mean, in.std), kernel_of(in.kernel), 1, a).loss);
    const double without =
        scalar(loss(m, in.obs, belief_of(in.mean, Tensor(in.mean.shape())), kernel_of(in.kernel), 1, b).loss);
    EXPECT_EQ(with_std, without) << name;
  }
}

TEST(Loss, VariationalDegeneratesToMapAtZeroStd) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Instance in = random_instance(seed + 100, 1 + 2 * (seed % 2), 6, 3, 0.05);
    const auto b = belief_of(in.mean, Tensor(in.mean.shape()));
    LossMode vdip = LossMode::parse("VDIP-Sparse");
    vdip.include_entropy_and_kl = false;
    Rng r1(seed), r2(seed);
    const double v = scalar(loss(vdip, in.obs, b, kernel_of(in.kernel), 1, r1).loss);
    const double d = scalar(loss(LossMode::parse("DIP-Sparse"), in.obs, b, kernel_of(in.kernel), 1, r2).loss);
    EXPECT_EQ(v, d) << "instance " << seed;
  }
}

TEST(Loss, NonFiniteTermIsNamed) {
  Instance in = random_instance(40, 1, 4, 3, 0.05);
  in.mean[3] = std::numeric_limits<double>::quiet_NaN();
  Rng rng(1);
  try {
    loss(LossMode::parse("VDIP-Sparse"), in.obs, belief_of(in.mean, in.std), kernel_of(in.kernel), 1, rng);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("prior_x"), std::string::npos) << e.what();
  }
}

// Central differences of the full loss on a 6x6 observation with fixed noise
// draws and fixed prior weights.
TEST(Loss, GradientsMatchFiniteDifferences) {
  const double h = 1e-4;
  for (const char* name : {"VDIP-Sparse", "VDIP-Extreme", "VDIP-Std", "DIP-Sparse"}) {
    const LossMode mode = LossMode::parse(name, 1);
    const Instance in = random_instance(50, 1, 6, 3, 0.1);
    Rng xi_rng(5);
    const XiField xi =
        mode.prior.type == PriorType::None
            ? XiField{}
            : xi_from_moments(prior_moments(belief_of(in.mean, in.std), mode.prior, 1, xi_rng));
    auto evaluate = [&](const std::vector<ad::Var>& v) {
      Rng rng(77);
      return loss(mode, in.obs, SharpImageBelief{v[0], v[1]}, KernelBelief{v[2], 1.0}, 1, rng, {}, &xi).loss;
    };
    std::vector<Tensor> x{in.mean, in.std, in.kernel};
    std::vector<ad::Var> params;
    for (const Tensor& t : x) params.push_back(ad::parameter(t));
    evaluate(params).backward();
    double worst = 0.0;
    for (int k = 0; k < 3; ++k) {
      if (k == 1 && !mode.variational) continue;
      const Tensor g = params[k].grad();
      for (std::size_t i = 0; i < x[k].size(); ++i) {
        const double x0 = x[k][i];
        auto at = [&](double value) {
          x[k][i] = value;
          std::vector<ad::Var> cs;
          for (const Tensor& t : x) cs.push_back(ad::constant(t));
          const double f = scalar(evaluate(cs));
          x[k][i] = x0;
          return f;
        };
        const double fd = (at(x0 + h) - at(x0 - h)) / (2 * h);
        worst = std::max(worst, rel_error(g[i], fd, 1e-2));
      }
    }
    EXPECT_LT(worst, 1e-3) << name;
  }
}
