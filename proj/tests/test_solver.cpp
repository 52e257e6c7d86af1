#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "vdip/error.hpp"
#include "vdip/imaging.hpp"
#include "vdip/solver.hpp"

using namespace vdip;

namespace {

RunConfig small_config(int steps, const std::string& mode = "VDIP-Sparse") {
  RunConfig c;
  c.steps = steps;
  c.sigma = 0.02;
  c.mode = LossMode::parse(mode, 2);
  c.kernel_height = c.kernel_width = 5;
  c.seed = 3;
  c.image_net.scales = 3;
  c.image_net.channels_per_scale = 8;
  c.image_net.skip_channels = 4;
  c.image_net.input_channels = 4;
  c.kernel_net.input_dim = 20;
  c.kernel_net.hidden_dim = 40;
  return c;
}

BlurredObservation small_observation(int side = 16, int channels = 1) {
  const Tensor sharp = synthetic_scene(channels, side + 4, side + 4, 1);
  return degrade(sharp, linear_motion_kernel(5, 5, 3.0, 0.5), 0.01, 2);
}

}  // namespace

TEST(RunConfig, Validation) {
  RunConfig c = small_config(1);
  EXPECT_NO_THROW(c.validate());
  auto bad = [&](auto mutate) {
    RunConfig d = c;
    mutate(d);
    EXPECT_THROW(d.validate(), ParameterError);
  };
  bad([](RunConfig& d) { d.steps = -1; });
  bad([](RunConfig& d) { d.lr_image = 0; });
  bad([](RunConfig& d) { d.lr_kernel = -1e-4; });
  bad([](RunConfig& d) { d.samples = 0; });
  bad([](RunConfig& d) { d.sigma = 0; });
  bad([](RunConfig& d) { d.log_every = 0; });
  bad([](RunConfig& d) { d.checkpoint_every = 5; });
  EXPECT_NE(c.seeds().parameters, c.seeds().noise);
}

TEST(Solver, ZeroStepsReturnsInitialisation) {
  const BlurredObservation obs = small_observation();
  const RunConfig c = small_config(0);
  const RunResult r = run(obs, c);
  EXPECT_TRUE(r.log.empty());
  EXPECT_TRUE(r.step_seconds.empty());
  ImageGeneratorSpec spec = c.image_net;
  spec.image_channels = 1;
  const ImageGenerator g(spec, c.seeds().parameters);
  const NoiseInputs z = NoiseInputs::draw(spec.input_channels, 20, 20, c.kernel_net.input_dim, c.seeds().noise);
  EXPECT_EQ(r.belief_mean.values(), g.forward(z).mean.value().values());
  EXPECT_EQ(r.belief_std.values(), g.forward(z).std.value().values());
  EXPECT_EQ(r.image.values(), center_crop(r.belief_mean, 16, 16).values());
  EXPECT_EQ(r.kernel.shape(), (Shape{5, 5}));
  EXPECT_NEAR(r.kernel.sum(), 1.0, 1e-12);
}

TEST(Solver, DeterministicGivenSeeds) {
  const BlurredObservation obs = small_observation();
  const RunConfig c = small_config(6);
  const RunResult a = run(obs, c), b = run(obs, c);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].elbo.total, b.log[i].elbo.total);
    EXPECT_EQ(a.log[i].elbo.data, b.log[i].elbo.data);
  }
  EXPECT_EQ(a.image.values(), b.image.values());
  EXPECT_EQ(a.kernel.values(), b.kernel.values());
  RunConfig other = c;
  other.seed = 4;
  EXPECT_NE(run(obs, other).image.values(), a.image.values());
}

TEST(Solver, LogLengthIsCeilOfStepsOverInterval) {
  const BlurredObservation obs = small_observation();
  for (int every : {1, 2, 3, 7}) {
    RunConfig c = small_config(7);
    c.log_every = every;
    const RunResult r = run(obs, c);
    EXPECT_EQ(r.log.size(), static_cast<std::size_t>((7 + every - 1) / every)) << every;
    EXPECT_EQ(r.log.front().step, 1);
    EXPECT_EQ(r.step_seconds.size(), 7u);
  }
}

TEST(Solver, StepOrderFollowsAlgorithm) {
  const BlurredObservation obs = small_observation();
  RunHooks hooks;
  std::vector<std::pair<int, StepPhase>> calls;
  hooks.on_phase = [&](int t, StepPhase p) { calls.emplace_back(t, p); };
  run(obs, small_config(3), hooks);
  const std::vector<StepPhase> order{StepPhase::Forward, StepPhase::Xi, StepPhase::Sample, StepPhase::Assemble,
                                     StepPhase::Update};
  ASSERT_EQ(calls.size(), 15u);
  for (std::size_t i = 0; i < calls.size(); ++i) {
    EXPECT_EQ(calls[i].first, static_cast<int>(i / 5) + 1);
    EXPECT_EQ(calls[i].second, order[i % 5]) << to_string(calls[i].second);
  }
}

// The weights at step t come from the belief generated before update t, so
// the loss at step 1 equals the loss of the fresh initialisation.
TEST(Solver, FirstStepUsesPreUpdateBelief) {
  const BlurredObservation obs = small_observation();
  const RunConfig c = small_config(2, "DIP-Sparse");
  const RunResult two = run(obs, c);
  ImageGeneratorSpec spec = c.image_net;
  spec.image_channels = 1;
  const ImageGenerator g(spec, c.seeds().parameters);
  const NoiseInputs z = NoiseInputs::draw(spec.input_channels, 20, 20, c.kernel_net.input_dim, c.seeds().noise);
  const RunResult zero = run(obs, small_config(0, "DIP-Sparse"));
  const SharpImageBelief b{ad::constant(zero.belief_mean), ad::constant(zero.belief_std)};
  const KernelBelief k{ad::constant(zero.kernel), c.kernel_std};
  Rng rng(c.seeds().sampling);
  const LossValue v = loss(c.mode, BlurredObservation{obs.image, c.sigma}, b, k, 1, rng);
  EXPECT_DOUBLE_EQ(two.log[0].elbo.total, v.breakdown.total);
  EXPECT_NE(two.log[1].elbo.total, v.breakdown.total);
  EXPECT_EQ(zero.belief_mean.values(), g.forward(z).mean.value().values());
}

TEST(Solver, InvariantsHoldAfterEveryStep) {
  const BlurredObservation obs = small_observation(16, 3);
  for (const char* mode : {"VDIP-Sparse", "VDIP-Extreme", "DIP"}) {
    const RunResult r = run(obs, small_config(10, mode));
    for (const LogEntry& e : r.log) {
      EXPECT_NEAR(e.kernel_sum, 1.0, 1e-6);
      EXPECT_NEAR(e.updated_kernel_sum, 1.0, 1e-6);
      EXPECT_GE(e.kernel_min, 0.0);
      EXPECT_GE(e.updated_kernel_min, 0.0);
      EXPECT_GT(e.std_min, 0.0);
      EXPECT_LE(e.std_max, 0.1);
      EXPECT_TRUE(std::isfinite(e.elbo.total));
    }
    EXPECT_EQ(r.image.shape(), (Shape{3, 16, 16}));
  }
}

TEST(Solver, LossImprovesOnSmallProblem) {
  const BlurredObservation obs = small_observation();
  RunConfig c = small_config(60);
  c.log_every = 59;
  const RunResult r = run(obs, c);
  ASSERT_EQ(r.log.size(), 2u);
  EXPECT_GT(r.log.back().elbo.data, r.log.front().elbo.data);
}

TEST(Solver, NonFiniteLossAborts) {
  const BlurredObservation obs = small_observation();
  RunConfig c = small_config(5);
  c.lr_image = 1e300;
  try {
    run(obs, c);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step "), std::string::npos) << e.what();
  }
}

TEST(Solver, RejectsIncompatibleObservation) {
  EXPECT_THROW(run(BlurredObservation{Tensor({16, 16}, 0.5), 0.02}, small_config(1)), DimensionError);
  EXPECT_THROW(run(BlurredObservation{Tensor({1, 8, 8}, 1.5), 0.02}, small_config(1)), ParameterError);
}

TEST(Solver, CheckpointWrittenAndReloadable) {
  const auto dir = std::filesystem::temp_directory_path() / "vdip_solver_ckpt";
  std::filesystem::create_directories(dir);
  RunConfig c = small_config(4);
  c.checkpoint_every = 2;
  c.checkpoint_path = dir / "run.ckpt";
  const BlurredObservation obs = small_observation();
  run(obs, c);
  ASSERT_TRUE(std::filesystem::exists(c.checkpoint_path));
  ImageGeneratorSpec spec = c.image_net;
  spec.image_channels = 1;
  ImageGenerator g(spec, 0);
  KernelGeneratorSpec ks = c.kernel_net;
  ks.kernel_height = ks.kernel_width = 5;
  KernelGenerator kg(ks, 0);
  const RunSeeds s = load_checkpoint(c.checkpoint_path, g.parameters(), kg.parameters());
  EXPECT_EQ(s.noise, c.seeds().noise);
  const RunResult r0 = run(obs, small_config(4));
  const NoiseInputs z = NoiseInputs::draw(spec.input_channels, 20, 20, ks.input_dim, s.noise);
  EXPECT_EQ(g.forward(z).mean.value().values(), r0.belief_mean.values());
  std::filesystem::remove_all(dir);
}

TEST(Solver, AblationSuiteHasSixRows) {
  const auto rows = ablation_suite(small_observation(), small_config(2));
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0].mode, "DIP");
  EXPECT_EQ(rows[5].mode, "VDIP-Extreme");
}

// Shrinking the std head makes the VDIP-Std objective at the shared
// initialisation differ from DIP only by its entropy and KL parts.
TEST(Solver, VdipStdApproachesDipAsStdVanishes) {
  const BlurredObservation obs = small_observation();
  const LogEntry dip = run(obs, small_config(1, "DIP")).log.front();
  double previous = std::numeric_limits<double>::infinity();
  for (double s_max : {1e-1, 1e-2, 1e-3, 1e-4}) {
    RunConfig c = small_config(1, "VDIP-Std");
    c.image_net.s_max = s_max;
    const LogEntry v = run(obs, c).log.front();
    const double gap = std::abs(v.elbo.total - v.elbo.image_entropy - v.elbo.kernel_kl - dip.elbo.total);
    EXPECT_LT(gap, previous) << s_max;
    previous = gap;
  }
  EXPECT_LT(previous / std::abs(dip.elbo.total), 1e-6);
}

TEST(Solver, LossCsvLayout) {
  const RunResult r = run(small_observation(), small_config(3));
  std::ostringstream os;
  write_loss_csv(os, r.log);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "step,kernel_kl,image_entropy,prior_x,prior_y,data,total,seconds");
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 7);
  }
  EXPECT_EQ(rows, 3);
}
