#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "vdip/elbo.hpp"
#include "vdip/generators.hpp"

namespace vdip {

/// Adam with constant learning rate over one parameter set.
class Adam {
 public:
  Adam(ParameterSet& params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step();
  long steps_taken() const { return t_; }

 private:
  ParameterSet* params_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

struct RunConfig {
  int steps = 5000;
  double lr_image = 1e-2;
  double lr_kernel = 1e-4;
  int samples = 1;  // A
  double sigma = 0.02;
  LossMode mode{};
  int kernel_height = 31;
  int kernel_width = 31;
  double kernel_std = 1.0;  // S(k)
  std::uint64_t seed = 0;
  int log_every = 1;
  int checkpoint_every = 0;  // 0 disables
  std::filesystem::path checkpoint_path;
  ImageGeneratorSpec image_net{};  // image_channels is taken from the observation
  KernelGeneratorSpec kernel_net{};  // kernel dims are taken from kernel_height/width
  ElboOptions elbo{};

  void validate() const;
  RunSeeds seeds() const;
};

struct LogEntry {
  int step = 0;
  ElboBreakdown elbo;
  double seconds = 0.0;
  // Invariants of the belief produced by this step's forward pass.
  double kernel_sum = 0.0;
  double kernel_min = 0.0;
  double std_min = 0.0;
  double std_max = 0.0;
  // Kernel re-generated right after this step's parameter update.
  double updated_kernel_sum = 0.0;
  double updated_kernel_min = 0.0;
};

struct RunResult {
  Tensor image;        // center M x N crop of the final mean
  Tensor kernel;       // final E(k)
  Tensor belief_mean;  // full latent mean
  Tensor belief_std;   // full latent std
  std::vector<LogEntry> log;
  std::vector<double> step_seconds;
  double total_seconds = 0.0;
};

enum class StepPhase { Forward, Xi, Sample, Assemble, Update };
std::string to_string(StepPhase p);

struct RunHooks {
  /// Called after each phase of every step, in execution order.
  std::function<void(int step, StepPhase phase)> on_phase;
  /// Called for each log entry as it is produced.
  std::function<void(const LogEntry&)> on_log;
};

/// Optimises both generators on one observation for config.steps iterations.
RunResult run(const BlurredObservation& obs, const RunConfig& config, const RunHooks& hooks = {});

struct AblationRow {
  std::string mode;
  RunResult result;
};

/// Runs every ablation mode (DIP, DIP-Sparse, DIP-Extreme, VDIP-Std,
/// VDIP-Sparse, VDIP-Extreme) with the seeds of base_config.
std::vector<AblationRow> ablation_suite(const BlurredObservation& obs, const RunConfig& base_config,
                                        const RunHooks& hooks = {});

/// CSV: step,kernel_kl,image_entropy,prior_x,prior_y,data,total,seconds
void write_loss_csv(std::ostream& os, const std::vector<LogEntry>& log);

}  // namespace vdip
