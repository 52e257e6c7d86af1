#include "vdip/solver.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "vdip/error.hpp"

namespace vdip {

Adam::Adam(ParameterSet& params, double lr, double beta1, double beta2, double eps)
    : params_(&params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params.items()) {
    m_.emplace_back(p.var.shape());
    v_.emplace_back(p.var.shape());
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto& items = params_->items();
  for (std::size_t k = 0; k < items.size(); ++k) {
    ad::Var& p = items[k].var;
    if (!p.has_grad()) continue;
    const Tensor g = p.grad();
    Tensor& w = p.mutable_value();
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

void RunConfig::validate() const {
  if (steps < 0) throw ParameterError("steps must be >= 0");
  if (!(lr_image > 0.0) || !(lr_kernel > 0.0)) throw ParameterError("learning rates must be positive");
  if (samples < 1) throw ParameterError("samples must be >= 1");
  if (!(sigma > 0.0)) throw ParameterError("sigma must be positive");
  if (kernel_height < 1 || kernel_width < 1) throw ParameterError("kernel size must be positive");
  if (!(kernel_std > 0.0)) throw ParameterError("kernel std must be positive");
  if (log_every < 1) throw ParameterError("log_every must be >= 1");
  if (checkpoint_every < 0) throw ParameterError("checkpoint_every must be >= 0");
  if (checkpoint_every > 0 && checkpoint_path.empty()) throw ParameterError("checkpoint path missing");
  if (mode.prior.patch_radius < 0) throw ParameterError("patch radius must be >= 0");
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string describe(const ad::Var& v) {
  if (!v.defined()) return "n/a";
  std::ostringstream os;
  os << scalar(v);
  return os.str();
}

}  // namespace

RunSeeds RunConfig::seeds() const {
  return RunSeeds{splitmix(seed * 3 + 0), splitmix(seed * 3 + 1), splitmix(seed * 3 + 2)};
}

std::string to_string(StepPhase p) {
  switch (p) {
    case StepPhase::Forward: return "forward";
    case StepPhase::Xi: return "xi";
    case StepPhase::Sample: return "sample";
    case StepPhase::Assemble: return "assemble";
    case StepPhase::Update: return "update";
  }
  return "?";
}

RunResult run(const BlurredObservation& obs_in, const RunConfig& config, const RunHooks& hooks) {
  config.validate();
  if (obs_in.image.rank() != 3) throw DimensionError("observation must be C x M x N");
  BlurredObservation obs{obs_in.image, config.sigma};
  obs.validate();

  const int C = obs.image.dim(0), M = obs.image.dim(1), N = obs.image.dim(2);
  const int Mp = M + config.kernel_height - 1, Np = N + config.kernel_width - 1;

  ImageGeneratorSpec ispec = config.image_net;
  ispec.image_channels = C;
  KernelGeneratorSpec kspec = config.kernel_net;
  kspec.kernel_height = config.kernel_height;
  kspec.kernel_width = config.kernel_width;

  const RunSeeds seeds = config.seeds();
  ImageGenerator image_gen(ispec, seeds.parameters);
  KernelGenerator kernel_gen(kspec, splitmix(seeds.parameters));
  const NoiseInputs z = NoiseInputs::draw(ispec.input_channels, Mp, Np, kspec.input_dim, seeds.noise);
  Rng rng(seeds.sampling);
  Adam image_opt(image_gen.parameters(), config.lr_image);
  Adam kernel_opt(kernel_gen.parameters(), config.lr_kernel);

  auto phase = [&](int t, StepPhase p) {
    if (hooks.on_phase) hooks.on_phase(t, p);
  };

  RunResult result;
  const auto run_start = std::chrono::steady_clock::now();
  for (int t = 1; t <= config.steps; ++t) {
    const auto step_start = std::chrono::steady_clock::now();

    // 1. generators
    const SharpImageBelief belief = image_gen.forward(z);
    const KernelBelief kernel = kernel_gen.forward(z, config.kernel_std);
    phase(t, StepPhase::Forward);

    // 2. penalty weights from the current belief, detached
    const SharpImageBelief used = effective_belief(config.mode, belief);
    ElboTerms terms;
    PriorMoments moments;
    XiField xi;
    if (config.mode.prior.type != PriorType::None) {
      moments = prior_moments(used, config.mode.prior, config.samples, rng, config.elbo.complement);
      xi = xi_from_moments(moments, config.elbo.v_floor);
    }
    phase(t, StepPhase::Xi);

    // 3. sampled data term
    terms.data = data_term(obs, used, kernel, config.mode.variational ? config.samples : 1, rng);
    phase(t, StepPhase::Sample);

    // 4. lower bound
    if (config.mode.prior.type != PriorType::None) std::tie(terms.prior_x, terms.prior_y) = prior_terms(moments, xi);
    if (config.mode.variational && config.mode.include_entropy_and_kl) {
      terms.kernel_kl = kernel_kl_term(kernel);
      terms.image_entropy = image_entropy_term(used, config.elbo.entropy_floor);
    }
    LossValue value;
    try {
      value = assemble_loss(terms);
    } catch (const NumericError& e) {
      std::ostringstream os;
      os << "step " << t << ": " << e.what() << " (kernel_kl=" << describe(terms.kernel_kl)
         << ", image_entropy=" << describe(terms.image_entropy) << ", prior_x=" << describe(terms.prior_x)
         << ", prior_y=" << describe(terms.prior_y) << ", data=" << describe(terms.data) << ")";
      throw NumericError(os.str());
    }
    phase(t, StepPhase::Assemble);

    // 5. one backward pass, both generators updated
    image_gen.parameters().zero_grad();
    kernel_gen.parameters().zero_grad();
    value.loss.backward();
    image_opt.step();
    kernel_opt.step();
    if (!image_gen.parameters().all_finite() || !kernel_gen.parameters().all_finite()) {
      throw NumericError("step " + std::to_string(t) + ": parameters became non-finite");
    }
    phase(t, StepPhase::Update);

    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - step_start).count();
    result.step_seconds.push_back(seconds);
    if ((t - 1) % config.log_every == 0) {
      LogEntry e;
      e.step = t;
      e.elbo = value.breakdown;
      e.seconds = seconds;
      e.kernel_sum = kernel.mean.value().sum();
      e.kernel_min = kernel.mean.value().min();
      e.std_min = belief.std.value().min();
      e.std_max = belief.std.value().max();
      const Tensor updated = kernel_gen.forward(z, config.kernel_std).mean.value();
      e.updated_kernel_sum = updated.sum();
      e.updated_kernel_min = updated.min();
      result.log.push_back(e);
      if (hooks.on_log) hooks.on_log(e);
    }
    if (config.checkpoint_every > 0 && t % config.checkpoint_every == 0) {
      save_checkpoint(config.checkpoint_path, image_gen.parameters(), kernel_gen.parameters(), seeds);
    }
  }

  const SharpImageBelief final_belief = image_gen.forward(z);
  const KernelBelief final_kernel = kernel_gen.forward(z, config.kernel_std);
  result.belief_mean = final_belief.mean.value();
  result.belief_std = final_belief.std.value();
  result.kernel = final_kernel.mean.value();
  result.image = center_crop(result.belief_mean, M, N);
  result.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - run_start).count();
  if (config.checkpoint_every > 0) {
    save_checkpoint(config.checkpoint_path, image_gen.parameters(), kernel_gen.parameters(), seeds);
  }
  return result;
}

std::vector<AblationRow> ablation_suite(const BlurredObservation& obs, const RunConfig& base_config,
                                        const RunHooks& hooks) {
  std::vector<AblationRow> rows;
  for (const LossMode& mode : LossMode::ablation_modes(base_config.mode.prior.patch_radius)) {
    RunConfig cfg = base_config;
    cfg.mode = mode;
    rows.push_back(AblationRow{mode.name(), run(obs, cfg, hooks)});
  }
  return rows;
}

void write_loss_csv(std::ostream& os, const std::vector<LogEntry>& log) {
  os << "step,kernel_kl,image_entropy,prior_x,prior_y,data,total,seconds\n";
  os << std::setprecision(10);
  for (const LogEntry& e : log) {
    os << e.step << ',' << e.elbo.kernel_kl << ',' << e.elbo.image_entropy << ',' << e.elbo.prior_x << ','
       << e.elbo.prior_y << ',' << e.elbo.data << ',' << e.elbo.total << ',' << e.seconds << '\n';
  }
}

}  // namespace vdip
