#include "vdip/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "vdip/error.hpp"
#include "vdip/imaging.hpp"
#include "vdip/solver.hpp"

namespace fs = std::filesystem;

namespace vdip::cli {

std::pair<int, int> parse_size(const std::string& text, bool require_odd) {
  auto to_int = [&](const std::string& s) {
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); })) {
      throw ParameterError("invalid size '" + text + "' (expected HxW)");
    }
    return std::stoi(s);
  };
  const auto x = text.find_first_of("xX");
  const int h = to_int(text.substr(0, x));
  const int w = x == std::string::npos ? h : to_int(text.substr(x + 1));
  if (h < 1 || w < 1) throw ParameterError("size must be positive: '" + text + "'");
  if (require_odd && (h % 2 == 0 || w % 2 == 0)) {
    throw ParameterError("kernel size must be odd in both dimensions: '" + text + "'");
  }
  return {h, w};
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config file " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParameterError(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    while (!key.empty() && key.front() == '-') key.erase(key.begin());
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

namespace {

// ---- option groups --------------------------------------------------------

struct RunFlags {
  std::string kernel_size = "31x31";
  std::string prior = "sparse";
  std::string variational = "on";
  int steps = 5000;
  double lr_image = 1e-2;
  double lr_kernel = 1e-4;
  int samples = 1;
  double sigma = 0.02;
  std::uint64_t seed = 0;
  int log_every = 1;
  int channels = 128;
  int scales = 5;
  int skip_channels = 16;
  int input_channels = 8;
  double s_max = 0.1;
  int hidden = 1000;
  int kernel_input = 200;
  double kernel_std = 1.0;
  int patch_radius = 17;
  std::string complement = "consistent";
  int checkpoint_every = 0;
};

bool parse_on_off(const std::string& v, const char* flag) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ParameterError(std::string("--") + flag + " expects on or off, got '" + v + "'");
}

void add_run_options(CLI::App* app, RunFlags& f) {
  app->add_option("--kernel-size", f.kernel_size, "Kernel support HxW, odd sides")->capture_default_str();
  app->add_option("--prior", f.prior, "Image prior: none, sparse or extreme")->capture_default_str();
  app->add_option("--variational", f.variational, "on: VDIP lower bound, off: DIP objective")
      ->capture_default_str();
  app->add_option("--steps", f.steps, "Optimisation steps T")->capture_default_str();
  app->add_option("--lr-image", f.lr_image, "Image generator learning rate")->capture_default_str();
  app->add_option("--lr-kernel", f.lr_kernel, "Kernel generator learning rate")->capture_default_str();
  app->add_option("--samples", f.samples, "Monte Carlo samples A per step")->capture_default_str();
  app->add_option("--sigma", f.sigma, "Noise level in the data term")->capture_default_str();
  app->add_option("--seed", f.seed, "Master seed")->capture_default_str();
  app->add_option("--log-every", f.log_every, "Log interval in steps")->capture_default_str();
  app->add_option("--channels", f.channels, "Image generator channels per scale")->capture_default_str();
  app->add_option("--scales", f.scales, "Image generator scales")->capture_default_str();
  app->add_option("--skip-channels", f.skip_channels, "Skip connection channels")->capture_default_str();
  app->add_option("--input-channels", f.input_channels, "Channels of the noise input")->capture_default_str();
  app->add_option("--s-max", f.s_max, "Upper bound of the std head")->capture_default_str();
  app->add_option("--kernel-hidden", f.hidden, "Kernel generator hidden units")->capture_default_str();
  app->add_option("--kernel-input", f.kernel_input, "Kernel generator input length")->capture_default_str();
  app->add_option("--kernel-std", f.kernel_std, "Constant kernel std S(k)")->capture_default_str();
  app->add_option("--patch-radius", f.patch_radius, "Extreme-channel window half-width")->capture_default_str();
  app->add_option("--complement", f.complement, "consistent or printed complement std")->capture_default_str();
  app->add_option("--checkpoint-every", f.checkpoint_every, "Checkpoint interval, 0 disables")
      ->capture_default_str();
}

LossMode mode_of(const RunFlags& f) {
  LossMode m;
  m.variational = parse_on_off(f.variational, "variational");
  m.prior = PriorKind{parse_prior_type(f.prior), f.patch_radius};
  return m;
}

RunConfig make_config(const RunFlags& f) {
  RunConfig c;
  c.steps = f.steps;
  c.lr_image = f.lr_image;
  c.lr_kernel = f.lr_kernel;
  c.samples = f.samples;
  c.sigma = f.sigma;
  c.mode = mode_of(f);
  std::tie(c.kernel_height, c.kernel_width) = parse_size(f.kernel_size, true);
  c.kernel_std = f.kernel_std;
  c.seed = f.seed;
  c.log_every = f.log_every;
  c.checkpoint_every = f.checkpoint_every;
  c.image_net.channels_per_scale = f.channels;
  c.image_net.scales = f.scales;
  c.image_net.skip_channels = f.skip_channels;
  c.image_net.input_channels = f.input_channels;
  c.image_net.s_max = f.s_max;
  c.kernel_net.hidden_dim = f.hidden;
  c.kernel_net.input_dim = f.kernel_input;
  if (f.complement == "consistent") c.elbo.complement = ComplementVariant::Consistent;
  else if (f.complement == "printed") c.elbo.complement = ComplementVariant::Printed;
  else throw ParameterError("--complement expects consistent or printed, got '" + f.complement + "'");
  c.validate();
  return c;
}

void write_run_flags(std::ostream& os, const RunFlags& f) {
  os << std::setprecision(17);
  os << "kernel-size = " << f.kernel_size << "\nprior = " << f.prior << "\nvariational = " << f.variational
     << "\nsteps = " << f.steps << "\nlr-image = " << f.lr_image << "\nlr-kernel = " << f.lr_kernel
     << "\nsamples = " << f.samples << "\nsigma = " << f.sigma << "\nseed = " << f.seed
     << "\nlog-every = " << f.log_every << "\nchannels = " << f.channels << "\nscales = " << f.scales
     << "\nskip-channels = " << f.skip_channels << "\ninput-channels = " << f.input_channels
     << "\ns-max = " << f.s_max << "\nkernel-hidden = " << f.hidden << "\nkernel-input = " << f.kernel_input
     << "\nkernel-std = " << f.kernel_std << "\npatch-radius = " << f.patch_radius
     << "\ncomplement = " << f.complement << "\ncheckpoint-every = " << f.checkpoint_every << '\n';
}

// Name used to pair a run with its ground truth: the input stem, or the
// parent directory for files called blurred.png as written by synthesize.
std::string default_name(const fs::path& input) {
  if (input.stem() == "blurred" && input.has_parent_path() && !input.parent_path().filename().empty()) {
    return input.parent_path().filename().string();
  }
  return input.stem().string();
}

struct Reference {
  std::string sharp;
  std::string kernel;
};

EvalRecord evaluate_run(const std::string& name, const std::string& mode, const RunResult& r,
                        const Reference& ref) {
  EvalRecord e;
  e.image = name;
  e.mode = mode;
  e.runtime_seconds = r.total_seconds;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  e.psnr = e.ssim = e.kernel_error = nan;
  if (!ref.sharp.empty()) {
    const AlignedScore s = aligned_score(r.image, load_image(ref.sharp));
    e.psnr = s.psnr;
    e.ssim = s.ssim;
  }
  if (!ref.kernel.empty()) e.kernel_error = kernel_recovery_error(r.kernel, load_kernel(ref.kernel));
  return e;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw IoError("cannot write " + p.string());
  return os;
}

void write_run_dir(const fs::path& dir, const RunResult& r, const EvalRecord& e, const RunFlags& flags,
                   const std::string& input, const Reference& ref, const std::string& name) {
  fs::create_directories(dir);
  save_image(dir / "image.png", r.image);
  save_kernel(dir / "kernel.txt", r.kernel);
  save_kernel_png(dir / "kernel.png", r.kernel);
  {
    auto os = open_out(dir / "loss.csv");
    write_loss_csv(os, r.log);
  }
  {
    auto os = open_out(dir / "config.txt");
    os << "# vdip deblur configuration; rerun with --config this-file --out <dir>\n";
    os << "input = " << input << "\nname = " << name << '\n';
    if (!ref.sharp.empty()) os << "sharp = " << ref.sharp << '\n';
    if (!ref.kernel.empty()) os << "kernel = " << ref.kernel << '\n';
    write_run_flags(os, flags);
  }
  {
    auto os = open_out(dir / "eval.csv");
    write_eval_csv(os, {e});
  }
}

RunHooks progress(std::ostream& out, const std::string& tag) {
  RunHooks h;
  h.on_log = [&out, tag](const LogEntry& e) {
    out << tag << "step " << e.step << "  lower bound " << std::setprecision(8) << e.elbo.total << "  data "
        << e.elbo.data << "  prior " << e.elbo.prior_x + e.elbo.prior_y << "  " << std::setprecision(3)
        << e.seconds << " s\n";
  };
  return h;
}

std::string fmt_metric(double v) {
  if (std::isnan(v)) return "n/a";
  if (std::isinf(v)) return "inf";
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

// ---- deblur ----------------------------------------------------------------

struct DeblurArgs {
  std::string input, out, name, sharp, kernel;
  RunFlags run;
};

int cmd_deblur(const DeblurArgs& a, std::ostream& out) {
  const RunConfig cfg = make_config(a.run);
  BlurredObservation obs{load_image(a.input), cfg.sigma};
  const std::string name = a.name.empty() ? default_name(a.input) : a.name;
  RunConfig c = cfg;
  if (c.checkpoint_every > 0) {
    fs::create_directories(a.out);
    c.checkpoint_path = fs::path(a.out) / "checkpoint.bin";
  }
  const RunResult r = run(obs, c, progress(out, ""));
  const Reference ref{a.sharp, a.kernel};
  const EvalRecord e = evaluate_run(name, c.mode.name(), r, ref);
  write_run_dir(a.out, r, e, a.run, a.input, ref, name);
  out << "wrote " << a.out << "  (" << c.mode.name() << ", " << r.total_seconds << " s";
  if (!std::isnan(e.psnr)) out << ", PSNR " << fmt_metric(e.psnr) << " dB, SSIM " << fmt_metric(e.ssim);
  if (!std::isnan(e.kernel_error)) out << ", kernel error " << e.kernel_error;
  out << ")\n";
  return 0;
}

// ---- ablate ----------------------------------------------------------------

struct AblateArgs {
  DeblurArgs base;
  std::string modes = "DIP,DIP-Sparse,DIP-Extreme,VDIP-Std,VDIP-Sparse,VDIP-Extreme";
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
  const RunConfig base = make_config(a.base.run);
  const BlurredObservation obs{load_image(a.base.input), base.sigma};
  const std::string name = a.base.name.empty() ? default_name(a.base.input) : a.base.name;
  const Reference ref{a.base.sharp, a.base.kernel};
  std::vector<EvalRecord> records;
  for (const std::string& mode_name : split_list(a.modes)) {
    RunConfig c = base;
    c.mode = LossMode::parse(mode_name, a.base.run.patch_radius);
    RunFlags flags = a.base.run;
    flags.variational = c.mode.variational ? "on" : "off";
    flags.prior = to_string(c.mode.prior.type);
    const fs::path dir = fs::path(a.base.out) / mode_name;
    if (c.checkpoint_every > 0) {
      fs::create_directories(dir);
      c.checkpoint_path = dir / "checkpoint.bin";
    }
    const RunResult r = run(obs, c, progress(out, "[" + mode_name + "] "));
    records.push_back(evaluate_run(name, mode_name, r, ref));
    write_run_dir(dir, r, records.back(), flags, a.base.input, ref, name);
  }
  auto os = open_out(fs::path(a.base.out) / "ablation.csv");
  write_eval_csv(os, records);
  out << std::left << std::setw(14) << "mode" << std::setw(10) << "PSNR" << std::setw(10) << "SSIM"
      << std::setw(14) << "kernel err" << "seconds\n";
  for (const auto& e : records) {
    out << std::setw(14) << e.mode << std::setw(10) << fmt_metric(e.psnr) << std::setw(10) << fmt_metric(e.ssim)
        << std::setw(14) << fmt_metric(e.kernel_error) << std::setprecision(4) << e.runtime_seconds << '\n';
  }
  return 0;
}

// ---- synthesize -------------------------------------------------------------

struct SynthArgs {
  std::string sharp, kernel, out;
  std::string size = "64x64";
  int channels = 1;
  std::string kernel_type = "motion";
  std::string kernel_size = "9x9";
  double motion_length = 7.0;
  double motion_angle = 30.0;
  int walk_steps = 16;
  double sigma = 0.01;
  std::uint64_t seed = 0;
};

Tensor quantize(Tensor t) {
  for (double& v : t.data()) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  return t;
}

int cmd_synthesize(const SynthArgs& a, std::ostream& out) {
  if (a.sigma < 0.0) throw ParameterError("--sigma must be >= 0");
  Tensor kernel;
  if (!a.kernel.empty()) {
    kernel = load_kernel(a.kernel);
    if (kernel.min() < 0.0) throw ParameterError("kernel " + a.kernel + " has negative entries");
    kernel = normalize_kernel(kernel);
  } else {
    const auto [kh, kw] = parse_size(a.kernel_size, true);
    if (a.kernel_type == "motion") {
      kernel = linear_motion_kernel(kh, kw, a.motion_length, a.motion_angle * std::numbers::pi / 180.0);
    } else if (a.kernel_type == "random-walk") {
      kernel = random_walk_kernel(kh, kw, a.walk_steps, a.seed + 1);
    } else if (a.kernel_type == "delta") {
      kernel = Tensor({kh, kw});
      kernel.at(kh / 2, kw / 2) = 1.0;
    } else {
      throw ParameterError("--kernel-type expects motion, random-walk or delta, got '" + a.kernel_type + "'");
    }
  }
  Tensor sharp;
  if (!a.sharp.empty()) {
    sharp = load_image(a.sharp);
  } else {
    const auto [m, n] = parse_size(a.size, false);
    if (a.channels != 1 && a.channels != 3) throw ParameterError("--channels must be 1 or 3");
    sharp = quantize(synthetic_scene(a.channels, m + kernel.dim(0) - 1, n + kernel.dim(1) - 1, a.seed));
  }
  const BlurredObservation obs = degrade(sharp, kernel, a.sigma, a.seed + 2);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  save_image(dir / "blurred.png", obs.image);
  save_image(dir / "sharp.png", sharp);
  save_kernel(dir / "kernel.txt", kernel);
  save_kernel_png(dir / "kernel.png", kernel);
  {
    auto os = open_out(dir / "synthesis.txt");
    os << std::setprecision(17) << "sigma = " << a.sigma << "\nseed = " << a.seed << "\nkernel-size = "
       << kernel.dim(0) << 'x' << kernel.dim(1) << '\n';
    if (a.kernel.empty()) os << "kernel-type = " << a.kernel_type << '\n';
  }
  out << "wrote " << dir.string() << ": blurred " << obs.image.dim(1) << 'x' << obs.image.dim(2) << ", kernel "
      << kernel.dim(0) << 'x' << kernel.dim(1) << ", blurred PSNR "
      << fmt_metric(aligned_score(obs.image, sharp).psnr) << " dB\n";
  return 0;
}

// ---- evaluate ---------------------------------------------------------------

struct EvalArgs {
  std::string results, truth, out;
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string c;
  while (std::getline(ss, c, ',')) cells.push_back(trim(c));
  return cells;
}

int cmd_evaluate(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  if (!fs::is_directory(a.results)) throw IoError("results directory not found: " + a.results);
  if (!fs::is_directory(a.truth)) throw IoError("truth directory not found: " + a.truth);
  struct RunDir {
    fs::path dir;
    std::string name, mode;
    double seconds = 0.0;
  };
  std::vector<RunDir> runs;
  for (const auto& entry : fs::recursive_directory_iterator(a.results)) {
    if (!entry.is_regular_file() || entry.path().filename() != "eval.csv") continue;
    const fs::path dir = entry.path().parent_path();
    if (!fs::exists(dir / "image.png") || !fs::exists(dir / "kernel.txt")) continue;
    std::ifstream is(entry.path());
    std::string header, row;
    std::getline(is, header);
    if (!std::getline(is, row)) continue;
    const auto cells = split_csv_line(row);
    if (cells.size() < 6) throw IoError("malformed " + entry.path().string());
    runs.push_back(RunDir{dir, cells[0], cells[1], std::strtod(cells[5].c_str(), nullptr)});
  }
  std::sort(runs.begin(), runs.end(), [](const RunDir& x, const RunDir& y) {
    return std::tie(x.name, x.mode, x.dir) < std::tie(y.name, y.mode, y.dir);
  });
  if (runs.empty()) throw IoError("no result directories under " + a.results);

  std::set<std::string> truth_names;
  for (const auto& entry : fs::directory_iterator(a.truth)) {
    if (entry.is_directory() && fs::exists(entry.path() / "sharp.png") && fs::exists(entry.path() / "kernel.txt")) {
      truth_names.insert(entry.path().filename().string());
    }
  }
  std::vector<std::string> missing;
  std::set<std::string> used;
  for (const auto& r : runs) {
    if (truth_names.count(r.name)) used.insert(r.name);
    else missing.push_back("result " + r.dir.string() + " has no ground truth " +
                           (fs::path(a.truth) / r.name).string() + "/{sharp.png,kernel.txt}");
  }
  for (const auto& t : truth_names)
    if (!used.count(t)) missing.push_back("ground truth " + t + " has no result");
  if (!missing.empty()) {
    err << "error: mismatched result and ground-truth sets:\n";
    for (const auto& m : missing) err << "  " << m << '\n';
    return 1;
  }

  std::vector<EvalRecord> records;
  for (const auto& r : runs) {
    const fs::path tdir = fs::path(a.truth) / r.name;
    const Tensor image = load_image(r.dir / "image.png");
    const AlignedScore s = aligned_score(image, load_image(tdir / "sharp.png"));
    EvalRecord e{r.name, r.mode, s.psnr, s.ssim,
                 kernel_recovery_error(load_kernel(r.dir / "kernel.txt"), load_kernel(tdir / "kernel.txt")),
                 r.seconds};
    records.push_back(e);
  }
  if (a.out.empty()) {
    write_eval_csv(out, records);
  } else {
    auto os = open_out(a.out);
    write_eval_csv(os, records);
  }
  std::map<std::string, std::vector<const EvalRecord*>> by_mode;
  for (const auto& e : records) by_mode[e.mode].push_back(&e);
  std::ostream& summary = a.out.empty() ? err : out;
  summary << "mode            n   mean PSNR  mean SSIM  mean kernel err\n";
  for (const auto& [mode, es] : by_mode) {
    double p = 0, s = 0, k = 0;
    for (const auto* e : es) {
      p += e->psnr;
      s += e->ssim;
      k += e->kernel_error;
    }
    const double n = static_cast<double>(es.size());
    summary << std::left << std::setw(14) << mode << std::right << std::setw(3) << es.size() << std::setw(11)
            << fmt_metric(p / n) << std::setw(11) << fmt_metric(s / n) << std::setw(17) << fmt_metric(k / n)
            << '\n';
  }
  return 0;
}

// ---- bench-timing -----------------------------------------------------------

struct BenchArgs {
  std::string image_sizes = "128,256,384,512";
  std::string kernel_sizes = "11,21,31";
  int image_side = 128;
  int kernel_side = 31;
  std::string out;
  RunFlags run;
};

struct TimingRow {
  std::string sweep;
  int image_side, kernel_side;
  double seconds;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void draw_line(Tensor& img, double x0, double y0, double x1, double y1, double value) {
  const int n = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    if (y >= 0 && y < img.dim(1) && x >= 0 && x < img.dim(2)) img.at(0, y, x) = value;
  }
}

// One panel per sweep: seconds per step against side length, both axes from zero.
void plot_timing(const fs::path& path, const std::vector<TimingRow>& rows) {
  const int panel_w = 320, h = 240, margin = 24;
  std::vector<std::string> sweeps;
  for (const auto& r : rows)
    if (std::find(sweeps.begin(), sweeps.end(), r.sweep) == sweeps.end()) sweeps.push_back(r.sweep);
  const int panels = std::max<int>(1, static_cast<int>(sweeps.size()));
  Tensor img({1, h, panel_w * panels}, 1.0);
  for (int p = 0; p < static_cast<int>(sweeps.size()); ++p) {
    std::vector<const TimingRow*> pts;
    for (const auto& r : rows)
      if (r.sweep == sweeps[p]) pts.push_back(&r);
    double xmax = 0, ymax = 0;
    for (const auto* r : pts) {
      xmax = std::max<double>(xmax, r->sweep == "image" ? r->image_side : r->kernel_side);
      ymax = std::max(ymax, r->seconds);
    }
    const double ox = p * panel_w + margin, oy = h - margin;
    const double sx = (panel_w - 2 * margin) / std::max(xmax, 1.0), sy = (h - 2 * margin) / std::max(ymax, 1e-12);
    draw_line(img, ox, oy, ox + panel_w - 2 * margin, oy, 0.0);
    draw_line(img, ox, oy, ox, margin, 0.0);
    double px = ox, py = oy;
    bool first = true;
    for (const auto* r : pts) {
      const double x = ox + sx * (r->sweep == "image" ? r->image_side : r->kernel_side);
      const double y = oy - sy * r->seconds;
      if (!first) draw_line(img, px, py, x, y, 0.35);
      for (int d = -2; d <= 2; ++d) {
        draw_line(img, x - 2, y + d, x + 2, y + d, 0.0);
      }
      draw_line(img, x, oy, x, oy + 4, 0.0);
      px = x;
      py = y;
      first = false;
    }
  }
  save_image(path, img);
}

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  RunConfig base = make_config(a.run);
  std::vector<TimingRow> rows;
  auto measure = [&](const std::string& sweep, int side, int kside) {
    RunConfig c = base;
    c.kernel_height = c.kernel_width = kside;
    c.log_every = std::max(1, c.steps);
    const Tensor sharp = synthetic_scene(1, side + kside - 1, side + kside - 1, c.seed);
    const Tensor k = linear_motion_kernel(kside, kside, 0.6 * kside, 0.5);
    const BlurredObservation obs = degrade(sharp, k, c.sigma, c.seed + 1);
    const RunResult r = run(obs, c);
    rows.push_back(TimingRow{sweep, side, kside, median(r.step_seconds)});
    out << sweep << " sweep: image " << side << ", kernel " << kside << ": " << std::setprecision(4)
        << rows.back().seconds << " s/step\n";
  };
  if (base.steps < 1) throw ParameterError("bench-timing needs --steps >= 1");
  for (const auto& s : split_list(a.image_sizes)) measure("image", parse_size(s, false).first, a.kernel_side);
  for (const auto& s : split_list(a.kernel_sizes)) measure("kernel", a.image_side, parse_size(s, true).first);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  {
    auto os = open_out(dir / "timing.csv");
    os << "sweep,image_side,kernel_side,seconds_per_step\n" << std::setprecision(8);
    for (const auto& r : rows) os << r.sweep << ',' << r.image_side << ',' << r.kernel_side << ',' << r.seconds << '\n';
  }
  plot_timing(dir / "timing.png", rows);
  out << "wrote " << (dir / "timing.csv").string() << " and " << (dir / "timing.png").string() << '\n';
  return 0;
}

// ---- argument layering --------------------------------------------------------

std::string env_name(const std::string& flag) {
  std::string n = kEnvPrefix;
  for (char c : flag) n += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return n;
}

// Finds "--config <path>" or "--config=<path>" among the user arguments.
std::string find_config(const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) {
    if (const char* e = std::getenv(env_name("config").c_str())) path = e;
  }
  return path;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Blind deconvolution with a variational deep image prior", "vdip"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;

  DeblurArgs deblur;
  auto* d = app.add_subcommand("deblur", "Estimate a sharp image and kernel from one blurred image");
  d->add_option("--input", deblur.input, "Blurred PNG")->required();
  d->add_option("--out", deblur.out, "Output directory")->required();
  d->add_option("--name", deblur.name, "Image name used for evaluation pairing");
  d->add_option("--sharp", deblur.sharp, "Optional ground-truth sharp PNG for eval.csv");
  d->add_option("--kernel", deblur.kernel, "Optional ground-truth kernel text file for eval.csv");
  add_run_options(d, deblur.run);

  AblateArgs ablate;
  auto* ab = app.add_subcommand("ablate", "Run every objective variant on one image");
  ab->add_option("--input", ablate.base.input, "Blurred PNG")->required();
  ab->add_option("--out", ablate.base.out, "Output directory, one subdirectory per mode")->required();
  ab->add_option("--name", ablate.base.name, "Image name used for evaluation pairing");
  ab->add_option("--sharp", ablate.base.sharp, "Optional ground-truth sharp PNG");
  ab->add_option("--kernel", ablate.base.kernel, "Optional ground-truth kernel text file");
  ab->add_option("--modes", ablate.modes, "Comma separated mode list")->capture_default_str();
  add_run_options(ab, ablate.base.run);

  SynthArgs synth;
  auto* sy = app.add_subcommand("synthesize", "Build a blurred test instance with ground truth");
  sy->add_option("--sharp", synth.sharp, "Sharp PNG; a synthetic scene is drawn when omitted");
  sy->add_option("--kernel", synth.kernel, "Kernel text file; a built-in kernel is used when omitted");
  sy->add_option("--out", synth.out, "Output directory")->required();
  sy->add_option("--size", synth.size, "Blurred image size HxW for synthetic scenes")->capture_default_str();
  sy->add_option("--channels", synth.channels, "1 or 3 channels for synthetic scenes")->capture_default_str();
  sy->add_option("--kernel-type", synth.kernel_type, "motion, random-walk or delta")->capture_default_str();
  sy->add_option("--kernel-size", synth.kernel_size, "Built-in kernel size HxW, odd")->capture_default_str();
  sy->add_option("--motion-length", synth.motion_length, "Motion blur length in pixels")->capture_default_str();
  sy->add_option("--motion-angle", synth.motion_angle, "Motion blur angle in degrees")->capture_default_str();
  sy->add_option("--walk-steps", synth.walk_steps, "Random-walk kernel steps")->capture_default_str();
  sy->add_option("--sigma", synth.sigma, "Gaussian noise std")->capture_default_str();
  sy->add_option("--seed", synth.seed, "Seed for scene, kernel and noise")->capture_default_str();

  EvalArgs eval;
  auto* ev = app.add_subcommand("evaluate", "Score result directories against ground truth");
  ev->add_option("--results", eval.results, "Directory tree holding deblur/ablate outputs")->required();
  ev->add_option("--truth", eval.truth, "Directory of <name>/sharp.png and <name>/kernel.txt")->required();
  ev->add_option("--out", eval.out, "CSV path; stdout when omitted");

  BenchArgs bench;
  bench.run.steps = 3;
  auto* be = app.add_subcommand("bench-timing", "Seconds per step against image and kernel size");
  be->add_option("--image-sizes", bench.image_sizes, "Image sides for the image sweep")->capture_default_str();
  be->add_option("--kernel-sizes", bench.kernel_sizes, "Kernel sides for the kernel sweep")->capture_default_str();
  be->add_option("--image-side", bench.image_side, "Image side during the kernel sweep")->capture_default_str();
  be->add_option("--kernel-side", bench.kernel_side, "Kernel side during the image sweep")->capture_default_str();
  be->add_option("--out", bench.out, "Output directory")->required();
  add_run_options(be, bench.run);

  for (auto* sub : app.get_subcommands({})) sub->add_option("--config", config_path, "Flat key = value file");

  // Layer config-file and environment values ahead of the user's flags; with
  // TakeLast the rightmost occurrence wins.
  std::vector<std::string> argv_full{"vdip"};
  try {
    const auto sub_it = std::find_if(args.begin(), args.end(), [](const std::string& s) { return !s.empty() && s[0] != '-'; });
    CLI::App* sub = nullptr;
    if (sub_it != args.end()) {
      for (auto* s : app.get_subcommands({}))
        if (s->get_name() == *sub_it) sub = s;
    }
    if (sub != nullptr) {
      std::map<std::string, std::string> layered;
      std::set<std::string> known;
      for (const CLI::Option* opt : sub->get_options()) {
        if (!opt->get_lnames().empty()) known.insert(opt->get_lnames().front());
      }
      const std::string cfg = find_config(args);
      if (!cfg.empty()) {
        for (const auto& [k, v] : read_config_file(cfg)) {
          if (!known.count(k) || k == "config") {
            throw ParameterError("unknown key '" + k + "' in config file " + cfg + " for " + sub->get_name());
          }
          layered[k] = v;
        }
      }
      std::vector<std::string> injected;
      for (const auto& k : known) {
        if (k == "config" || k == "help") continue;
        if (const char* e = std::getenv(env_name(k).c_str())) layered[k] = e;
      }
      argv_full.insert(argv_full.end(), args.begin(), sub_it + 1);
      for (const auto& [k, v] : layered) argv_full.push_back("--" + k + "=" + v);
      argv_full.insert(argv_full.end(), sub_it + 1, args.end());
    } else {
      argv_full.insert(argv_full.end(), args.begin(), args.end());
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    std::vector<std::string> rev(argv_full.rbegin(), argv_full.rend() - 1);
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (d->parsed()) return cmd_deblur(deblur, out);
    if (ab->parsed()) return cmd_ablate(ablate, out);
    if (sy->parsed()) return cmd_synthesize(synth, out);
    if (ev->parsed()) return cmd_evaluate(eval, out, err);
    if (be->parsed()) return cmd_bench(bench, out);
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace vdip::cli
