#include "vdip/generators.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "vdip/error.hpp"

namespace vdip {

void ParameterSet::add(std::string name, Tensor init) {
  items_.push_back(NamedParameter{std::move(name), ad::parameter(std::move(init))});
}

const ad::Var& ParameterSet::get(const std::string& name) const {
  for (const auto& p : items_)
    if (p.name == name) return p.var;
  throw ParameterError("no parameter named '" + name + "'");
}

std::size_t ParameterSet::element_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.var.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : items_) p.var.zero_grad();
}

bool ParameterSet::all_finite() const {
  return std::all_of(items_.begin(), items_.end(), [](const auto& p) { return p.var.value().all_finite(); });
}

namespace {

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual default for conv and linear layers.
Tensor uniform_fan_in(Shape shape, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = u(rng);
  return t;
}

void add_conv(ParameterSet& ps, const std::string& prefix, int cin, int cout, int k, Rng& rng) {
  ps.add(prefix + ".w", uniform_fan_in({cout, cin, k, k}, cin * k * k, rng));
  ps.add(prefix + ".b", uniform_fan_in({cout}, cin * k * k, rng));
}

void add_bn(ParameterSet& ps, const std::string& prefix, int channels) {
  ps.add(prefix + ".gamma", Tensor({channels}, 1.0));
  ps.add(prefix + ".beta", Tensor({channels}, 0.0));
}

void check(const ImageGeneratorSpec& s) {
  if (s.scales < 1 || s.channels_per_scale < 1 || s.skip_channels < 0 || s.input_channels < 1 ||
      s.image_channels < 1) {
    throw ParameterError("invalid image generator architecture");
  }
  if (!(s.s_max > 0.0)) throw ParameterError("s_max must be positive");
}

std::string scale_prefix(int i) { return "s" + std::to_string(i); }

}  // namespace

ParameterSet init_parameters(const ImageGeneratorSpec& spec, std::uint64_t seed) {
  check(spec);
  Rng rng(seed);
  ParameterSet ps;
  const int ch = spec.channels_per_scale;
  int depth_in = spec.input_channels;
  for (int i = 0; i < spec.scales; ++i) {
    const std::string p = scale_prefix(i);
    if (spec.skip_channels > 0) {
      add_conv(ps, p + ".skip.conv", depth_in, spec.skip_channels, 1, rng);
      add_bn(ps, p + ".skip.bn", spec.skip_channels);
    }
    add_conv(ps, p + ".down1.conv", depth_in, ch, 3, rng);
    add_bn(ps, p + ".down1.bn", ch);
    add_conv(ps, p + ".down2.conv", ch, ch, 3, rng);
    add_bn(ps, p + ".down2.bn", ch);
    add_bn(ps, p + ".merge.bn", spec.skip_channels + ch);
    add_conv(ps, p + ".up1.conv", spec.skip_channels + ch, ch, 3, rng);
    add_bn(ps, p + ".up1.bn", ch);
    add_conv(ps, p + ".up2.conv", ch, ch, 1, rng);
    add_bn(ps, p + ".up2.bn", ch);
    depth_in = ch;
  }
  add_conv(ps, "out.conv", ch, 2 * spec.image_channels, 1, rng);
  return ps;
}

ParameterSet init_parameters(const KernelGeneratorSpec& spec, std::uint64_t seed) {
  if (spec.input_dim < 1 || spec.hidden_dim < 1 || spec.kernel_height < 1 || spec.kernel_width < 1) {
    throw ParameterError("invalid kernel generator architecture");
  }
  Rng rng(seed);
  ParameterSet ps;
  ps.add("fc1.w", uniform_fan_in({spec.hidden_dim, spec.input_dim}, spec.input_dim, rng));
  ps.add("fc1.b", uniform_fan_in({spec.hidden_dim}, spec.input_dim, rng));
  ps.add("fc2.w", uniform_fan_in({spec.output_dim(), spec.hidden_dim}, spec.hidden_dim, rng));
  ps.add("fc2.b", uniform_fan_in({spec.output_dim()}, spec.hidden_dim, rng));
  return ps;
}

ImageGenerator::ImageGenerator(ImageGeneratorSpec spec, std::uint64_t seed)
    : spec_(spec), params_(init_parameters(spec, seed)) {}

ad::Var ImageGenerator::bn(const std::string& prefix, const ad::Var& x) const {
  return ad::batch_norm(x, params_.get(prefix + ".gamma"), params_.get(prefix + ".beta"));
}

ad::Var ImageGenerator::conv_bn_act(const std::string& prefix, const ad::Var& x, int stride) const {
  const ad::Var y = ad::conv2d(x, params_.get(prefix + ".conv.w"), params_.get(prefix + ".conv.b"), stride);
  return ad::leaky_relu(bn(prefix + ".bn", y), spec_.leaky_slope);
}

ad::Var ImageGenerator::block(int scale, const ad::Var& x) const {
  const std::string p = scale_prefix(scale);
  ad::Var deeper = conv_bn_act(p + ".down1", x, 2);
  deeper = conv_bn_act(p + ".down2", deeper, 1);
  if (scale + 1 < spec_.scales) deeper = block(scale + 1, deeper);
  deeper = ad::upsample_bilinear2x(deeper);
  ad::Var merged = deeper;
  if (spec_.skip_channels > 0) {
    merged = ad::concat_channels({conv_bn_act(p + ".skip", x, 1), deeper});
  }
  merged = bn(p + ".merge.bn", merged);
  ad::Var up = conv_bn_act(p + ".up1", merged, 1);
  return conv_bn_act(p + ".up2", up, 1);
}

SharpImageBelief ImageGenerator::forward(const NoiseInputs& z) const {
  const Tensor& zi = z.z_image();
  if (zi.rank() != 3 || zi.dim(0) != spec_.input_channels) {
    throw DimensionError("image generator expects " + std::to_string(spec_.input_channels) +
                         " input channels, got " + shape_string(zi.shape()));
  }
  const ad::Var features = block(0, ad::constant(zi));
  ad::Var out = ad::conv2d(features, params_.get("out.conv.w"), params_.get("out.conv.b"), 1);
  if (out.value().dim(1) != zi.dim(1) || out.value().dim(2) != zi.dim(2)) {
    out = ad::center_crop(out, zi.dim(1), zi.dim(2));
  }
  const int C = spec_.image_channels;
  SharpImageBelief belief;
  belief.mean = ad::sigmoid(ad::slice_channels(out, 0, C));
  belief.std = ad::scale(ad::sigmoid(ad::slice_channels(out, C, 2 * C)), spec_.s_max);
  return belief;
}

KernelGenerator::KernelGenerator(KernelGeneratorSpec spec, std::uint64_t seed)
    : spec_(spec), params_(init_parameters(spec, seed)) {}

KernelBelief KernelGenerator::forward(const NoiseInputs& z, double std_scalar) const {
  const Tensor& zk = z.z_kernel();
  if (zk.rank() != 1 || zk.dim(0) != spec_.input_dim) {
    throw DimensionError("kernel generator expects input of length " + std::to_string(spec_.input_dim));
  }
  const ad::Var hidden = ad::relu6(ad::linear(ad::constant(zk), params_.get("fc1.w"), params_.get("fc1.b")));
  const ad::Var logits = ad::linear(hidden, params_.get("fc2.w"), params_.get("fc2.b"));
  return KernelBelief{ad::reshape(ad::softmax(logits), {spec_.kernel_height, spec_.kernel_width}), std_scalar};
}

// ---- checkpoints -----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'V', 'D', 'I', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("truncated checkpoint " + path.string());
  return v;
}

void write_set(std::ofstream& os, const ParameterSet& ps) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ps.size()));
  for (const auto& p : ps.items()) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const Tensor& t = p.var.value();
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put<std::int32_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
}

void read_set(std::ifstream& is, ParameterSet& ps, const std::filesystem::path& path) {
  const auto n = get<std::uint32_t>(is, path);
  if (n != ps.size()) throw IoError("checkpoint parameter count mismatch in " + path.string());
  for (auto& p : ps.items()) {
    const auto len = get<std::uint32_t>(is, path);
    if (len > 4096) throw IoError("corrupt checkpoint " + path.string());
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw IoError("truncated checkpoint " + path.string());
    if (name != p.name) throw IoError("checkpoint has '" + name + "' where '" + p.name + "' was expected");
    const auto rank = get<std::uint32_t>(is, path);
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(get<std::int32_t>(is, path));
    if (shape != p.var.shape()) throw IoError("checkpoint shape mismatch for " + name);
    Tensor& t = p.var.mutable_value();
    if (!is.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(double)))) {
      throw IoError("truncated checkpoint " + path.string());
    }
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& image, const ParameterSet& kernel,
                     const RunSeeds& seeds) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put(os, kVersion);
  put(os, seeds.parameters);
  put(os, seeds.noise);
  put(os, seeds.sampling);
  put<std::uint32_t>(os, 2);
  write_set(os, image);
  write_set(os, kernel);
  if (!os) throw IoError("failed writing checkpoint " + path.string());
}

RunSeeds load_checkpoint(const std::filesystem::path& path, ParameterSet& image, ParameterSet& kernel) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  if (get<std::uint32_t>(is, path) != kVersion) throw IoError("unsupported checkpoint version in " + path.string());
  RunSeeds seeds;
  seeds.parameters = get<std::uint64_t>(is, path);
  seeds.noise = get<std::uint64_t>(is, path);
  seeds.sampling = get<std::uint64_t>(is, path);
  if (get<std::uint32_t>(is, path) != 2) throw IoError("checkpoint must hold two parameter sets");
  read_set(is, image, path);
  read_set(is, kernel, path);
  return seeds;
}

}  // namespace vdip
