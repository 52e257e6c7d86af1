#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vdip/fields.hpp"

namespace vdip {

/// Encoder-decoder with skip connections. Each scale halves the resolution
/// with a strided conv and is merged back after bilinear upsampling.
struct ImageGeneratorSpec {
  int scales = 5;
  int channels_per_scale = 128;
  int skip_channels = 16;
  int input_channels = 8;
  int image_channels = 1;  // C; the network emits 2C maps (mean head, std head)
  double s_max = 0.1;      // std head is s_max * sigmoid(.)
  double leaky_slope = 0.2;
};

/// Fully connected input_dim -> hidden_dim -> Kh*Kw with softmax output.
struct KernelGeneratorSpec {
  int input_dim = 200;
  int hidden_dim = 1000;
  int kernel_height = 31;
  int kernel_width = 31;
  int output_dim() const { return kernel_height * kernel_width; }
};

struct NamedParameter {
  std::string name;
  ad::Var var;
};

/// Ordered, named collection of trainable tensors.
class ParameterSet {
 public:
  void add(std::string name, Tensor init);
  const std::vector<NamedParameter>& items() const { return items_; }
  std::vector<NamedParameter>& items() { return items_; }
  const ad::Var& get(const std::string& name) const;
  std::size_t size() const { return items_.size(); }
  std::size_t element_count() const;
  void zero_grad();
  bool all_finite() const;

 private:
  std::vector<NamedParameter> items_;
};

ParameterSet init_parameters(const ImageGeneratorSpec& spec, std::uint64_t seed);
ParameterSet init_parameters(const KernelGeneratorSpec& spec, std::uint64_t seed);

class ImageGenerator {
 public:
  ImageGenerator(ImageGeneratorSpec spec, std::uint64_t seed);
  ImageGenerator(const ImageGenerator&) = delete;
  ImageGenerator& operator=(const ImageGenerator&) = delete;
  ImageGenerator(ImageGenerator&&) = default;
  ImageGenerator& operator=(ImageGenerator&&) = default;

  /// Mean and std fields with the spatial size of z.z_image().
  SharpImageBelief forward(const NoiseInputs& z) const;

  const ImageGeneratorSpec& spec() const { return spec_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

 private:
  ad::Var block(int scale, const ad::Var& x) const;
  ad::Var conv_bn_act(const std::string& prefix, const ad::Var& x, int stride) const;
  ad::Var bn(const std::string& prefix, const ad::Var& x) const;

  ImageGeneratorSpec spec_;
  ParameterSet params_;
};

class KernelGenerator {
 public:
  KernelGenerator(KernelGeneratorSpec spec, std::uint64_t seed);
  KernelGenerator(const KernelGenerator&) = delete;
  KernelGenerator& operator=(const KernelGenerator&) = delete;
  KernelGenerator(KernelGenerator&&) = default;
  KernelGenerator& operator=(KernelGenerator&&) = default;

  KernelBelief forward(const NoiseInputs& z, double std_scalar) const;

  const KernelGeneratorSpec& spec() const { return spec_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

 private:
  KernelGeneratorSpec spec_;
  ParameterSet params_;
};

/// Seeds carried alongside checkpointed parameters.
struct RunSeeds {
  std::uint64_t parameters = 0;
  std::uint64_t noise = 0;
  std::uint64_t sampling = 0;
};

// Checkpoint layout (little-endian):
//   "VDIPCKPT" | u32 version=1 | u64 seeds[3] | u32 n_sets=2
//   per set: u32 n_params, then per param:
//     u32 name_len | name bytes | u32 rank | i32 dims[rank] | f64 values[prod(dims)]
// Sets are written image generator first, kernel generator second.
void save_checkpoint(const std::filesystem::path& path, const ParameterSet& image, const ParameterSet& kernel,
                     const RunSeeds& seeds);
/// Overwrites the values of matching parameters; throws IoError on any mismatch.
RunSeeds load_checkpoint(const std::filesystem::path& path, ParameterSet& image, ParameterSet& kernel);

}  // namespace vdip
