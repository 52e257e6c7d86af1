#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "grad_check.hpp"
#include "vdip/error.hpp"
#include "vdip/fields.hpp"
#include "vdip/imaging.hpp"

using namespace vdip;
using vdip::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() : path_(fs::temp_directory_path() / ("vdip_imaging_" + std::to_string(::getpid()))) {
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

Tensor shifted_in_canvas(const Tensor& k, int pad, int dy, int dx) {
  Tensor out({k.dim(0) + 2 * pad, k.dim(1) + 2 * pad});
  for (int i = 0; i < k.dim(0); ++i)
    for (int j = 0; j < k.dim(1); ++j) out.at(i + pad + dy, j + pad + dx) = k.at(i, j);
  return out;
}

}  // namespace

TEST(Psnr, Examples) {
  const Tensor a({1, 4, 4}, 0.5);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  EXPECT_GT(psnr(a, a), 0.0);
  EXPECT_NEAR(psnr(a, Tensor({1, 4, 4}, 0.6)), 20.0, 1e-9);
  EXPECT_NEAR(psnr(Tensor({1, 4, 4}, 0.0), Tensor({1, 4, 4}, 1.0)), 0.0, 1e-12);
  EXPECT_THROW(psnr(a, Tensor({1, 4, 5})), DimensionError);
}

TEST(Psnr, DecreasesWithNoise) {
  const Tensor sharp = synthetic_scene(1, 64, 64, 3);
  std::mt19937_64 rng(1);
  double previous = std::numeric_limits<double>::infinity();
  for (double sigma : {0.01, 0.05, 0.1}) {
    Tensor noisy = sharp;
    std::normal_distribution<double> g(0, sigma);
    for (double& v : noisy.data()) v += g(rng);
    const double p = psnr(noisy, sharp);
    EXPECT_LT(p, previous) << sigma;
    previous = p;
  }
}

TEST(Ssim, Properties) {
  std::mt19937_64 rng(2);
  const Tensor a = synthetic_scene(3, 24, 20, 4);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  Tensor inv = a;
  for (double& v : inv.data()) v = 1.0 - v;
  EXPECT_LT(ssim(a, inv), 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor x = random_tensor({2, 16, 16}, rng, 0, 1), y = random_tensor({2, 16, 16}, rng, 0, 1);
    EXPECT_NEAR(ssim(x, y), ssim(y, x), 1e-9);
    EXPECT_LE(ssim(x, y), 1.0);
    EXPECT_GE(ssim(x, y), -1.0);
  }
  EXPECT_THROW(ssim(Tensor({1, 10, 30}), Tensor({1, 10, 30})), ParameterError);
  EXPECT_THROW(ssim(Tensor({1, 12, 12}), Tensor({1, 12, 13})), DimensionError);
}

TEST(Ssim, DropsWithBlur) {
  const Tensor sharp = synthetic_scene(1, 48, 48, 5);
  const Tensor mild = convolve_valid(sharp, linear_motion_kernel(3, 3, 3, 0.0));
  const Tensor strong = convolve_valid(sharp, linear_motion_kernel(9, 9, 9, 0.0));
  const double s_mild = ssim(mild, center_crop(sharp, 46, 46));
  const double s_strong = ssim(center_crop(strong, 38, 38), center_crop(sharp, 38, 38));
  EXPECT_LT(s_strong, s_mild);
}

TEST(AlignedScore, FindsTranslatedWindow) {
  const Tensor ref = synthetic_scene(1, 30, 30, 6);
  const Tensor est = crop(ref, 5, 9, 20, 20);
  const AlignedScore s = aligned_score(est, ref);
  EXPECT_TRUE(std::isinf(s.psnr));
  EXPECT_NEAR(s.ssim, 1.0, 1e-12);
  EXPECT_EQ(s.dy, 0);
  EXPECT_EQ(s.dx, 4);
  EXPECT_GE(s.psnr, psnr(est, center_crop(ref, 20, 20)));
  EXPECT_THROW(aligned_score(ref, est), DimensionError);
}

TEST(KernelError, Examples) {
  const Tensor k = linear_motion_kernel(7, 7, 5, 0.4);
  EXPECT_EQ(kernel_recovery_error(k, k), 0.0);
  EXPECT_NEAR(kernel_recovery_error(shifted_in_canvas(k, 2, 1, 1), k), 0.0, 1e-18);
  EXPECT_NEAR(kernel_recovery_error(k, shifted_in_canvas(k, 3, -2, 1)), 0.0, 1e-18);
  EXPECT_NEAR(kernel_recovery_error(k * 3.0, k), 0.0, 1e-18);
  EXPECT_THROW(kernel_recovery_error(Tensor({3, 3}), k), ParameterError);
}

TEST(KernelError, SymmetricAndPositive) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor a = random_tensor({5, 5}, rng, 0, 1);
    const Tensor b = random_tensor({7 + 2 * (trial % 2), 7}, rng, 0, 1);
    const double ab = kernel_recovery_error(a, b), ba = kernel_recovery_error(b, a);
    EXPECT_NEAR(ab, ba, 1e-15);
    EXPECT_GT(ab, 0.0);
  }
  const Tensor delta = shifted_in_canvas(Tensor({1, 1}, 1.0), 2, 0, 0);
  EXPECT_GT(kernel_recovery_error(delta, linear_motion_kernel(5, 5, 5, 0.0)), 0.0);
}

TEST(KernelFiles, TextRoundTripIsExact) {
  TempDir dir;
  std::mt19937_64 rng(8);
  const Tensor k = random_tensor({5, 7}, rng, 0, 1e-3);
  save_kernel(dir.path() / "k.txt", k);
  const Tensor back = load_kernel(dir.path() / "k.txt");
  EXPECT_EQ(back.shape(), k.shape());
  EXPECT_EQ(back.values(), k.values());
  save_kernel_png(dir.path() / "k.png", k);
  EXPECT_EQ(load_image(dir.path() / "k.png").shape(), (Shape{1, 5, 7}));
}

TEST(KernelFiles, Errors) {
  TempDir dir;
  EXPECT_THROW(load_kernel(dir.path() / "missing.txt"), IoError);
  std::ofstream(dir.path() / "ragged.txt") << "1 2 3\n4 5\n";
  EXPECT_THROW(load_kernel(dir.path() / "ragged.txt"), IoError);
  std::ofstream(dir.path() / "word.txt") << "1 two\n";
  EXPECT_THROW(load_kernel(dir.path() / "word.txt"), IoError);
  std::ofstream(dir.path() / "empty.txt") << "\n";
  EXPECT_THROW(load_kernel(dir.path() / "empty.txt"), IoError);
}

TEST(ImageFiles, PngRoundTripWithinQuantisation) {
  TempDir dir;
  std::mt19937_64 rng(9);
  for (int c : {1, 3}) {
    const Tensor img = random_tensor({c, 13, 17}, rng, 0, 1);
    const fs::path p = dir.path() / ("img" + std::to_string(c) + ".png");
    save_image(p, img);
    const Tensor back = load_image(p);
    ASSERT_EQ(back.shape(), img.shape());
    double worst = 0.0;
    for (std::size_t i = 0; i < img.size(); ++i) worst = std::max(worst, std::abs(back[i] - img[i]));
    EXPECT_LE(worst, 1.0 / 255.0);
    save_image(p, back);
    EXPECT_EQ(load_image(p).values(), back.values());
  }
}

TEST(ImageFiles, Errors) {
  TempDir dir;
  std::ofstream(dir.path() / "not.png") << "definitely not a png";
  EXPECT_THROW(load_image(dir.path() / "not.png"), IoError);
  try {
    load_image(dir.path() / "absent.png");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("absent.png"), std::string::npos);
  }
  EXPECT_THROW(save_image(dir.path() / "x.png", Tensor({2, 4, 4})), DimensionError);
  EXPECT_THROW(save_image(dir.path() / "no" / "such" / "dir.png", Tensor({1, 4, 4})), IoError);
}

TEST(EvalCsv, HeaderAndSentinel) {
  std::ostringstream os;
  write_eval_csv(os, {EvalRecord{"im1", "VDIP-Sparse", std::numeric_limits<double>::infinity(), 1.0, 0.0, 2.5}});
  std::istringstream is(os.str());
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_EQ(header, "image,mode,psnr,ssim,kernel_error,seconds");
  EXPECT_EQ(row.substr(0, 20), "im1,VDIP-Sparse,inf,");
}

TEST(SyntheticKernels, MotionKernel) {
  const Tensor k = linear_motion_kernel(9, 9, 7, 0.3);
  EXPECT_NEAR(k.sum(), 1.0, 1e-12);
  EXPECT_GE(k.min(), 0.0);
  const Tensor h = linear_motion_kernel(5, 5, 5, 0.0);
  // Sample points run from -2 to 2, so the end pixels take half the interior weight.
  for (int j = 1; j < 4; ++j) EXPECT_NEAR(h.at(2, j), 0.25, 0.01);
  EXPECT_NEAR(h.at(2, 0), 0.125, 0.01);
  EXPECT_NEAR(h.at(2, 0), h.at(2, 4), 1e-12);
  EXPECT_NEAR(h.at(0, 0) + h.at(1, 2) + h.at(3, 2), 0.0, 1e-12);
  const Tensor d = linear_motion_kernel(3, 3, 0, 1.0);
  EXPECT_DOUBLE_EQ(d.at(1, 1), 1.0);
  EXPECT_THROW(linear_motion_kernel(3, 3, -1, 0), ParameterError);
}

TEST(SyntheticKernels, RandomWalkKernel) {
  const Tensor a = random_walk_kernel(15, 15, 20, 3), b = random_walk_kernel(15, 15, 20, 3);
  EXPECT_EQ(a.values(), b.values());
  EXPECT_NE(a.values(), random_walk_kernel(15, 15, 20, 4).values());
  EXPECT_NEAR(a.sum(), 1.0, 1e-12);
  EXPECT_GE(a.min(), 0.0);
  int support = 0;
  for (double v : a.data()) support += v > 1e-3;
  EXPECT_GT(support, 3);
}

TEST(SyntheticScene, RangeAndDeterminism) {
  const Tensor a = synthetic_scene(3, 40, 30, 1);
  EXPECT_EQ(a.shape(), (Shape{3, 40, 30}));
  EXPECT_GE(a.min(), 0.05);
  EXPECT_LE(a.max(), 0.95);
  EXPECT_EQ(a.values(), synthetic_scene(3, 40, 30, 1).values());
  EXPECT_NE(a.values(), synthetic_scene(3, 40, 30, 2).values());
  EXPECT_THROW(synthetic_scene(0, 4, 4, 1), ParameterError);
}

TEST(NormalizeKernel, Contract) {
  const Tensor k = normalize_kernel(Tensor({2, 2}, 3.0));
  for (double v : k.data()) EXPECT_DOUBLE_EQ(v, 0.25);
  EXPECT_THROW(normalize_kernel(Tensor({2, 2})), ParameterError);
  EXPECT_THROW(normalize_kernel(Tensor({2, 2}, std::vector<double>{1, -1, 1, 1})), ParameterError);
}
