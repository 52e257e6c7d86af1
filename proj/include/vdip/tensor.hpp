#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace vdip {

using Shape = std::vector<int>;

std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Images are stored as C x H x W,
/// kernels as Kh x Kw, vectors as {n}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 3-D (C, H, W) access.
  std::size_t index(int c, int h, int w) const {
    return (static_cast<std::size_t>(c) * shape_[1] + h) * shape_[2] + w;
  }
  double& at(int c, int h, int w) {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + h) * shape_[2] + w];
  }
  double at(int c, int h, int w) const {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + h) * shape_[2] + w];
  }
  // 2-D (row, col) access.
  double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
  double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }

  void fill(double v);
  Tensor reshaped(Shape shape) const;

  double sum() const;
  double min() const;
  double max() const;
  bool all_finite() const;

  Tensor& operator+=(const Tensor& o);
  Tensor& operator-=(const Tensor& o);
  Tensor& operator*=(double s);

 private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);

/// Throws DimensionError when shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

/// Central crop of the spatial dims of a C x H x W tensor.
Tensor center_crop(const Tensor& t, int height, int width);

/// Crop starting at (top, left).
Tensor crop(const Tensor& t, int top, int left, int height, int width);

}  // namespace vdip
