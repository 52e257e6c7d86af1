#include "vdip/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "vdip/error.hpp"

namespace vdip {

namespace {

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw DimensionError("negative dimension in shape " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != element_count(shape_)) {
    throw DimensionError("value count " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
  }
}

int Tensor::dim(int axis) const {
  if (axis < 0 || axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_string(shape_));
  }
  return shape_[axis];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
  if (element_count(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " +
                         shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double Tensor::min() const {
  return data_.empty() ? 0.0 : *std::min_element(data_.begin(), data_.end());
}

double Tensor::max() const {
  return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end());
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor& Tensor::operator+=(const Tensor& o) {
  require_same_shape(*this, o, "tensor +=");
  std::transform(data_.begin(), data_.end(), o.data_.begin(), data_.begin(), std::plus<>());
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& o) {
  require_same_shape(*this, o, "tensor -=");
  std::transform(data_.begin(), data_.end(), o.data_.begin(), data_.begin(), std::minus<>());
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

Tensor crop(const Tensor& t, int top, int left, int height, int width) {
  if (t.rank() != 3) throw DimensionError("crop expects a C x H x W tensor");
  const int C = t.dim(0), H = t.dim(1), W = t.dim(2);
  if (top < 0 || left < 0 || height < 0 || width < 0 || top + height > H || left + width > W) {
    throw DimensionError("crop window outside " + shape_string(t.shape()));
  }
  Tensor out({C, height, width});
  for (int c = 0; c < C; ++c)
    for (int h = 0; h < height; ++h)
      for (int w = 0; w < width; ++w) out.at(c, h, w) = t.at(c, top + h, left + w);
  return out;
}

Tensor center_crop(const Tensor& t, int height, int width) {
  if (t.rank() != 3) throw DimensionError("center_crop expects a C x H x W tensor");
  return crop(t, (t.dim(1) - height) / 2, (t.dim(2) - width) / 2, height, width);
}

}  // namespace vdip
