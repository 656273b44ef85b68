#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace advgrad {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

// Dense row-major tensor of 64-bit floats. Immutable by convention once
// handed to the tape; mutating accessors exist for construction and for
// optimizer updates on parameters the caller owns.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);
  static Tensor scalar(double v);
  static Tensor full(Shape shape, double v);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool is_scalar() const { return data_.size() == 1; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  // Value at scalar index for 2d tensors.
  double at2(std::size_t r, std::size_t c, std::size_t ncols) const {
    return data_[r * ncols + c];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;

  Tensor reshaped(Shape new_shape) const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Elementwise helpers used across modules (plain values, not taped).
Tensor clamp(const Tensor& x, double lo, double hi);
double linf_dist(const Tensor& a, const Tensor& b);
double l2_dist(const Tensor& a, const Tensor& b);
double l1_norm(const Tensor& x);
double l2_norm(const Tensor& x);
std::size_t argmax_row(const Tensor& logits, std::size_t row, std::size_t ncols);

// Rounding convention used by the quantizing defenses.
double round_half_away(double v);

}  // namespace advgrad
