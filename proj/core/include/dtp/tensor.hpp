#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dtp {

// Shape violations and invalid tensor arithmetic throw TensorError, from both
// eager helpers and graph construction.
class TensorError : public std::runtime_error {
 public:
  explicit TensorError(const std::string& what) : std::runtime_error(what) {}
};

std::string shape_str(const std::vector<int64_t>& shape);

// Dense row-major tensor of doubles. Plain value type: copies copy storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape);
  Tensor(std::vector<int64_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int64_t> shape, double v);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  // 2-d accessors; throw on other ranks.
  int64_t rows() const;
  int64_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& at(int64_t i) { return data_[static_cast<size_t>(i)]; }
  double at(int64_t i) const { return data_[static_cast<size_t>(i)]; }
  double& at2(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * cols_ + c)]; }
  double at2(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * cols_ + c)]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  std::vector<int64_t> shape_;
  std::vector<double> data_;
  int64_t cols_ = 0;  // cached last-dim extent for at2
};

}  // namespace dtp
