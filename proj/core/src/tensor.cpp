#include "dtp/tensor.hpp"

#include <sstream>

namespace dtp {

std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

namespace {

int64_t checked_numel(const std::vector<int64_t>& shape) {
  if (shape.empty()) throw TensorError("tensor shape must have at least one extent");
  int64_t n = 1;
  for (int64_t e : shape) {
    if (e <= 0) throw TensorError("tensor extents must be positive, got " + shape_str(shape));
    n *= e;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(checked_numel(shape_)), 0.0);
  cols_ = shape_.back();
}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_numel(shape_) != static_cast<int64_t>(data_.size()))
    throw TensorError("data size does not match shape " + shape_str(shape_));
  cols_ = shape_.back();
}

Tensor Tensor::full(std::vector<int64_t> shape, double v) {
  Tensor t(std::move(shape));
  for (double& x : t.data_) x = v;
  return t;
}

int64_t Tensor::rows() const {
  if (rank() != 2) throw TensorError("rows() needs rank 2, have " + shape_str(shape_));
  return shape_[0];
}

int64_t Tensor::cols() const {
  if (rank() != 2) throw TensorError("cols() needs rank 2, have " + shape_str(shape_));
  return shape_[1];
}

}  // namespace dtp
