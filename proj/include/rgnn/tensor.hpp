#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rgnn {

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Dense row-major tensor of doubles. Most of the library works on rank-2
// tensors; a rank-1 tensor of length n behaves as a 1 x n row.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(count(shape_), fill) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_)) {
      throw DimensionError("Tensor: data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string());
    }
  }

  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }

  static Tensor filled(std::size_t rows, std::size_t cols, double value) {
    return Tensor({rows, cols}, value);
  }

  static Tensor scalar(double value) { return Tensor({1, 1}, value); }

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("Tensor::from_rows: ragged rows");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
  }

  static Tensor identity(std::size_t n) {
    Tensor t = zeros(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t rows() const { return shape_.size() >= 2 ? shape_[0] : 1; }
  std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  double item() const {
    if (data_.size() != 1) throw DimensionError("Tensor::item on tensor of shape " + shape_string());
    return data_[0];
  }

  void fill(double value) { std::fill(data_.begin(), data_.end(), value); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

  std::string shape_string() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? " x " : "") << shape_[i];
    os << ']';
    return os.str();
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  static std::size_t count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

}  // namespace rgnn
