#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace selfgnn {

// Dense row-major tensor of 64-bit floats. Rank is almost always 1 or 2;
// higher-rank views (batch, len, d) are carried as 2-d tensors plus external
// chunking arguments to the ops that need them.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_)) {
      throw std::invalid_argument("Tensor: shape/data size mismatch");
    }
  }

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? (shape_.empty() ? 0 : 1) : shape_[1]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  double item() const {
    if (numel() != 1) throw std::logic_error("Tensor::item: not a scalar");
    return data_[0];
  }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

 private:
  static std::size_t count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return shape.empty() ? 0 : n;
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

struct SparseEntry {
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 0.0;
};

// COO sparse matrix with entries kept sorted by (row, col) and free of
// duplicates. Adjacency matrices store value 1.0 per edge; edge dropout
// rescales surviving entries.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<SparseEntry> entries);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return entries_.size(); }
  const std::vector<SparseEntry>& entries() const { return entries_; }

  // y = A . b  (dense b with b.rows() == cols_)
  Tensor multiply(const Tensor& b) const;
  // y = A^T . b (dense b with b.rows() == rows_)
  Tensor multiply_transposed(const Tensor& b) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<SparseEntry> entries_;
};

}  // namespace selfgnn
