#include "selfgnn/tensor.hpp"

#include <algorithm>

namespace selfgnn {

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols, std::vector<SparseEntry> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
  for (const auto& e : entries_) {
    if (e.row >= rows_ || e.col >= cols_) {
      throw std::invalid_argument("SparseMatrix: entry (" + std::to_string(e.row) + "," +
                                  std::to_string(e.col) + ") out of bounds for " +
                                  std::to_string(rows_) + "x" + std::to_string(cols_));
    }
    if (!std::isfinite(e.value)) {
      throw std::invalid_argument("SparseMatrix: non-finite entry value");
    }
  }
  std::sort(entries_.begin(), entries_.end(), [](const SparseEntry& a, const SparseEntry& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    if (entries_[i].row == entries_[i - 1].row && entries_[i].col == entries_[i - 1].col) {
      throw std::invalid_argument("SparseMatrix: duplicate entry at (" +
                                  std::to_string(entries_[i].row) + "," +
                                  std::to_string(entries_[i].col) + ")");
    }
  }
}

Tensor SparseMatrix::multiply(const Tensor& b) const {
  if (b.rows() != cols_) {
    throw std::invalid_argument("spmm: A is " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                                " but b has " + std::to_string(b.rows()) + " rows");
  }
  const std::size_t d = b.cols();
  Tensor out({rows_, d});
  const double* bp = b.data();
  double* op = out.data();
  for (const auto& e : entries_) {
    const double v = e.value;
    const double* src = bp + e.col * d;
    double* dst = op + e.row * d;
    for (std::size_t k = 0; k < d; ++k) dst[k] += v * src[k];
  }
  return out;
}

Tensor SparseMatrix::multiply_transposed(const Tensor& b) const {
  if (b.rows() != rows_) {
    throw std::invalid_argument("spmm_t: A^T is " + std::to_string(cols_) + "x" + std::to_string(rows_) +
                                " but b has " + std::to_string(b.rows()) + " rows");
  }
  const std::size_t d = b.cols();
  Tensor out({cols_, d});
  const double* bp = b.data();
  double* op = out.data();
  for (const auto& e : entries_) {
    const double v = e.value;
    const double* src = bp + e.row * d;
    double* dst = op + e.col * d;
    for (std::size_t k = 0; k < d; ++k) dst[k] += v * src[k];
  }
  return out;
}

}  // namespace selfgnn
