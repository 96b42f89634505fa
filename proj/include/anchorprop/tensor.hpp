#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace anchorprop {

// Dense row-major matrix of 32-bit reals. Products and reductions built on it
// accumulate in double and round once on store.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f);
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  const std::vector<float>& storage() const { return data_; }

  bool all_finite() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

// Byte-level equality: same shape and identical bit patterns.
bool bytes_equal(const Matrix& a, const Matrix& b);

// Largest |a - b| over all entries; shapes must match.
double max_abs_diff(const Matrix& a, const Matrix& b);

Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

// Element-wise sum of equal-shape matrices.
Matrix add(const Matrix& a, const Matrix& b);

// Stacks row blocks top to bottom; all blocks must share a column count.
Matrix vstack(std::span<const Matrix* const> blocks);

// Row softmax of m / temperature with per-row max subtraction.
Matrix softmax_rows(const Matrix& m, double temperature);

double cosine_sim(std::span<const float> u, std::span<const float> v);

}  // namespace anchorprop
