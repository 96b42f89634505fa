#include "anchorprop/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "anchorprop/error.hpp"

namespace anchorprop {

Matrix::Matrix(std::size_t rows, std::size_t cols, float fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                     " does not match " + std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
  return m;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float x) { return std::isfinite(x); });
}

bool bytes_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  if (a.empty()) return true;
  return std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(float)) == 0;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("max_abs_diff: shape mismatch");
  }
  double worst = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(av[i]) - static_cast<double>(bv[i])));
  }
  return worst;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  const std::size_t n = a.rows();
  const std::size_t inner = a.cols();
  const std::size_t m = b.cols();
  Matrix out(n, m);
  std::vector<double> acc(m);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    auto arow = a.row(i);
    // i-k-j order keeps the inner loop contiguous; each acc[j] still sums k in order.
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = arow[k];
      auto brow = b.row(k);
      for (std::size_t j = 0; j < m; ++j) acc[j] += aik * static_cast<double>(brow[j]);
    }
    auto orow = out.row(i);
    for (std::size_t j = 0; j < m; ++j) orow[j] = static_cast<float>(acc[j]);
  }
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("add: shape mismatch");
  Matrix out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
  }
  return t;
}

Matrix vstack(std::span<const Matrix* const> blocks) {
  if (blocks.empty()) return {};
  const std::size_t cols = blocks.front()->cols();
  std::size_t rows = 0;
  for (const Matrix* b : blocks) {
    if (b->cols() != cols && b->rows() != 0) throw ShapeError("vstack: column mismatch");
    rows += b->rows();
  }
  std::vector<float> data;
  data.reserve(rows * cols);
  for (const Matrix* b : blocks) data.insert(data.end(), b->values().begin(), b->values().end());
  return Matrix(rows, cols, std::move(data));
}

Matrix softmax_rows(const Matrix& m, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ParameterError("softmax_rows: temperature must be positive and finite");
  }
  if (!m.all_finite()) throw NumericError("softmax_rows: non-finite input");
  Matrix out(m.rows(), m.cols());
  std::vector<double> logits(m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto in = m.row(r);
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < in.size(); ++c) {
      logits[c] = static_cast<double>(in[c]) / temperature;
      peak = std::max(peak, logits[c]);
    }
    double total = 0.0;
    for (double& l : logits) {
      l = std::exp(l - peak);
      total += l;
    }
    auto o = out.row(r);
    for (std::size_t c = 0; c < o.size(); ++c) o[c] = static_cast<float>(logits[c] / total);
  }
  return out;
}

double cosine_sim(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size()) throw ShapeError("cosine_sim: length mismatch");
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = u[i];
    const double b = v[i];
    dot += a * b;
    uu += a * a;
    vv += b * b;
  }
  const double nu = std::sqrt(uu);
  const double nv = std::sqrt(vv);
  if (!(nu > 1e-12) || !(nv > 1e-12)) {
    throw DegenerateVectorError("cosine_sim: zero-norm vector");
  }
  return std::clamp(dot / (nu * nv), -1.0, 1.0);
}

}  // namespace anchorprop
