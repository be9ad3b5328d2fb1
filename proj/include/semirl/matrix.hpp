#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace semirl {

// Dense row-major matrix of doubles. The policies here are small enough
// (tens of thousands of entries) that hand-rolled mat-vec is plenty.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  std::span<double> row(int r) { return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)}; }
  std::span<const double> row(int r) const {
    return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  void add_scaled(const Matrix& other, double scale) {
    for (size_t i = 0; i < data.size(); ++i) data[i] += scale * other.data[i];
  }

  bool same_shape(const Matrix& other) const { return rows == other.rows && cols == other.cols; }
};

}  // namespace semirl
