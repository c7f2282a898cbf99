#pragma once

// Row-major dense kernels used by the LSTM. Sizes are the caller's
// responsibility; spans are not bounds-checked beyond debug asserts.

#include <cassert>
#include <cstddef>
#include <span>

namespace anomid::dense {

// y += A x, A is rows x cols.
inline void matvec_add(std::span<const double> a, std::size_t rows, std::size_t cols,
                       std::span<const double> x, std::span<double> y) {
  assert(a.size() >= rows * cols && x.size() >= cols && y.size() >= rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = a.data() + r * cols;
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += row[c] * x[c];
    y[r] += s;
  }
}

// y += A^T x, A is rows x cols.
inline void matvec_t_add(std::span<const double> a, std::size_t rows, std::size_t cols,
                         std::span<const double> x, std::span<double> y) {
  assert(a.size() >= rows * cols && x.size() >= rows && y.size() >= cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = a.data() + r * cols;
    const double xr = x[r];
    if (xr == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) y[c] += xr * row[c];
  }
}

// A += u v^T, A is rows x cols.
inline void outer_add(std::span<double> a, std::size_t rows, std::size_t cols,
                      std::span<const double> u, std::span<const double> v) {
  assert(a.size() >= rows * cols && u.size() >= rows && v.size() >= cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = a.data() + r * cols;
    const double ur = u[r];
    if (ur == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) row[c] += ur * v[c];
  }
}

// y += alpha x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(y.size() >= x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace anomid::dense
