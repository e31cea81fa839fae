#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cuneid {

using Vec = std::vector<double>;

// Row-major dense matrix of doubles. Small and unclever on purpose; every
// consumer in this project is desk-scale.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return a[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return a[r * cols + c]; }

  const double* row(std::size_t r) const { return a.data() + r * cols; }
  double* row(std::size_t r) { return a.data() + r * cols; }
};

// out += M . x
inline void add_matvec(Vec& out, const Mat& m, const Vec& x) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = m.row(r);
    double s = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) s += row[c] * x[c];
    out[r] += s;
  }
}

// out += M^T . y
inline void add_matvec_t(Vec& out, const Mat& m, const Vec& y) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = m.row(r);
    const double yr = y[r];
    for (std::size_t c = 0; c < m.cols; ++c) out[c] += yr * row[c];
  }
}

// M += y (outer) x
inline void add_outer(Mat& m, const Vec& y, const Vec& x) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    double* row = m.row(r);
    const double yr = y[r];
    for (std::size_t c = 0; c < m.cols; ++c) row[c] += yr * x[c];
  }
}

inline void add_vec(Vec& out, const Vec& x) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += x[i];
}

}  // namespace cuneid
