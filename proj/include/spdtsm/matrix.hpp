// Copyright 2026 The spdtsm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SPDTSM_MATRIX_HPP
#define SPDTSM_MATRIX_HPP

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <sstream>
#include <utility>
#include <vector>

#include "spdtsm/common.hpp"

namespace spdtsm {

/// Dense row-major matrix of doubles. Sized for this library's regime
/// (dimensions up to a few dozen); everything lives in L1, so the plain
/// loops below are the right tool.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), v_(rows * cols, 0.0) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix diag(std::initializer_list<double> d) {
    Matrix m(d.size(), d.size());
    std::size_t i = 0;
    for (double x : d) m(i, i) = x, ++i;
    return m;
  }

  static Matrix diag(const std::vector<double>& d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return v_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return v_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return v_[i * cols_ + j];
  }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  std::size_t size() const { return v_.size(); }

  Matrix& operator+=(const Matrix& o) {
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] -= o.v_[i];
    return *this;
  }
  Matrix& operator*=(double s) {
    for (double& x : v_) x *= s;
    return *this;
  }

  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend Matrix operator*(Matrix a, double s) { return a *= s; }
  friend Matrix operator*(double s, Matrix a) { return a *= s; }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.v_ == b.v_;
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> v_;
};

inline void require_same_shape(const Matrix& a, const Matrix& b,
                               const char* where) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream os;
    os << where << ": shape mismatch (" << a.rows() << "x" << a.cols()
       << " vs " << b.rows() << "x" << b.cols() << ")";
    throw InvalidInputError(os.str());
  }
}

inline Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw InvalidInputError("matmul: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a(i, p);
      const double* bp = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
    }
  }
  return c;
}

inline Matrix transposed(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

/// AᵀB without forming the transpose.
inline Matrix mul_at_b(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows())
    throw InvalidInputError("mul_at_b: inner dimensions differ");
  Matrix c(a.cols(), b.cols());
  const std::size_t n = a.cols(), k = a.rows(), m = b.cols();
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a.data() + p * n;
    const double* bp = b.data() + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      double* ci = c.data() + i * m;
      const double api = ap[i];
      for (std::size_t j = 0; j < m; ++j) ci[j] += api * bp[j];
    }
  }
  return c;
}

/// ABᵀ without forming the transpose.
inline Matrix mul_a_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw InvalidInputError("mul_a_bt: inner dimensions differ");
  Matrix c(a.rows(), b.rows());
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.data() + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = b.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c(i, j) = s;
    }
  }
  return c;
}

/// Aᵀ Z A.
inline Matrix congruence_tza(const Matrix& a, const Matrix& z) {
  return mul_at_b(a, z * a);
}

/// A Z Aᵀ.
inline Matrix congruence_azat(const Matrix& a, const Matrix& z) {
  return mul_a_bt(a * z, a);
}

inline Matrix symmetrize(const Matrix& m) {
  Matrix s(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      s(i, j) = 0.5 * (m(i, j) + m(j, i));
  return s;
}

inline double trace(const Matrix& m) {
  double t = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) t += m(i, i);
  return t;
}

/// Frobenius inner product <A, B>.
inline double fro_dot(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

inline double fro_norm(const Matrix& m) { return std::sqrt(fro_dot(m, m)); }

inline double max_abs(const Matrix& m) {
  double r = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i)
    r = std::max(r, std::abs(m.data()[i]));
  return r;
}

inline double symmetry_deviation(const Matrix& m) {
  double d = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j)
      d = std::max(d, std::abs(m(i, j) - m(j, i)));
  return d;
}

inline bool is_square(const Matrix& m) {
  return m.rows() == m.cols() && m.rows() > 0;
}

inline bool all_finite(const Matrix& m) {
  for (std::size_t i = 0; i < m.size(); ++i)
    if (!std::isfinite(m.data()[i])) return false;
  return true;
}

/// Thin QR by Householder reflections; returns Q with the sign convention
/// diag(R) > 0 so the factorization is unique.
inline Matrix qr_orthonormalize(const Matrix& a) {
  const std::size_t m = a.rows(), n = a.cols();
  if (m < n) throw InvalidInputError("qr_orthonormalize: more cols than rows");
  Matrix r = a;
  std::vector<std::vector<double>> reflectors;
  std::vector<double> diag_sign(n, 1.0);

  for (std::size_t k = 0; k < n; ++k) {
    double norm = 0.0;
    for (std::size_t i = k; i < m; ++i) norm += r(i, k) * r(i, k);
    norm = std::sqrt(norm);
    if (norm < 1e-300)
      throw NumericError("qr_orthonormalize: rank-deficient input");
    const double alpha = r(k, k) >= 0.0 ? -norm : norm;
    std::vector<double> v(m, 0.0);
    double vnorm2 = 0.0;
    v[k] = r(k, k) - alpha;
    for (std::size_t i = k + 1; i < m; ++i) v[i] = r(i, k);
    for (std::size_t i = k; i < m; ++i) vnorm2 += v[i] * v[i];
    if (vnorm2 > 0.0) {
      for (std::size_t j = k; j < n; ++j) {
        double dot = 0.0;
        for (std::size_t i = k; i < m; ++i) dot += v[i] * r(i, j);
        const double f = 2.0 * dot / vnorm2;
        for (std::size_t i = k; i < m; ++i) r(i, j) -= f * v[i];
      }
    }
    diag_sign[k] = r(k, k) >= 0.0 ? 1.0 : -1.0;
    reflectors.push_back(std::move(v));
  }

  // Q = H_0 ... H_{n-1} applied to the leading identity columns.
  Matrix q(m, n);
  for (std::size_t j = 0; j < n; ++j) q(j, j) = 1.0;
  for (std::size_t k = n; k-- > 0;) {
    const std::vector<double>& v = reflectors[k];
    double vnorm2 = 0.0;
    for (std::size_t i = k; i < m; ++i) vnorm2 += v[i] * v[i];
    if (vnorm2 == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t i = k; i < m; ++i) dot += v[i] * q(i, j);
      const double f = 2.0 * dot / vnorm2;
      for (std::size_t i = k; i < m; ++i) q(i, j) -= f * v[i];
    }
  }
  for (std::size_t j = 0; j < n; ++j)
    if (diag_sign[j] < 0.0)
      for (std::size_t i = 0; i < m; ++i) q(i, j) = -q(i, j);
  return q;
}

}  // namespace spdtsm

#endif  // SPDTSM_MATRIX_HPP
