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
//
// Symmetric eigendecomposition and eigenvalue-wise matrix functions with
// their adjoints. Everything downstream (manifold maps, batch norm layers,
// spectral network layers) reduces to these kernels.

#ifndef SPDTSM_MATFUN_HPP
#define SPDTSM_MATFUN_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "spdtsm/matrix.hpp"

namespace spdtsm {

/// Absolute tolerance for accepting a matrix as symmetric.
inline constexpr double kSymmetryTol = 1e-12;

/// A symmetric matrix, validated on construction.
class SymMatrix {
 public:
  explicit SymMatrix(Matrix m) : m_(std::move(m)) {
    if (!is_square(m_)) throw InvalidInputError("SymMatrix: matrix not square");
    const double dev = symmetry_deviation(m_);
    if (dev > kSymmetryTol) {
      std::ostringstream os;
      os << "SymMatrix: symmetry violated by " << dev;
      throw InvalidInputError(os.str());
    }
  }

  /// Builds from (M + Mᵀ)/2; never throws on asymmetry.
  static SymMatrix symmetrized(const Matrix& m) {
    return SymMatrix(spdtsm::symmetrize(m), Unchecked{});
  }

  std::size_t dim() const { return m_.rows(); }
  const Matrix& mat() const { return m_; }
  double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }

 private:
  struct Unchecked {};
  SymMatrix(Matrix m, Unchecked) : m_(std::move(m)) {}
  Matrix m_;
};

/// Eigenvalue-wise scalar function f with derivative f', applied to
/// symmetric matrices through their spectra.
class ScalarFn {
 public:
  enum class Tag { log, exp, power, sqrt, inv_sqrt, re_threshold };

  static ScalarFn log() { return ScalarFn(Tag::log, 0.0); }
  static ScalarFn exp() { return ScalarFn(Tag::exp, 0.0); }
  static ScalarFn power(double p) { return ScalarFn(Tag::power, p); }
  static ScalarFn sqrt() { return ScalarFn(Tag::sqrt, 0.0); }
  static ScalarFn inv_sqrt() { return ScalarFn(Tag::inv_sqrt, 0.0); }
  static ScalarFn re_threshold(double eps) {
    if (!(eps > 0.0))
      throw InvalidInputError("re_threshold: eps must be positive");
    return ScalarFn(Tag::re_threshold, eps);
  }

  Tag tag() const { return tag_; }
  double param() const { return param_; }

  double value(double x) const {
    switch (tag_) {
      case Tag::log: return std::log(x);
      case Tag::exp: return std::exp(x);
      case Tag::power: return std::pow(x, param_);
      case Tag::sqrt: return std::sqrt(x);
      case Tag::inv_sqrt: return 1.0 / std::sqrt(x);
      case Tag::re_threshold: return std::max(x, param_);
    }
    return 0.0;
  }

  double deriv(double x) const {
    switch (tag_) {
      case Tag::log: return 1.0 / x;
      case Tag::exp: return std::exp(x);
      case Tag::power: return param_ * std::pow(x, param_ - 1.0);
      case Tag::sqrt: return 0.5 / std::sqrt(x);
      case Tag::inv_sqrt: return -0.5 / (x * std::sqrt(x));
      case Tag::re_threshold: return x > param_ ? 1.0 : 0.0;
    }
    return 0.0;
  }

  /// True when the function is only defined on strictly positive spectra.
  bool requires_spd() const {
    switch (tag_) {
      case Tag::log:
      case Tag::sqrt:
      case Tag::inv_sqrt:
        return true;
      case Tag::power: {
        // Non-negative integer powers extend to all symmetric matrices.
        const bool integral = param_ == std::nearbyint(param_);
        return !(integral && param_ >= 0.0);
      }
      case Tag::exp:
      case Tag::re_threshold:
        return false;
    }
    return false;
  }

  const char* name() const {
    switch (tag_) {
      case Tag::log: return "log";
      case Tag::exp: return "exp";
      case Tag::power: return "power";
      case Tag::sqrt: return "sqrt";
      case Tag::inv_sqrt: return "inv_sqrt";
      case Tag::re_threshold: return "re_threshold";
    }
    return "?";
  }

 private:
  ScalarFn(Tag tag, double param) : tag_(tag), param_(param) {}
  Tag tag_;
  double param_;
};

/// Spectral factorization: eigenvalues sorted descending, eigenvectors as
/// orthonormal columns of `vectors`.
struct EigenPair {
  std::vector<double> values;
  Matrix vectors;

  std::size_t dim() const { return values.size(); }

  /// U diag(f(λ)) Uᵀ.
  Matrix apply(const ScalarFn& f) const {
    const std::size_t n = dim();
    Matrix scaled(n, n);  // rows of Uᵀ scaled by f(λ)
    for (std::size_t i = 0; i < n; ++i) {
      const double fi = f.value(values[i]);
      for (std::size_t r = 0; r < n; ++r) scaled(i, r) = fi * vectors(r, i);
    }
    Matrix out(n, n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t i = 0; i < n; ++i) {
        const double uri = vectors(r, i);
        const double* si = scaled.data() + i * n;
        double* orow = out.data() + r * n;
        for (std::size_t c = 0; c < n; ++c) orow[c] += uri * si[c];
      }
    return symmetrize(out);
  }

  Matrix reconstruct() const { return apply(ScalarFn::power(1.0)); }
};

namespace detail {

// One cyclic Jacobi sweep over the strict upper triangle of A, accumulating
// rotations into V. Returns the largest off-diagonal magnitude seen.
inline double jacobi_sweep(Matrix& a, Matrix& v, double skip_threshold) {
  const std::size_t n = a.rows();
  double largest = 0.0;
  for (std::size_t p = 0; p + 1 < n; ++p) {
    for (std::size_t q = p + 1; q < n; ++q) {
      const double apq = a(p, q);
      const double abs_apq = std::abs(apq);
      largest = std::max(largest, abs_apq);
      if (abs_apq <= skip_threshold) continue;

      const double app = a(p, p), aqq = a(q, q);
      const double theta = 0.5 * (aqq - app) / apq;
      double t;
      if (std::abs(theta) > 1e150) {
        t = 0.5 / theta;  // avoid overflow in theta*theta
      } else {
        t = 1.0 / (std::abs(theta) + std::sqrt(1.0 + theta * theta));
        if (theta < 0.0) t = -t;
      }
      const double c = 1.0 / std::sqrt(1.0 + t * t);
      const double s = t * c;

      // A <- Jᵀ A J on rows/cols p and q.
      a(p, p) = app - t * apq;
      a(q, q) = aqq + t * apq;
      a(p, q) = a(q, p) = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (i == p || i == q) continue;
        const double aip = a(i, p), aiq = a(i, q);
        a(i, p) = a(p, i) = c * aip - s * aiq;
        a(i, q) = a(q, i) = s * aip + c * aiq;
      }
      double* vp = v.data();
      for (std::size_t i = 0; i < n; ++i, vp += n) {
        const double vip = vp[p], viq = vp[q];
        vp[p] = c * vip - s * viq;
        vp[q] = s * vip + c * viq;
      }
    }
  }
  return largest;
}

}  // namespace detail

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Deterministic for a fixed input: eigenvalues are sorted descending
/// (stable for degenerate spectra) and each eigenvector's first
/// non-negligible component is made positive.
inline EigenPair sym_eig(const SymMatrix& s) {
  const std::size_t n = s.dim();
  Matrix a = s.mat();
  Matrix v = Matrix::identity(n);

  double scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    scale = std::max(scale, std::abs(a.data()[i]));
  if (scale == 0.0) scale = 1.0;

  const double stop = 1e-16 * scale;
  const int max_sweeps = 64;
  bool converged = false;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    // Coarse threshold in early sweeps speeds convergence a little and is
    // the classic cyclic-with-threshold strategy.
    const double skip = (sweep < 3) ? 1e-8 * scale : 0.0;
    const double largest = detail::jacobi_sweep(a, v, skip);
    if (largest <= stop) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    // One final strict pass decides; Jacobi converges quadratically so this
    // is unreachable for finite inputs.
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q)
        off = std::max(off, std::abs(a(p, q)));
    if (off > 1e-10 * scale)
      throw NumericError("sym_eig: Jacobi iteration failed to converge");
  }

  EigenPair out;
  out.values.resize(n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return a(x, x) > a(y, y);
  });

  out.vectors = Matrix(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t src = order[c];
    out.values[c] = a(src, src);
    // Sign convention: first component above noise level is positive.
    double sign = 1.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double x = v(r, src);
      if (std::abs(x) > 1e-12) {
        sign = x > 0.0 ? 1.0 : -1.0;
        break;
      }
    }
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, c) = sign * v(r, src);
  }
  return out;
}

inline EigenPair sym_eig(const Matrix& m) { return sym_eig(SymMatrix(m)); }

/// Relative floor under which a spectrum no longer counts as positive
/// definite.
inline double spd_floor(double lambda_max) {
  return 1e-12 * std::max(1.0, lambda_max);
}

/// A symmetric positive definite matrix.
///
/// The checked constructor runs a full eigendecomposition; `trusted` skips
/// it for matrices that are SPD by construction (exp maps, congruences of
/// SPD matrices, thresholded spectra) and only re-checks symmetry.
class SpdMatrix {
 public:
  explicit SpdMatrix(Matrix m) : m_(std::move(m)) {
    SymMatrix s(m_);  // throws on asymmetry
    const EigenPair eig = sym_eig(s);
    const double lo = eig.values.back(), hi = eig.values.front();
    if (!(lo > spd_floor(hi))) {
      std::ostringstream os;
      os << "SpdMatrix: not positive definite (smallest eigenvalue " << lo
         << ")";
      throw DomainError(os.str());
    }
  }

  static SpdMatrix trusted(Matrix m) {
    if (symmetry_deviation(m) > 1e-9)
      throw NumericError("SpdMatrix::trusted: matrix drifted from symmetry");
    return SpdMatrix(std::move(m), Unchecked{});
  }

  static SpdMatrix identity(std::size_t n) {
    return trusted(Matrix::identity(n));
  }

  std::size_t dim() const { return m_.rows(); }
  const Matrix& mat() const { return m_; }
  double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }

 private:
  struct Unchecked {};
  SpdMatrix(Matrix m, Unchecked) : m_(std::move(m)) {}
  Matrix m_;
};

namespace detail {

inline void check_domain(const EigenPair& eig, const ScalarFn& f) {
  if (!f.requires_spd()) return;
  const double lo = eig.values.back(), hi = eig.values.front();
  if (!(lo > spd_floor(hi))) {
    std::ostringstream os;
    os << "matrix_function(" << f.name()
       << "): input not SPD, smallest eigenvalue " << lo;
    throw DomainError(os.str());
  }
}

}  // namespace detail

/// U diag(f(λ)) Uᵀ from a precomputed factorization.
inline Matrix matrix_function(const EigenPair& eig, const ScalarFn& f) {
  detail::check_domain(eig, f);
  return eig.apply(f);
}

inline Matrix matrix_function(const SymMatrix& z, const ScalarFn& f) {
  return matrix_function(sym_eig(z), f);
}

inline Matrix matrix_function(const SpdMatrix& z, const ScalarFn& f) {
  return matrix_function(sym_eig(z.mat()), f);
}

/// Adjoint of `matrix_function` via the Daleckii-Krein / Loewner rule.
///
/// With (λ, U) = sym_eig(Z) and M = Uᵀ sym(upstream) U, the input gradient
/// is U (K ∘ M) Uᵀ where K_ij is the divided difference of f, falling back
/// to f'((λi+λj)/2) for near-degenerate pairs.
inline Matrix matrix_function_backward(const EigenPair& eig, const ScalarFn& f,
                                       const Matrix& upstream) {
  detail::check_domain(eig, f);
  const std::size_t n = eig.dim();
  const Matrix m = congruence_tza(eig.vectors, symmetrize(upstream));

  const double tie_tol = 1e-10 * std::max(1.0, eig.values.front());
  std::vector<double> fval(n);
  for (std::size_t i = 0; i < n; ++i) fval[i] = f.value(eig.values[i]);

  Matrix km(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double gap = eig.values[i] - eig.values[j];
      const double k = std::abs(gap) > tie_tol
                           ? (fval[i] - fval[j]) / gap
                           : f.deriv(0.5 * (eig.values[i] + eig.values[j]));
      km(i, j) = k * m(i, j);
    }
  }
  return symmetrize(congruence_azat(eig.vectors, km));
}

inline Matrix matrix_function_backward(const SpdMatrix& z, const ScalarFn& f,
                                       const Matrix& upstream) {
  return matrix_function_backward(sym_eig(z.mat()), f, upstream);
}

}  // namespace spdtsm

#endif  // SPDTSM_MATFUN_HPP
