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
// Affine-invariant geometry on the SPD cone: distance, Log/Exp maps,
// geodesics, Fréchet mean/variance via Karcher flow, parallel transport.

#ifndef SPDTSM_MANIFOLD_HPP
#define SPDTSM_MANIFOLD_HPP

#include <cmath>
#include <span>
#include <vector>

#include "spdtsm/matfun.hpp"

namespace spdtsm {

/// Principal square root and its inverse from a single factorization.
struct SqrtPair {
  Matrix sqrt;
  Matrix inv_sqrt;
};

inline SqrtPair spd_sqrt_pair(const SpdMatrix& z) {
  const EigenPair eig = sym_eig(z.mat());
  detail::check_domain(eig, ScalarFn::sqrt());
  return SqrtPair{eig.apply(ScalarFn::sqrt()), eig.apply(ScalarFn::inv_sqrt())};
}

inline void require_same_dim(const SpdMatrix& a, const SpdMatrix& b,
                             const char* where) {
  if (a.dim() != b.dim())
    throw InvalidInputError(std::string(where) + ": dimension mismatch");
}

/// Geodesic distance ||log(Z1^{-1/2} Z2 Z1^{-1/2})||_F.
inline double airm_distance(const SpdMatrix& z1, const SpdMatrix& z2) {
  require_same_dim(z1, z2, "airm_distance");
  const Matrix isq = matrix_function(z1, ScalarFn::inv_sqrt());
  const EigenPair w = sym_eig(SymMatrix::symmetrized(congruence_tza(isq, z2.mat())));
  detail::check_domain(w, ScalarFn::log());
  double s = 0.0;
  for (double lam : w.values) {
    const double l = std::log(lam);
    s += l * l;
  }
  return std::sqrt(s);
}

/// Log_base(Z) = base^{1/2} log(base^{-1/2} Z base^{-1/2}) base^{1/2}.
inline SymMatrix log_map(const SpdMatrix& base, const SpdMatrix& z) {
  require_same_dim(base, z, "log_map");
  const SqrtPair b = spd_sqrt_pair(base);
  const Matrix w = symmetrize(congruence_tza(b.inv_sqrt, z.mat()));
  const Matrix lw = matrix_function(SymMatrix::symmetrized(w), ScalarFn::log());
  return SymMatrix::symmetrized(congruence_tza(b.sqrt, lw));
}

/// Exp_base(S) = base^{1/2} exp(base^{-1/2} S base^{-1/2}) base^{1/2}.
inline SpdMatrix exp_map(const SpdMatrix& base, const SymMatrix& tangent) {
  if (base.dim() != tangent.dim())
    throw InvalidInputError("exp_map: dimension mismatch");
  const SqrtPair b = spd_sqrt_pair(base);
  const Matrix w = symmetrize(congruence_tza(b.inv_sqrt, tangent.mat()));
  const Matrix ew = matrix_function(SymMatrix::symmetrized(w), ScalarFn::exp());
  return SpdMatrix::trusted(symmetrize(congruence_tza(b.sqrt, ew)));
}

/// Weighted geodesic point Z1 #_gamma Z2.
inline SpdMatrix geodesic(const SpdMatrix& z1, const SpdMatrix& z2,
                          double gamma) {
  require_same_dim(z1, z2, "geodesic");
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw InvalidInputError("geodesic: gamma outside [0, 1]");
  if (gamma == 0.0) return z1;
  if (gamma == 1.0) return z2;
  const SqrtPair a = spd_sqrt_pair(z1);
  const Matrix w = symmetrize(congruence_tza(a.inv_sqrt, z2.mat()));
  const Matrix wp = matrix_function(SymMatrix::symmetrized(w), ScalarFn::power(gamma));
  return SpdMatrix::trusted(symmetrize(congruence_tza(a.sqrt, wp)));
}

/// Mean squared AIRM distance from `ref` to the set.
inline double frechet_variance(std::span<const SpdMatrix> points,
                               const SpdMatrix& ref) {
  if (points.empty())
    throw InvalidInputError("frechet_variance: empty point set");
  const Matrix isq = matrix_function(ref, ScalarFn::inv_sqrt());
  double acc = 0.0;
  for (const SpdMatrix& z : points) {
    require_same_dim(ref, z, "frechet_variance");
    const EigenPair w =
        sym_eig(SymMatrix::symmetrized(congruence_tza(isq, z.mat())));
    detail::check_domain(w, ScalarFn::log());
    for (double lam : w.values) {
      const double l = std::log(lam);
      acc += l * l;
    }
  }
  return acc / static_cast<double>(points.size());
}

struct FrechetStats {
  SpdMatrix mean;
  double variance = 0.0;
  int iterations_used = 0;
  double gradient_norm = 0.0;
};

struct KarcherOptions {
  /// Number of flow updates; negative means iterate until the tangent-mean
  /// norm drops below tolerance_scale * dim (at most max_iterations).
  int steps = -1;
  int max_iterations = 100;
  double tolerance_scale = 1e-9;
};

/// Karcher flow for the Fréchet mean: alternately average in the tangent
/// space at the current estimate and map back, with unit step size.
inline FrechetStats frechet_mean(std::span<const SpdMatrix> points,
                                 const SpdMatrix& init,
                                 const KarcherOptions& opt = {}) {
  if (points.empty()) throw InvalidInputError("frechet_mean: empty point set");
  const std::size_t n = init.dim();
  const double tol = opt.tolerance_scale * static_cast<double>(n);
  const int limit = opt.steps >= 0 ? opt.steps : opt.max_iterations;
  const double inv_m = 1.0 / static_cast<double>(points.size());

  SpdMatrix mean = init;
  int iterations = 0;
  double grad_norm = 0.0;
  for (;;) {
    Matrix tangent(n, n);
    for (const SpdMatrix& z : points) tangent += log_map(mean, z).mat();
    tangent *= inv_m;
    grad_norm = fro_norm(tangent);
    if (grad_norm < tol) break;
    if (iterations >= limit) break;
    mean = exp_map(mean, SymMatrix::symmetrized(tangent));
    ++iterations;
  }
  return FrechetStats{mean, frechet_variance(points, mean), iterations,
                      grad_norm};
}

/// Transports Z along the geodesic that carries `from` onto `to`:
/// E = (from^{-1} to)^{1/2} realized symmetrically, result Eᵀ Z E.
inline SpdMatrix parallel_transport(const SpdMatrix& z, const SpdMatrix& from,
                                    const SpdMatrix& to) {
  require_same_dim(z, from, "parallel_transport");
  require_same_dim(z, to, "parallel_transport");
  const SqrtPair f = spd_sqrt_pair(from);
  const Matrix to_inv = matrix_function(to, ScalarFn::power(-1.0));
  const Matrix mid = symmetrize(congruence_tza(f.sqrt, to_inv));
  const Matrix mid_isqrt =
      matrix_function(SymMatrix::symmetrized(mid), ScalarFn::inv_sqrt());
  const Matrix e = f.inv_sqrt * mid_isqrt * f.sqrt;
  return SpdMatrix::trusted(symmetrize(congruence_tza(e, z.mat())));
}

}  // namespace spdtsm

#endif  // SPDTSM_MANIFOLD_HPP
