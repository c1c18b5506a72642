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
// Network building blocks with explicit forward/backward passes. Each layer
// caches what its backward needs; parameter gradients accumulate until
// zero_grad().

#ifndef SPDTSM_LAYERS_HPP
#define SPDTSM_LAYERS_HPP

#include <cmath>
#include <span>
#include <vector>

#include "spdtsm/matfun.hpp"
#include "spdtsm/rng.hpp"

namespace spdtsm {

/// Dense [d0][d1][d2] array of doubles, innermost index contiguous.
struct Tensor3 {
  std::size_t d0 = 0, d1 = 0, d2 = 0;
  std::vector<double> v;

  Tensor3() = default;
  Tensor3(std::size_t a, std::size_t b, std::size_t c)
      : d0(a), d1(b), d2(c), v(a * b * c, 0.0) {}

  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return v[(i * d1 + j) * d2 + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return v[(i * d1 + j) * d2 + k];
  }
  double* row(std::size_t i, std::size_t j) { return &v[(i * d1 + j) * d2]; }
  const double* row(std::size_t i, std::size_t j) const {
    return &v[(i * d1 + j) * d2];
  }
  std::size_t size() const { return v.size(); }
};

/// Dense [d0][d1][d2][d3] array.
struct Tensor4 {
  std::size_t d0 = 0, d1 = 0, d2 = 0, d3 = 0;
  std::vector<double> v;

  Tensor4() = default;
  Tensor4(std::size_t a, std::size_t b, std::size_t c, std::size_t d)
      : d0(a), d1(b), d2(c), d3(d), v(a * b * c * d, 0.0) {}

  double* row(std::size_t i, std::size_t j, std::size_t k) {
    return &v[((i * d1 + j) * d2 + k) * d3];
  }
  const double* row(std::size_t i, std::size_t j, std::size_t k) const {
    return &v[((i * d1 + j) * d2 + k) * d3];
  }
  std::size_t size() const { return v.size(); }
};

/// Per-channel FIR filter bank along time, reflect-padded so the output
/// keeps T samples. Input [M, P, T], output [M, F, P, T].
class TemporalConv {
 public:
  TemporalConv(int filters, int kernel) : filters_(filters), kernel_(kernel) {
    if (kernel < 1 || kernel % 2 == 0)
      throw ConfigError("TemporalConv: kernel length must be odd");
    w_ = Matrix(filters, kernel);
    gw_ = Matrix(filters, kernel);
  }

  void init(Rng& rng) {
    const double stddev = 1.0 / std::sqrt(static_cast<double>(kernel_));
    w_ = rng.gaussian_matrix(filters_, kernel_, stddev);
  }

  Tensor4 forward(const Tensor3& x) {
    const std::size_t m = x.d0, p = x.d1, t = x.d2;
    const std::size_t k = static_cast<std::size_t>(kernel_);
    if (t < k)
      throw InvalidInputError(
          "TemporalConv: fewer time samples than the kernel length");
    cache_in_ = x;
    const std::size_t pad = k / 2;
    Tensor4 out(m, filters_, p, t);
    std::vector<double> padded(t + k - 1);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t c = 0; c < p; ++c) {
        reflect_pad(x.row(i, c), t, pad, padded.data());
        for (int f = 0; f < filters_; ++f) {
          const double* wf = w_.data() + f * k;
          double* orow = out.row(i, f, c);
          for (std::size_t s = 0; s < t; ++s) {
            double acc = 0.0;
            const double* xs = padded.data() + s;
            for (std::size_t q = 0; q < k; ++q) acc += wf[q] * xs[q];
            orow[s] = acc;
          }
        }
      }
    }
    return out;
  }

  Tensor3 backward(const Tensor4& up) {
    const Tensor3& x = cache_in_;
    const std::size_t m = x.d0, p = x.d1, t = x.d2;
    const std::size_t k = static_cast<std::size_t>(kernel_);
    const std::size_t pad = k / 2;
    Tensor3 dx(m, p, t);
    std::vector<double> padded(t + k - 1);
    std::vector<double> dpadded(t + k - 1);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t c = 0; c < p; ++c) {
        reflect_pad(x.row(i, c), t, pad, padded.data());
        std::fill(dpadded.begin(), dpadded.end(), 0.0);
        for (int f = 0; f < filters_; ++f) {
          const double* wf = w_.data() + f * k;
          double* gwf = gw_.data() + f * k;
          const double* urow = up.row(i, f, c);
          for (std::size_t s = 0; s < t; ++s) {
            const double u = urow[s];
            const double* xs = padded.data() + s;
            double* ds = dpadded.data() + s;
            for (std::size_t q = 0; q < k; ++q) {
              gwf[q] += u * xs[q];
              ds[q] += u * wf[q];
            }
          }
        }
        // Fold the padded-gradient tails back through the reflection.
        double* drow = dx.row(i, c);
        for (std::size_t j = 0; j < t + k - 1; ++j)
          drow[reflect_index(static_cast<long>(j) - static_cast<long>(pad),
                             t)] += dpadded[j];
      }
    }
    return dx;
  }

  Matrix& weights() { return w_; }
  const Matrix& weights() const { return w_; }
  Matrix& grads() { return gw_; }
  void zero_grad() { gw_ = Matrix(filters_, kernel_); }
  int filters() const { return filters_; }
  int kernel() const { return kernel_; }

 private:
  static std::size_t reflect_index(long j, std::size_t t) {
    const long n = static_cast<long>(t);
    if (j < 0) j = -j;
    if (j >= n) j = 2 * n - 2 - j;
    return static_cast<std::size_t>(j);
  }

  static void reflect_pad(const double* src, std::size_t t, std::size_t pad,
                          double* dst) {
    for (std::size_t j = 0; j < t + 2 * pad; ++j)
      dst[j] = src[reflect_index(static_cast<long>(j) - static_cast<long>(pad),
                                 t)];
  }

  int filters_, kernel_;
  Matrix w_, gw_;
  Tensor3 cache_in_;
};

/// Full-height linear mixing over (band, channel) pairs: [M, F, P, T] to
/// [M, O, T]. Each observation slice is an (F*P x T) matrix, so this is one
/// matmul per trial.
class SpatialConv {
 public:
  SpatialConv(int out_channels, int bands, int channels)
      : out_(out_channels), bands_(bands), channels_(channels) {
    w_ = Matrix(out_, bands_ * channels_);
    gw_ = Matrix(out_, bands_ * channels_);
  }

  void init(Rng& rng) {
    const double stddev =
        1.0 / std::sqrt(static_cast<double>(bands_ * channels_));
    w_ = rng.gaussian_matrix(out_, bands_ * channels_, stddev);
  }

  Tensor3 forward(const Tensor4& x) {
    if (x.d1 != static_cast<std::size_t>(bands_) ||
        x.d2 != static_cast<std::size_t>(channels_))
      throw InvalidInputError("SpatialConv: input shape mismatch");
    cache_in_ = x;
    const std::size_t m = x.d0, t = x.d3, in = bands_ * channels_;
    Tensor3 out(m, out_, t);
    for (std::size_t i = 0; i < m; ++i) {
      const double* xi = x.row(i, 0, 0);
      for (int o = 0; o < out_; ++o) {
        const double* wo = w_.data() + o * in;
        double* orow = out.row(i, o);
        for (std::size_t c = 0; c < in; ++c) {
          const double wv = wo[c];
          const double* xrow = xi + c * t;
          for (std::size_t s = 0; s < t; ++s) orow[s] += wv * xrow[s];
        }
      }
    }
    return out;
  }

  Tensor4 backward(const Tensor3& up) {
    const Tensor4& x = cache_in_;
    const std::size_t m = x.d0, t = x.d3, in = bands_ * channels_;
    Tensor4 dx(m, bands_, channels_, t);
    for (std::size_t i = 0; i < m; ++i) {
      const double* xi = x.row(i, 0, 0);
      double* dxi = dx.row(i, 0, 0);
      for (int o = 0; o < out_; ++o) {
        const double* urow = up.row(i, o);
        const double* wo = w_.data() + o * in;
        double* gwo = gw_.data() + o * in;
        for (std::size_t c = 0; c < in; ++c) {
          const double* xrow = xi + c * t;
          double* dxrow = dxi + c * t;
          const double wv = wo[c];
          double acc = 0.0;
          for (std::size_t s = 0; s < t; ++s) {
            acc += urow[s] * xrow[s];
            dxrow[s] += wv * urow[s];
          }
          gwo[c] += acc;
        }
      }
    }
    return dx;
  }

  Matrix& weights() { return w_; }
  const Matrix& weights() const { return w_; }
  Matrix& grads() { return gw_; }
  void zero_grad() { gw_ = Matrix(out_, bands_ * channels_); }
  int out_channels() const { return out_; }

 private:
  int out_, bands_, channels_;
  Matrix w_, gw_;
  Tensor4 cache_in_;
};

/// Unbiased covariance over the time dimension with row centering:
/// [M, C, T] to M symmetric PSD matrices of size C.
class CovariancePool {
 public:
  std::vector<Matrix> forward(const Tensor3& x) {
    const std::size_t m = x.d0, c = x.d1, t = x.d2;
    if (t < 2)
      throw InvalidInputError("CovariancePool: need at least two samples");
    centered_ = x;
    std::vector<Matrix> out;
    out.reserve(m);
    const double norm = 1.0 / static_cast<double>(t - 1);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t r = 0; r < c; ++r) {
        double* row = centered_.row(i, r);
        double mean = 0.0;
        for (std::size_t s = 0; s < t; ++s) mean += row[s];
        mean /= static_cast<double>(t);
        for (std::size_t s = 0; s < t; ++s) row[s] -= mean;
      }
      Matrix z(c, c);
      for (std::size_t r = 0; r < c; ++r) {
        const double* xr = centered_.row(i, r);
        for (std::size_t q = r; q < c; ++q) {
          const double* xq = centered_.row(i, q);
          double acc = 0.0;
          for (std::size_t s = 0; s < t; ++s) acc += xr[s] * xq[s];
          z(r, q) = z(q, r) = acc * norm;
        }
      }
      out.push_back(std::move(z));
    }
    return out;
  }

  Tensor3 backward(std::span<const Matrix> up) {
    const std::size_t m = centered_.d0, c = centered_.d1, t = centered_.d2;
    Tensor3 dx(m, c, t);
    const double norm = 2.0 / static_cast<double>(t - 1);
    for (std::size_t i = 0; i < m; ++i) {
      const Matrix s = symmetrize(up[i]) * norm;
      for (std::size_t r = 0; r < c; ++r) {
        double* drow = dx.row(i, r);
        for (std::size_t q = 0; q < c; ++q) {
          const double srq = s(r, q);
          const double* xq = centered_.row(i, q);
          for (std::size_t k = 0; k < t; ++k) drow[k] += srq * xq[k];
        }
        // Adjoint of the row centering.
        double mean = 0.0;
        for (std::size_t k = 0; k < t; ++k) mean += drow[k];
        mean /= static_cast<double>(t);
        for (std::size_t k = 0; k < t; ++k) drow[k] -= mean;
      }
    }
    return dx;
  }

 private:
  Tensor3 centered_;
};

/// Bilinear subspace projection Z -> Wᵀ Z W with W on the Stiefel manifold.
class BiMap {
 public:
  BiMap(int in_dim, int out_dim) : in_(in_dim), out_(out_dim) {
    if (out_dim > in_dim)
      throw ConfigError("BiMap: subspace larger than the input dimension");
    w_ = Matrix(in_, out_);
    for (int i = 0; i < out_; ++i) w_(i, i) = 1.0;
    gw_ = Matrix(in_, out_);
  }

  /// Orthonormal columns from the Q factor of a seeded Gaussian draw.
  void init(Rng& rng) { w_ = qr_orthonormalize(rng.gaussian_matrix(in_, out_)); }

  std::vector<Matrix> forward(std::span<const Matrix> z) {
    check_stiefel();
    cache_in_.assign(z.begin(), z.end());
    std::vector<Matrix> out;
    out.reserve(z.size());
    for (const Matrix& zi : z)
      out.push_back(symmetrize(congruence_tza(w_, zi)));
    return out;
  }

  std::vector<Matrix> backward(std::span<const Matrix> up) {
    std::vector<Matrix> dz;
    dz.reserve(up.size());
    for (std::size_t j = 0; j < up.size(); ++j) {
      const Matrix s = symmetrize(up[j]);
      dz.push_back(congruence_azat(w_, s));
      gw_ += (cache_in_[j] * w_ * s) * 2.0;
    }
    return dz;
  }

  Matrix& weights() { return w_; }
  const Matrix& weights() const { return w_; }
  Matrix& grads() { return gw_; }
  void zero_grad() { gw_ = Matrix(in_, out_); }

  void check_stiefel() const {
    const Matrix gram = mul_at_b(w_, w_);
    if (fro_norm(gram - Matrix::identity(out_)) > 1e-6)
      throw ModelStateError("BiMap: weights drifted off the Stiefel manifold");
  }

 private:
  int in_, out_;
  Matrix w_, gw_;
  std::vector<Matrix> cache_in_;
};

/// Eigenvalue thresholding that guarantees SPD output. Counts how often the
/// threshold actually binds; a trained model is expected to keep it silent.
class ReEig {
 public:
  explicit ReEig(double eps = 1e-4) : fn_(ScalarFn::re_threshold(eps)) {}

  std::vector<SpdMatrix> forward(std::span<const Matrix> z) {
    cache_.clear();
    cache_.reserve(z.size());
    std::vector<SpdMatrix> out;
    out.reserve(z.size());
    for (const Matrix& zi : z) {
      EigenPair eig = sym_eig(SymMatrix::symmetrized(zi));
      for (double lam : eig.values)
        if (lam < fn_.param()) ++activations_;
      out.push_back(SpdMatrix::trusted(eig.apply(fn_)));
      cache_.push_back(std::move(eig));
    }
    return out;
  }

  std::vector<Matrix> backward(std::span<const Matrix> up) const {
    if (cache_.size() != up.size())
      throw UsageError("ReEig::backward without a matching forward");
    std::vector<Matrix> dz;
    dz.reserve(up.size());
    for (std::size_t j = 0; j < up.size(); ++j)
      dz.push_back(matrix_function_backward(cache_[j], fn_, up[j]));
    return dz;
  }

  long activation_count() const { return activations_; }
  void reset_activation_count() { activations_ = 0; }
  double threshold() const { return fn_.param(); }

 private:
  ScalarFn fn_;
  std::vector<EigenPair> cache_;
  long activations_ = 0;
};

/// Linear classifier with a bias row and softmax cross-entropy loss.
class SoftmaxClassifier {
 public:
  SoftmaxClassifier(int features, int classes)
      : features_(features), classes_(classes),
        w_(features + 1, classes), gw_(features + 1, classes) {}

  Matrix logits(const Matrix& v) const {
    if (v.cols() != static_cast<std::size_t>(features_))
      throw InvalidInputError("SoftmaxClassifier: feature width mismatch");
    Matrix out(v.rows(), classes_);
    for (std::size_t i = 0; i < v.rows(); ++i) {
      for (int c = 0; c < classes_; ++c) {
        double acc = w_(features_, c);  // bias row
        for (int f = 0; f < features_; ++f) acc += v(i, f) * w_(f, c);
        out(i, c) = acc;
      }
    }
    return out;
  }

  static Matrix softmax(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      double peak = logits(i, 0);
      for (std::size_t c = 1; c < logits.cols(); ++c)
        peak = std::max(peak, logits(i, c));
      double total = 0.0;
      for (std::size_t c = 0; c < logits.cols(); ++c) {
        p(i, c) = std::exp(logits(i, c) - peak);
        total += p(i, c);
      }
      for (std::size_t c = 0; c < logits.cols(); ++c) p(i, c) /= total;
    }
    return p;
  }

  static std::vector<int> predictions(const Matrix& logits) {
    std::vector<int> out(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      int best = 0;
      for (std::size_t c = 1; c < logits.cols(); ++c)
        if (logits(i, c) > logits(i, best)) best = static_cast<int>(c);
      out[i] = best;
    }
    return out;
  }

  double loss(const Matrix& logits, std::span<const int> labels) const {
    check_labels(labels, logits.rows());
    const Matrix p = softmax(logits);
    double total = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i)
      total -= std::log(std::max(p(i, labels[i]), 1e-300));
    return total / static_cast<double>(logits.rows());
  }

  /// Mean cross-entropy plus gradients; returns the loss and the feature
  /// gradients, accumulating the weight gradient.
  std::pair<double, Matrix> loss_backward(const Matrix& v,
                                          const Matrix& logits_m,
                                          std::span<const int> labels) {
    check_labels(labels, logits_m.rows());
    const std::size_t m = logits_m.rows();
    Matrix dlogits = softmax(logits_m);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      total -= std::log(std::max(dlogits(i, labels[i]), 1e-300));
      dlogits(i, labels[i]) -= 1.0;
    }
    dlogits *= 1.0 / static_cast<double>(m);

    Matrix dv(m, features_);
    for (std::size_t i = 0; i < m; ++i) {
      for (int c = 0; c < classes_; ++c) {
        const double d = dlogits(i, c);
        gw_(features_, c) += d;
        for (int f = 0; f < features_; ++f) {
          gw_(f, c) += v(i, f) * d;
          dv(i, f) += w_(f, c) * d;
        }
      }
    }
    return {total / static_cast<double>(m), dv};
  }

  Matrix& weights() { return w_; }
  const Matrix& weights() const { return w_; }
  Matrix& grads() { return gw_; }
  void zero_grad() { gw_ = Matrix(features_ + 1, classes_); }
  int classes() const { return classes_; }
  int features() const { return features_; }

 private:
  void check_labels(std::span<const int> labels, std::size_t rows) const {
    if (labels.size() != rows)
      throw InvalidInputError("SoftmaxClassifier: label count mismatch");
    for (int y : labels)
      if (y < 0 || y >= classes_)
        throw InvalidInputError("SoftmaxClassifier: label out of range");
  }

  int features_, classes_;
  Matrix w_, gw_;
};

}  // namespace spdtsm

#endif  // SPDTSM_LAYERS_HPP
