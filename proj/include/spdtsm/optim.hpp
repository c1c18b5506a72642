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
// ADAM over a mixed parameter space: flat Euclidean tensors plus
// orthonormal-column (Stiefel) matrices handled with tangent projection,
// QR retraction and moment re-projection.

#ifndef SPDTSM_OPTIM_HPP
#define SPDTSM_OPTIM_HPP

#include <cmath>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "spdtsm/matrix.hpp"

namespace spdtsm {

enum class ParamKind { euclidean, stiefel };

/// Non-owning view of one optimizable parameter tensor and its gradient.
struct ParamBinding {
  std::string name;
  ParamKind kind = ParamKind::euclidean;
  double* value = nullptr;
  const double* grad = nullptr;
  std::size_t count = 0;
  std::size_t rows = 0, cols = 0;  // stiefel only
  bool weight_decay = true;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 1e-4;
  double eps = 1e-8;
};

/// Tangent projection at W: G - W sym(WᵀG).
inline Matrix stiefel_project(const Matrix& w, const Matrix& grad) {
  require_same_shape(w, grad, "stiefel_project");
  const Matrix wg = symmetrize(mul_at_b(w, grad));
  return grad - w * wg;
}

inline double stiefel_deviation(const Matrix& w) {
  return fro_norm(mul_at_b(w, w) - Matrix::identity(w.cols()));
}

/// First-order retraction: the Q factor of W + step (with diag(R) > 0, so
/// the retraction is unique).
inline Matrix stiefel_retract(const Matrix& w, const Matrix& step) {
  require_same_shape(w, step, "stiefel_retract");
  return qr_orthonormalize(w + step);
}

/// ADAM with decoupled weight decay on flagged Euclidean parameters and a
/// project/retract/re-project cycle for Stiefel parameters.
class RiemannianAdam {
 public:
  explicit RiemannianAdam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  long step_count() const { return step_; }

  void step(std::span<ParamBinding> params) {
    if (slots_.empty()) {
      slots_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        slots_[i].m.assign(params[i].count, 0.0);
        slots_[i].v.assign(params[i].count, 0.0);
      }
    } else if (slots_.size() != params.size()) {
      throw InvalidInputError("RiemannianAdam: parameter set changed size");
    }

    for (const ParamBinding& p : params) {
      for (std::size_t i = 0; i < p.count; ++i) {
        if (!std::isfinite(p.grad[i])) {
          std::ostringstream os;
          os << "RiemannianAdam: non-finite gradient in '" << p.name
             << "' at index " << i;
          throw NumericError(os.str());
        }
      }
    }

    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      ParamBinding& p = params[pi];
      Slot& s = slots_[pi];
      if (s.m.size() != p.count)
        throw InvalidInputError("RiemannianAdam: parameter shape changed");

      if (p.kind == ParamKind::euclidean) {
        for (std::size_t i = 0; i < p.count; ++i) {
          const double g = p.grad[i];
          s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g;
          s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g * g;
          const double mhat = s.m[i] / bc1;
          const double vhat = s.v[i] / bc2;
          double update = cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
          if (p.weight_decay)
            update += cfg_.lr * cfg_.weight_decay * p.value[i];
          p.value[i] -= update;
        }
        continue;
      }

      // Stiefel parameter.
      if (p.weight_decay)
        throw InvalidInputError(
            "RiemannianAdam: weight decay is not defined on Stiefel "
            "parameters");
      if (p.rows * p.cols != p.count)
        throw InvalidInputError("RiemannianAdam: bad Stiefel shape");
      Matrix w(p.rows, p.cols), g(p.rows, p.cols);
      for (std::size_t i = 0; i < p.count; ++i) {
        w.data()[i] = p.value[i];
        g.data()[i] = p.grad[i];
      }
      if (stiefel_deviation(w) > 1e-6)
        throw ModelStateError("RiemannianAdam: parameter '" + p.name +
                              "' drifted off the Stiefel manifold");

      const Matrix tangent = stiefel_project(w, g);
      Matrix mhat(p.rows, p.cols), step_dir(p.rows, p.cols);
      for (std::size_t i = 0; i < p.count; ++i) {
        const double t = tangent.data()[i];
        s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * t;
        s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * t * t;
        const double mh = s.m[i] / bc1;
        const double vh = s.v[i] / bc2;
        step_dir.data()[i] = -cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
        mhat.data()[i] = mh;
      }
      const Matrix w_next = stiefel_retract(w, step_dir);
      // Transport the first moment by re-projection onto the new tangent
      // space; second moments stay in the ambient coordinates.
      Matrix m_mat(p.rows, p.cols);
      for (std::size_t i = 0; i < p.count; ++i) m_mat.data()[i] = s.m[i];
      const Matrix m_proj = stiefel_project(w_next, m_mat);
      for (std::size_t i = 0; i < p.count; ++i) {
        s.m[i] = m_proj.data()[i];
        p.value[i] = w_next.data()[i];
      }
    }
  }

  /// Flat snapshot of the optimizer state for checkpointing.
  struct State {
    long step = 0;
    std::vector<std::vector<double>> first_moments;
    std::vector<std::vector<double>> second_moments;
  };

  State state() const {
    State st;
    st.step = step_;
    for (const Slot& s : slots_) {
      st.first_moments.push_back(s.m);
      st.second_moments.push_back(s.v);
    }
    return st;
  }

  void restore(const State& st) {
    step_ = st.step;
    slots_.clear();
    for (std::size_t i = 0; i < st.first_moments.size(); ++i)
      slots_.push_back(Slot{st.first_moments[i], st.second_moments[i]});
  }

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  AdamConfig cfg_;
  std::vector<Slot> slots_;
  long step_ = 0;
};

}  // namespace spdtsm

#endif  // SPDTSM_OPTIM_HPP
