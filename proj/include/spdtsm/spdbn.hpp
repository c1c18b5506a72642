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
// Batch normalization on the SPD manifold: plain Riemannian BN (whitening
// by parallel transport), batch-renormalization with variance control, the
// momentum variant with decaying training momentum and separate train/test
// running statistics, and domain-specific dispatch on top of any of them.

#ifndef SPDTSM_SPDBN_HPP
#define SPDTSM_SPDBN_HPP

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

#include "spdtsm/manifold.hpp"

namespace spdtsm {

enum class RunMode { train, eval };

/// Momentum used when folding a batch estimate into running statistics.
class MomentumSchedule {
 public:
  enum class Kind { clamped_exponential, power_decay, constant };

  /// 1 - gamma_min^((K-k)/(K-1)) + gamma_min, clamped to [gamma_min, 1].
  /// Starts at 1 and decays to gamma_min, attained at step K.
  static MomentumSchedule clamped_exponential(double gamma_min,
                                              int attain_step) {
    if (!(gamma_min >= 0.0 && gamma_min <= 1.0))
      throw ConfigError("momentum schedule: gamma_min outside [0, 1]");
    if (attain_step < 2)
      throw ConfigError("momentum schedule: attain step must be >= 2");
    MomentumSchedule s;
    s.kind_ = Kind::clamped_exponential;
    s.gamma_min_ = gamma_min;
    s.attain_step_ = attain_step;
    return s;
  }

  /// 1/k^alpha; the streaming-convergence schedule.
  static MomentumSchedule power_decay(double alpha) {
    if (!(alpha > 0.0))
      throw ConfigError("momentum schedule: alpha must be positive");
    MomentumSchedule s;
    s.kind_ = Kind::power_decay;
    s.alpha_ = alpha;
    return s;
  }

  static MomentumSchedule constant(double gamma) {
    if (!(gamma >= 0.0 && gamma <= 1.0))
      throw ConfigError("momentum schedule: constant gamma outside [0, 1]");
    MomentumSchedule s;
    s.kind_ = Kind::constant;
    s.constant_ = gamma;
    return s;
  }

  double value(long k) const {
    switch (kind_) {
      case Kind::clamped_exponential: {
        const double remaining =
            static_cast<double>(std::max<long>(attain_step_ - k, 0));
        const double exponent = remaining / (attain_step_ - 1);
        const double raw = 1.0 - std::pow(gamma_min_, exponent) + gamma_min_;
        return std::min(1.0, std::max(gamma_min_, raw));
      }
      case Kind::power_decay:
        if (k < 1)
          throw InvalidInputError("power_decay schedule needs step k >= 1");
        return 1.0 / std::pow(static_cast<double>(k), alpha_);
      case Kind::constant:
        return constant_;
    }
    return 1.0;
  }

  Kind kind() const { return kind_; }
  double gamma_min() const { return gamma_min_; }
  int attain_step() const { return attain_step_; }
  double alpha() const { return alpha_; }

 private:
  MomentumSchedule() = default;
  Kind kind_ = Kind::constant;
  double gamma_min_ = 0.2;
  int attain_step_ = 40;
  double alpha_ = 1.0;
  double constant_ = 0.1;
};

/// Paired running Fréchet statistics: one set consumed while training, one
/// while testing. Both start at the identity with unit variance.
struct RunningGeoStats {
  SpdMatrix train_mean;
  SpdMatrix test_mean;
  double train_var = 1.0;
  double test_var = 1.0;
  long step = 0;

  static RunningGeoStats identity(std::size_t dim) {
    return RunningGeoStats{SpdMatrix::identity(dim), SpdMatrix::identity(dim),
                           1.0, 1.0, 0};
  }
};

/// Learnable normalization targets: a bias point on the manifold and a
/// dispersion scale kept positive through its logarithm.
struct NormParams {
  double log_scale = 0.0;
  SpdMatrix bias_mean;

  explicit NormParams(std::size_t dim) : bias_mean(SpdMatrix::identity(dim)) {}
  double scale() const { return std::exp(log_scale); }
};

enum class BnMode { rbn, spdbn, spdmbn };

struct SpdBnConfig {
  BnMode mode = BnMode::spdmbn;
  double eps = 1e-5;
  /// Momentum for the test-statistics update (and the single momentum in
  /// rbn mode).
  double gamma_test = 0.1;
  MomentumSchedule schedule = MomentumSchedule::clamped_exponential(0.2, 40);
  bool learn_variance = true;

  void validate() const {
    if (!(eps > 0.0)) throw ConfigError("SpdBnConfig: eps must be positive");
    if (!(gamma_test >= 0.0 && gamma_test <= 1.0))
      throw ConfigError("SpdBnConfig: gamma_test outside [0, 1]");
  }
};

/// One Karcher-flow step from the identity, i.e. the log-Euclidean mean
/// exp(mean_j log Z_j). The tractable within-batch mean estimate.
inline SpdMatrix batch_mean_estimate(std::span<const SpdMatrix> batch) {
  if (batch.empty())
    throw InvalidInputError("batch_mean_estimate: empty batch");
  const std::size_t n = batch.front().dim();
  Matrix acc(n, n);
  for (const SpdMatrix& z : batch) acc += matrix_function(z, ScalarFn::log());
  acc *= 1.0 / static_cast<double>(batch.size());
  return SpdMatrix::trusted(
      matrix_function(SymMatrix::symmetrized(acc), ScalarFn::exp()));
}

/// Folds a batch-mean estimate into both running-statistics sets: geodesic
/// interpolation for the means, exponential moving averages for the
/// variances (measured at the freshly updated means), then advances the
/// step counter.
inline void update_running(RunningGeoStats& stats, const SpdMatrix& batch_mean,
                           std::span<const SpdMatrix> batch,
                           double gamma_train, double gamma_test) {
  stats.train_mean = geodesic(stats.train_mean, batch_mean, gamma_train);
  stats.train_var = (1.0 - gamma_train) * stats.train_var +
                    gamma_train * frechet_variance(batch, stats.train_mean);
  stats.test_mean = geodesic(stats.test_mean, batch_mean, gamma_test);
  stats.test_var = (1.0 - gamma_test) * stats.test_var +
                   gamma_test * frechet_variance(batch, stats.test_mean);
  ++stats.step;
}

namespace detail {

inline std::vector<std::pair<int, std::vector<std::size_t>>> group_by_domain(
    std::span<const int> domains) {
  std::map<int, std::vector<std::size_t>> m;
  for (std::size_t i = 0; i < domains.size(); ++i) m[domains[i]].push_back(i);
  return {m.begin(), m.end()};
}

inline bool is_identity(const Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      if (m(i, j) != (i == j ? 1.0 : 0.0)) return false;
  return true;
}

struct NormalizeCache {
  Matrix whitener;           // use_mean^{-1/2}
  Matrix bias_sqrt;          // bias_mean^{1/2} (empty when bias is identity)
  double exponent = 1.0;     // scale / (sqrt(use_var) + eps)
  std::vector<EigenPair> whitened_eigs;
  bool rbn_transport = false;  // out = Eᵀ Z E with E = whitener path
};

// Whiten -> matrix power -> rebias for one batch; optionally records what
// the backward pass needs.
inline std::vector<SpdMatrix> normalize_core(std::span<const SpdMatrix> batch,
                                             const SpdMatrix& use_mean,
                                             double use_var,
                                             const NormParams& params,
                                             double eps,
                                             NormalizeCache* cache) {
  // Zero variance happens for zero-spread batches; eps guards the division.
  if (!(use_var >= 0.0))
    throw InvalidInputError("normalize_batch: variance must be non-negative");
  const std::size_t dim = use_mean.dim();
  const bool whiten_trivial = is_identity(use_mean.mat());
  const Matrix whitener =
      whiten_trivial ? Matrix::identity(dim)
                     : matrix_function(use_mean, ScalarFn::inv_sqrt());
  const bool bias_trivial = is_identity(params.bias_mean.mat());
  Matrix bias_sqrt;
  if (!bias_trivial)
    bias_sqrt = matrix_function(params.bias_mean, ScalarFn::sqrt());

  const double exponent = params.scale() / (std::sqrt(use_var) + eps);
  const ScalarFn power = ScalarFn::power(exponent);

  if (cache) {
    cache->whitener = whitener;
    cache->bias_sqrt = bias_sqrt;
    cache->exponent = exponent;
    cache->whitened_eigs.clear();
    cache->whitened_eigs.reserve(batch.size());
    cache->rbn_transport = false;
  }

  std::vector<SpdMatrix> out;
  out.reserve(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const Matrix whitened =
        whiten_trivial
            ? batch[j].mat()
            : symmetrize(congruence_tza(whitener, batch[j].mat()));
    EigenPair eig = sym_eig(SymMatrix::symmetrized(whitened));
    try {
      detail::check_domain(eig, ScalarFn::log());
    } catch (const DomainError& err) {
      std::ostringstream os;
      os << "normalize_batch: observation " << j
         << " left the SPD cone after whitening: " << err.what();
      throw NumericError(os.str());
    }
    Matrix y = eig.apply(power);
    if (!bias_trivial) y = symmetrize(congruence_tza(bias_sqrt, y));
    out.push_back(SpdMatrix::trusted(std::move(y)));
    if (cache) cache->whitened_eigs.push_back(std::move(eig));
  }
  return out;
}

}  // namespace detail

/// Pure normalization map of a batch against given statistics (the last
/// line of the momentum-BN update): whiten around the mean, rescale the
/// dispersion through a matrix power, transport to the bias point.
inline std::vector<SpdMatrix> normalize_batch(std::span<const SpdMatrix> batch,
                                              const SpdMatrix& use_mean,
                                              double use_var,
                                              const NormParams& params,
                                              double eps) {
  return detail::normalize_core(batch, use_mean, use_var, params, eps,
                                nullptr);
}

/// Stateful SPD batch-normalization layer.
///
/// Train-mode forward mutates the running statistics and records the
/// context needed by backward; it must be externally serialized. Eval-mode
/// forward is read-only and safe to run concurrently.
class SpdBatchNorm {
 public:
  SpdBatchNorm(std::size_t dim, SpdBnConfig cfg,
               std::shared_ptr<NormParams> params)
      : cfg_(cfg),
        params_(std::move(params)),
        stats_(RunningGeoStats::identity(dim)),
        dim_(dim) {
    cfg_.validate();
    if (!params_) throw InvalidInputError("SpdBatchNorm: null parameters");
    if (params_->bias_mean.dim() != dim)
      throw InvalidInputError("SpdBatchNorm: bias dimension mismatch");
  }

  std::size_t dim() const { return dim_; }
  const SpdBnConfig& config() const { return cfg_; }
  const RunningGeoStats& stats() const { return stats_; }
  RunningGeoStats& stats() { return stats_; }
  NormParams& params() { return *params_; }
  const NormParams& params() const { return *params_; }
  std::shared_ptr<NormParams> shared_params() const { return params_; }
  long train_observations() const { return train_observations_; }

  /// Pins the schedule step (the trainer advances it once per epoch). When
  /// never called, the step follows the per-batch update counter.
  void set_schedule_step(long k) { manual_step_ = k; }

  std::vector<SpdMatrix> forward(std::span<const SpdMatrix> batch,
                                 RunMode mode) {
    if (mode == RunMode::train) return forward_train(batch);
    return forward_eval(batch);
  }

  struct BackwardResult {
    std::vector<Matrix> input_grads;
    double d_log_scale = 0.0;
  };

  /// Gradients through the normalization map. Running statistics are
  /// treated as constants (stop-gradient).
  BackwardResult backward(std::span<const Matrix> upstream) const {
    if (!has_cache_)
      throw UsageError("SpdBatchNorm::backward without a train-mode forward");
    if (upstream.size() != cache_.whitened_eigs.size())
      throw InvalidInputError("SpdBatchNorm::backward: batch size mismatch");

    const bool whiten_trivial = detail::is_identity(cache_.whitener);
    const bool bias_trivial = cache_.bias_sqrt.empty();
    const double p = cache_.exponent;
    const ScalarFn power = ScalarFn::power(p);

    BackwardResult res;
    res.input_grads.reserve(upstream.size());
    double dp_total = 0.0;
    for (std::size_t j = 0; j < upstream.size(); ++j) {
      Matrix dy = symmetrize(upstream[j]);
      if (!bias_trivial) dy = symmetrize(congruence_tza(cache_.bias_sqrt, dy));

      if (cache_.rbn_transport) {
        res.input_grads.push_back(
            whiten_trivial ? dy
                           : symmetrize(congruence_azat(cache_.whitener, dy)));
        continue;
      }

      const EigenPair& eig = cache_.whitened_eigs[j];
      const std::size_t n = eig.dim();
      const Matrix m = congruence_tza(eig.vectors, dy);

      const double tie_tol = 1e-10 * std::max(1.0, eig.values.front());
      Matrix km(n, n);
      for (std::size_t a = 0; a < n; ++a) {
        const double la = eig.values[a];
        const double fa = power.value(la);
        dp_total += m(a, a) * fa * std::log(la);
        for (std::size_t b = 0; b < n; ++b) {
          const double gap = la - eig.values[b];
          const double k =
              std::abs(gap) > tie_tol
                  ? (fa - power.value(eig.values[b])) / gap
                  : power.deriv(0.5 * (la + eig.values[b]));
          km(a, b) = k * m(a, b);
        }
      }
      Matrix dw = symmetrize(congruence_azat(eig.vectors, km));
      res.input_grads.push_back(
          whiten_trivial ? std::move(dw)
                         : symmetrize(congruence_tza(cache_.whitener, dw)));
    }
    // d/d(log scale) = p * dL/dp since the exponent is linear in the scale.
    res.d_log_scale = cfg_.learn_variance ? p * dp_total : 0.0;
    return res;
  }

  /// Re-applies the normalization map of the last recorded train-mode
  /// forward to a (possibly different) batch without touching any state.
  /// This is the stop-gradient semantics that finite-difference checks of
  /// upstream parameters need.
  std::vector<SpdMatrix> forward_frozen(
      std::span<const SpdMatrix> batch) const {
    if (!has_cache_)
      throw UsageError(
          "SpdBatchNorm::forward_frozen without a train-mode forward");
    if (cache_.rbn_transport) {
      std::vector<SpdMatrix> out;
      out.reserve(batch.size());
      for (const SpdMatrix& z : batch)
        out.push_back(SpdMatrix::trusted(
            symmetrize(congruence_tza(cache_.whitener, z.mat()))));
      return out;
    }
    return normalize_batch(batch, *frozen_mean_, frozen_var_, *params_,
                           cfg_.eps);
  }

  /// Swaps the shared parameter block (used when deep-copying models).
  void rebind_params(std::shared_ptr<NormParams> params) {
    params_ = std::move(params);
  }

  /// Replaces the test statistics with fully converged Fréchet estimates of
  /// a whole domain; the unsupervised test-time adaptation path.
  void fit_statistics(std::span<const SpdMatrix> domain_data) {
    if (domain_data.size() < 2)
      throw InvalidInputError(
          "fit_statistics: need at least 2 observations per domain");
    const FrechetStats st =
        frechet_mean(domain_data, batch_mean_estimate(domain_data));
    stats_.test_mean = st.mean;
    stats_.test_var = st.variance;
  }

 private:
  std::vector<SpdMatrix> forward_train(std::span<const SpdMatrix> batch) {
    if (batch.empty())
      throw InvalidInputError("SpdBatchNorm: empty training batch");
    const SpdMatrix batch_mean = batch_mean_estimate(batch);
    const long step = manual_step_ ? *manual_step_ : stats_.step + 1;

    if (cfg_.mode == BnMode::rbn) {
      // Whitening by the batch mean itself; running mean kept for eval.
      stats_.test_mean = geodesic(stats_.test_mean, batch_mean, cfg_.gamma_test);
      ++stats_.step;
      train_observations_ += static_cast<long>(batch.size());
      return transport_forward(batch, batch_mean);
    }

    const double gamma_train = cfg_.schedule.value(step);
    // Batch renormalization keeps a single statistics set: both running
    // estimates follow the same constant momentum.
    const double gamma_test =
        cfg_.mode == BnMode::spdbn ? gamma_train : cfg_.gamma_test;
    update_running(stats_, batch_mean, batch, gamma_train, gamma_test);
    train_observations_ += static_cast<long>(batch.size());

    std::vector<SpdMatrix> out = detail::normalize_core(
        batch, stats_.train_mean, stats_.train_var, *params_, cfg_.eps,
        &cache_);
    frozen_mean_ = stats_.train_mean;
    frozen_var_ = stats_.train_var;
    has_cache_ = true;
    return out;
  }

  std::vector<SpdMatrix> forward_eval(std::span<const SpdMatrix> batch) const {
    if (cfg_.mode == BnMode::rbn)
      return transport_eval(batch, stats_.test_mean);
    return normalize_batch(batch, stats_.test_mean, stats_.test_var, *params_,
                           cfg_.eps);
  }

  // RBN path: out = Eᵀ Z E with E = (mean^{-1} bias)^{1/2}; reduces to
  // whitening by mean^{-1/2} when the bias is the identity.
  std::vector<SpdMatrix> transport_forward(std::span<const SpdMatrix> batch,
                                           const SpdMatrix& mean) {
    cache_ = detail::NormalizeCache{};
    cache_.whitener = transport_matrix(mean);
    cache_.exponent = 1.0;
    cache_.rbn_transport = true;
    has_cache_ = true;
    std::vector<SpdMatrix> out;
    out.reserve(batch.size());
    for (const SpdMatrix& z : batch)
      out.push_back(SpdMatrix::trusted(
          symmetrize(congruence_tza(cache_.whitener, z.mat()))));
    return out;
  }

  std::vector<SpdMatrix> transport_eval(std::span<const SpdMatrix> batch,
                                        const SpdMatrix& mean) const {
    const Matrix e = transport_matrix(mean);
    std::vector<SpdMatrix> out;
    out.reserve(batch.size());
    for (const SpdMatrix& z : batch)
      out.push_back(
          SpdMatrix::trusted(symmetrize(congruence_tza(e, z.mat()))));
    return out;
  }

  Matrix transport_matrix(const SpdMatrix& mean) const {
    if (detail::is_identity(params_->bias_mean.mat()))
      return matrix_function(mean, ScalarFn::inv_sqrt());
    const SqrtPair f = spd_sqrt_pair(mean);
    const Matrix bias_inv =
        matrix_function(params_->bias_mean, ScalarFn::power(-1.0));
    const Matrix mid = symmetrize(congruence_tza(f.sqrt, bias_inv));
    const Matrix mid_isqrt =
        matrix_function(SymMatrix::symmetrized(mid), ScalarFn::inv_sqrt());
    return f.inv_sqrt * mid_isqrt * f.sqrt;
  }

  SpdBnConfig cfg_;
  std::shared_ptr<NormParams> params_;
  RunningGeoStats stats_;
  std::size_t dim_;
  std::optional<long> manual_step_;
  long train_observations_ = 0;

  detail::NormalizeCache cache_;
  std::optional<SpdMatrix> frozen_mean_;
  double frozen_var_ = 1.0;
  bool has_cache_ = false;
};

/// Routes observations to per-domain layers that share one parameter set.
/// Unseen domains get a fresh layer on the fly.
class SpdDomainBatchNorm {
 public:
  struct DispatchInfo {
    /// Domains first seen in this call; in eval mode these ran with the
    /// identity/unit statistics initialization.
    std::vector<int> fresh_domains;
  };

  SpdDomainBatchNorm(std::size_t dim, SpdBnConfig cfg,
                     std::shared_ptr<NormParams> params)
      : dim_(dim), cfg_(cfg), params_(std::move(params)) {
    cfg_.validate();
  }

  std::vector<SpdMatrix> forward(std::span<const SpdMatrix> batch,
                                 std::span<const int> domains, RunMode mode,
                                 DispatchInfo* info = nullptr) {
    if (batch.size() != domains.size())
      throw InvalidInputError("SpdDomainBatchNorm: domain ids do not match batch");
    const auto groups = detail::group_by_domain(domains);
    if (mode == RunMode::train) {
      for (const auto& [domain, idx] : groups) {
        if (idx.size() < 2) {
          std::ostringstream os;
          os << "SpdDomainBatchNorm: domain " << domain
             << " has a single observation in a training batch";
          throw InvalidInputError(os.str());
        }
      }
    }

    std::vector<SpdMatrix> out(batch.size(), SpdMatrix::identity(dim_));
    last_groups_.clear();
    for (const auto& [domain, idx] : groups) {
      if (info && layers_.find(domain) == layers_.end())
        info->fresh_domains.push_back(domain);
      SpdBatchNorm& bn = layer(domain);
      std::vector<SpdMatrix> sub;
      sub.reserve(idx.size());
      for (std::size_t i : idx) sub.push_back(batch[i]);
      std::vector<SpdMatrix> res = bn.forward(sub, mode);
      for (std::size_t i = 0; i < idx.size(); ++i)
        out[idx[i]] = std::move(res[i]);
      if (mode == RunMode::train) last_groups_.emplace_back(domain, idx);
    }
    return out;
  }

  struct BackwardResult {
    std::vector<Matrix> input_grads;
    double d_log_scale = 0.0;
  };

  BackwardResult backward(std::span<const Matrix> upstream) {
    if (last_groups_.empty())
      throw UsageError(
          "SpdDomainBatchNorm::backward without a train-mode forward");
    BackwardResult res;
    res.input_grads.assign(upstream.size(), Matrix());
    for (const auto& [domain, idx] : last_groups_) {
      std::vector<Matrix> sub;
      sub.reserve(idx.size());
      for (std::size_t i : idx) sub.push_back(upstream[i]);
      SpdBatchNorm::BackwardResult br = layers_.at(domain).backward(sub);
      for (std::size_t i = 0; i < idx.size(); ++i)
        res.input_grads[idx[i]] = std::move(br.input_grads[i]);
      res.d_log_scale += br.d_log_scale;
    }
    return res;
  }

  /// Frozen-statistics replay across domains; every routed layer must have
  /// a recorded train-mode forward.
  std::vector<SpdMatrix> forward_frozen(std::span<const SpdMatrix> batch,
                                        std::span<const int> domains) const {
    const auto groups = detail::group_by_domain(domains);
    std::vector<SpdMatrix> out(batch.size(), SpdMatrix::identity(dim_));
    for (const auto& [domain, idx] : groups) {
      auto it = layers_.find(domain);
      if (it == layers_.end())
        throw UsageError("SpdDomainBatchNorm: no recorded layer for domain " +
                         std::to_string(domain));
      std::vector<SpdMatrix> sub;
      sub.reserve(idx.size());
      for (std::size_t i : idx) sub.push_back(batch[i]);
      std::vector<SpdMatrix> res = it->second.forward_frozen(sub);
      for (std::size_t i = 0; i < idx.size(); ++i)
        out[idx[i]] = std::move(res[i]);
    }
    return out;
  }

  void rebind_params(std::shared_ptr<NormParams> params) {
    params_ = params;
    for (auto& [_, bn] : layers_) bn.rebind_params(params);
  }

  SpdBatchNorm& layer(int domain) {
    auto it = layers_.find(domain);
    if (it == layers_.end()) {
      it = layers_.emplace(domain, SpdBatchNorm(dim_, cfg_, params_)).first;
      if (schedule_step_) it->second.set_schedule_step(*schedule_step_);
    }
    return it->second;
  }

  bool has_layer(int domain) const { return layers_.count(domain) != 0; }
  const std::map<int, SpdBatchNorm>& layers() const { return layers_; }
  std::map<int, SpdBatchNorm>& layers() { return layers_; }

  void fit_domain(int domain, std::span<const SpdMatrix> data) {
    layer(domain).fit_statistics(data);
  }

  void set_schedule_step(long k) {
    schedule_step_ = k;
    for (auto& [_, bn] : layers_) bn.set_schedule_step(k);
  }

  std::shared_ptr<NormParams> shared_params() const { return params_; }
  NormParams& params() { return *params_; }
  std::size_t dim() const { return dim_; }
  const SpdBnConfig& config() const { return cfg_; }

 private:
  std::size_t dim_;
  SpdBnConfig cfg_;
  std::shared_ptr<NormParams> params_;
  std::map<int, SpdBatchNorm> layers_;
  std::vector<std::pair<int, std::vector<std::size_t>>> last_groups_;
  std::optional<long> schedule_step_;
};

}  // namespace spdtsm

#endif  // SPDTSM_SPDBN_HPP
