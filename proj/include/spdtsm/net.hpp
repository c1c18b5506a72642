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
// The tangent-space-mapping network: a linear spectro-spatial feature
// extractor with covariance pooling, domain-specific manifold
// normalization with log-eigenvalue vectorization, and a linear softmax
// classifier. Plus the flat (variance + log) ablation variant of the same
// skeleton.

#ifndef SPDTSM_NET_HPP
#define SPDTSM_NET_HPP

#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "spdtsm/layers.hpp"
#include "spdtsm/optim.hpp"
#include "spdtsm/spdbn.hpp"

namespace spdtsm {

/// Minibatch of trials: data is [M, channels, time].
struct EpochBatch {
  Tensor3 data;
  std::vector<int> labels;   // may be empty for unlabeled forward passes
  std::vector<int> domains;  // one id per trial
};

struct ForwardResult {
  Matrix logits;
  std::vector<int> predictions;
  double loss = std::numeric_limits<double>::quiet_NaN();
};

struct TsmNetConfig {
  int channels = 12;       // P
  int time_samples = 128;  // T
  int classes = 2;         // C
  int temporal_filters = 4;
  int temporal_kernel = 25;
  int spatio_spectral_filters = 40;
  int subspace_dim = 20;
  double reeig_eps = 1e-4;
  bool domain_specific = true;
  SpdBnConfig bn;

  void validate() const {
    if (channels < 1 || time_samples < 2 || classes < 2)
      throw ConfigError("TsmNetConfig: bad input dimensions");
    if (subspace_dim > spatio_spectral_filters || subspace_dim < 1)
      throw ConfigError(
          "TsmNetConfig: subspace dimension exceeds the filter count");
    if (temporal_filters < 1 || spatio_spectral_filters < 1)
      throw ConfigError("TsmNetConfig: filter counts must be positive");
    if (!(reeig_eps > 0.0))
      throw ConfigError("TsmNetConfig: reeig threshold must be positive");
    bn.validate();
  }

  int feature_dim() const { return subspace_dim * (subspace_dim + 1) / 2; }
};

namespace detail {

/// Norm-preserving half-vectorization: diagonal as is, off-diagonal scaled
/// by sqrt(2).
inline void upper_vectorize(const Matrix& m, double* out) {
  const double root2 = std::sqrt(2.0);
  std::size_t idx = 0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out[idx++] = m(i, i);
    for (std::size_t j = i + 1; j < m.cols(); ++j)
      out[idx++] = root2 * m(i, j);
  }
}

inline Matrix upper_unvectorize(const double* v, std::size_t dim) {
  const double inv_root2 = 1.0 / std::sqrt(2.0);
  Matrix m(dim, dim);
  std::size_t idx = 0;
  for (std::size_t i = 0; i < dim; ++i) {
    m(i, i) = v[idx++];
    for (std::size_t j = i + 1; j < dim; ++j) {
      m(i, j) = m(j, i) = inv_root2 * v[idx++];
    }
  }
  return m;
}

}  // namespace detail

/// Domain-specific manifold normalization followed by log-eigenvalue
/// vectorization: SPD inputs in, flat tangent coordinates out.
class TangentMap {
 public:
  TangentMap(std::size_t dim, SpdBnConfig cfg,
             std::shared_ptr<NormParams> params)
      : dim_(dim), bn_(dim, cfg, std::move(params)) {}

  Matrix forward(std::span<const SpdMatrix> z, std::span<const int> domains,
                 RunMode mode, SpdDomainBatchNorm::DispatchInfo* info = nullptr) {
    const std::vector<SpdMatrix> normalized = bn_.forward(z, domains, mode, info);
    return vectorize(normalized, mode == RunMode::train);
  }

  Matrix forward_frozen(std::span<const SpdMatrix> z,
                        std::span<const int> domains) {
    return vectorize(bn_.forward_frozen(z, domains), false);
  }

  struct BackwardResult {
    std::vector<Matrix> input_grads;
    double d_log_scale = 0.0;
  };

  BackwardResult backward(const Matrix& upstream_rows) {
    if (log_eigs_.size() != upstream_rows.rows())
      throw UsageError("TangentMap::backward without a matching forward");
    std::vector<Matrix> dnorm;
    dnorm.reserve(log_eigs_.size());
    const ScalarFn log_fn = ScalarFn::log();
    for (std::size_t j = 0; j < log_eigs_.size(); ++j) {
      const Matrix g = detail::upper_unvectorize(
          upstream_rows.data() + j * upstream_rows.cols(), dim_);
      dnorm.push_back(matrix_function_backward(log_eigs_[j], log_fn, g));
    }
    SpdDomainBatchNorm::BackwardResult br = bn_.backward(dnorm);
    return BackwardResult{std::move(br.input_grads), br.d_log_scale};
  }

  SpdDomainBatchNorm& bn() { return bn_; }
  const SpdDomainBatchNorm& bn() const { return bn_; }
  std::size_t feature_dim() const { return dim_ * (dim_ + 1) / 2; }

 private:
  Matrix vectorize(std::span<const SpdMatrix> normalized, bool record) {
    if (record) log_eigs_.clear();
    Matrix feats(normalized.size(), feature_dim());
    const ScalarFn log_fn = ScalarFn::log();
    for (std::size_t j = 0; j < normalized.size(); ++j) {
      EigenPair eig = sym_eig(normalized[j].mat());
      detail::check_domain(eig, log_fn);
      detail::upper_vectorize(eig.apply(log_fn), feats.data() + j * feats.cols());
      if (record) log_eigs_.push_back(std::move(eig));
    }
    return feats;
  }

  std::size_t dim_;
  SpdDomainBatchNorm bn_;
  std::vector<EigenPair> log_eigs_;
};

/// End-to-end model: TemporalConv -> SpatialConv -> CovariancePool ->
/// BiMap -> ReEig -> TangentMap -> linear softmax classifier.
class TsmNet {
 public:
  TsmNet(TsmNetConfig cfg, std::uint64_t seed)
      : cfg_(validated(cfg)),
        temporal_(cfg.temporal_filters, cfg.temporal_kernel),
        spatial_(cfg.spatio_spectral_filters, cfg.temporal_filters,
                 cfg.channels),
        bimap_(cfg.spatio_spectral_filters, cfg.subspace_dim),
        reeig_(cfg.reeig_eps),
        params_(std::make_shared<NormParams>(cfg.subspace_dim)),
        tangent_(cfg.subspace_dim, cfg.bn, params_),
        classifier_(cfg.feature_dim(), cfg.classes) {
    Rng rng(Rng::derive(seed, 0xface));
    temporal_.init(rng);
    spatial_.init(rng);
    bimap_.init(rng);
    // Classifier starts at zero: chance-level predictions by construction.
  }

  const TsmNetConfig& config() const { return cfg_; }
  static constexpr const char* variant() { return "spd"; }

  void set_epoch(long epoch) { tangent_.bn().set_schedule_step(epoch); }

  void zero_grad() {
    temporal_.zero_grad();
    spatial_.zero_grad();
    bimap_.zero_grad();
    classifier_.zero_grad();
    grad_log_scale_ = 0.0;
  }

  /// Train-mode forward plus full backward; gradients accumulate into the
  /// layer buffers. Returns the batch loss.
  double train_step(const EpochBatch& batch) {
    const std::vector<int> route = routed_domains(batch.domains);
    Tensor4 bands = temporal_.forward(batch.data);
    Tensor3 virt = spatial_.forward(bands);
    std::vector<Matrix> covs = covpool_.forward(virt);
    std::vector<Matrix> proj = bimap_.forward(covs);
    std::vector<SpdMatrix> rect = reeig_.forward(proj);
    Matrix feats = tangent_.forward(rect, route, RunMode::train);
    const Matrix logit_m = classifier_.logits(feats);
    auto [loss, dfeats] = classifier_.loss_backward(feats, logit_m, batch.labels);

    TangentMap::BackwardResult tb = tangent_.backward(dfeats);
    grad_log_scale_ += tb.d_log_scale;
    std::vector<Matrix> dproj = reeig_.backward(tb.input_grads);
    std::vector<Matrix> dcovs = bimap_.backward(dproj);
    Tensor3 dvirt = covpool_.backward(dcovs);
    Tensor4 dbands = spatial_.backward(dvirt);
    temporal_.backward(dbands);
    return loss;
  }

  ForwardResult evaluate(const EpochBatch& batch,
                         SpdDomainBatchNorm::DispatchInfo* info = nullptr) {
    const std::vector<int> route = routed_domains(batch.domains);
    const std::vector<SpdMatrix> rect = spd_features(batch.data);
    const Matrix feats = tangent_.forward(rect, route, RunMode::eval, info);
    ForwardResult out;
    out.logits = classifier_.logits(feats);
    out.predictions = SoftmaxClassifier::predictions(out.logits);
    if (!batch.labels.empty()) out.loss = classifier_.loss(out.logits, batch.labels);
    return out;
  }

  /// Loss of a batch with every normalization layer replaying its last
  /// recorded statistics; the reference quantity for gradient checks.
  double loss_frozen(const EpochBatch& batch) {
    const std::vector<int> route = routed_domains(batch.domains);
    const std::vector<SpdMatrix> rect = spd_features(batch.data);
    const Matrix feats = tangent_.forward_frozen(rect, route);
    return classifier_.loss(classifier_.logits(feats), batch.labels);
  }

  /// The feature-extractor half: SPD descriptors per trial.
  std::vector<SpdMatrix> spd_features(const Tensor3& data) {
    Tensor4 bands = temporal_.forward(data);
    Tensor3 virt = spatial_.forward(bands);
    std::vector<Matrix> covs = covpool_.forward(virt);
    std::vector<Matrix> proj = bimap_.forward(covs);
    return reeig_.forward(proj);
  }

  /// Unsupervised adaptation: fit the domain's normalization statistics on
  /// unlabeled trials by solving the full Fréchet-mean problem.
  void adapt_domain(int domain, const Tensor3& trials) {
    const std::vector<SpdMatrix> rect = spd_features(trials);
    tangent_.bn().fit_domain(cfg_.domain_specific ? domain : 0, rect);
  }

  std::vector<int> predict(const Tensor3& trials, int domain) {
    EpochBatch batch;
    batch.data = trials;
    batch.domains.assign(trials.d0, domain);
    return evaluate(batch).predictions;
  }

  std::vector<ParamBinding> param_bindings() {
    std::vector<ParamBinding> out;
    out.push_back({"temporal.w", ParamKind::euclidean, temporal_.weights().data(),
                   temporal_.grads().data(), temporal_.weights().size(), 0, 0,
                   true});
    out.push_back({"spatial.w", ParamKind::euclidean, spatial_.weights().data(),
                   spatial_.grads().data(), spatial_.weights().size(), 0, 0,
                   true});
    out.push_back({"bimap.w", ParamKind::stiefel, bimap_.weights().data(),
                   bimap_.grads().data(), bimap_.weights().size(),
                   bimap_.weights().rows(), bimap_.weights().cols(), false});
    out.push_back({"classifier.w", ParamKind::euclidean,
                   classifier_.weights().data(), classifier_.grads().data(),
                   classifier_.weights().size(), 0, 0, true});
    if (cfg_.bn.learn_variance)
      out.push_back({"bn.log_scale", ParamKind::euclidean, &params_->log_scale,
                     &grad_log_scale_, 1, 0, 0, true});
    return out;
  }

  /// Deep copy with its own shared-parameter block.
  TsmNet clone() const {
    TsmNet copy = *this;
    copy.params_ = std::make_shared<NormParams>(*params_);
    copy.tangent_.bn().rebind_params(copy.params_);
    return copy;
  }

  long reeig_activation_count() const { return reeig_.activation_count(); }
  void reset_reeig_activation_count() { reeig_.reset_activation_count(); }

  TemporalConv& temporal() { return temporal_; }
  SpatialConv& spatial() { return spatial_; }
  BiMap& bimap() { return bimap_; }
  SoftmaxClassifier& classifier() { return classifier_; }
  TangentMap& tangent() { return tangent_; }
  NormParams& norm_params() { return *params_; }
  double& grad_log_scale() { return grad_log_scale_; }

 private:
  static TsmNetConfig validated(const TsmNetConfig& cfg) {
    cfg.validate();
    return cfg;
  }

  std::vector<int> routed_domains(const std::vector<int>& domains) const {
    if (cfg_.domain_specific) return domains;
    return std::vector<int>(domains.size(), 0);
  }

  TsmNetConfig cfg_;
  TemporalConv temporal_;
  SpatialConv spatial_;
  CovariancePool covpool_;
  BiMap bimap_;
  ReEig reeig_;
  std::shared_ptr<NormParams> params_;
  TangentMap tangent_;
  SoftmaxClassifier classifier_;
  double grad_log_scale_ = 0.0;
};

// ---------------------------------------------------------------------------
// Euclidean ablation path: variance pooling + elementwise log + flat
// momentum batch normalization on the same convolutional front end.
// ---------------------------------------------------------------------------

/// Per-channel log-variance over time: [M, C, T] -> [M, C].
class LogVarPool {
 public:
  static constexpr double kFloor = 1e-10;

  Matrix forward(const Tensor3& x) {
    const std::size_t m = x.d0, c = x.d1, t = x.d2;
    if (t < 2) throw InvalidInputError("LogVarPool: need at least two samples");
    centered_ = x;
    vars_ = Matrix(m, c);
    Matrix out(m, c);
    const double norm = 1.0 / static_cast<double>(t - 1);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t r = 0; r < c; ++r) {
        double* row = centered_.row(i, r);
        double mean = 0.0;
        for (std::size_t s = 0; s < t; ++s) mean += row[s];
        mean /= static_cast<double>(t);
        double acc = 0.0;
        for (std::size_t s = 0; s < t; ++s) {
          row[s] -= mean;
          acc += row[s] * row[s];
        }
        vars_(i, r) = acc * norm;
        out(i, r) = std::log(std::max(vars_(i, r), kFloor));
      }
    }
    return out;
  }

  Tensor3 backward(const Matrix& up) {
    const std::size_t m = centered_.d0, c = centered_.d1, t = centered_.d2;
    Tensor3 dx(m, c, t);
    const double norm = 2.0 / static_cast<double>(t - 1);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t r = 0; r < c; ++r) {
        // d log(max(v, floor))/dv vanishes below the floor.
        const double v = vars_(i, r);
        const double dv = v > kFloor ? up(i, r) / v : 0.0;
        const double* xr = centered_.row(i, r);
        double* drow = dx.row(i, r);
        double mean = 0.0;
        for (std::size_t s = 0; s < t; ++s) {
          drow[s] = dv * norm * xr[s];
          mean += drow[s];
        }
        mean /= static_cast<double>(t);
        for (std::size_t s = 0; s < t; ++s) drow[s] -= mean;
      }
    }
    return dx;
  }

 private:
  Tensor3 centered_;
  Matrix vars_;
};

struct EuclidBnParams {
  double log_scale = 0.0;
  double scale() const { return std::exp(log_scale); }
};

struct EuclidBnConfig {
  double eps = 1e-5;
  double gamma_test = 0.1;
  MomentumSchedule schedule = MomentumSchedule::clamped_exponential(0.2, 40);
  bool learn_scale = true;
};

/// Flat momentum batch normalization with separate train/test running
/// statistics; the Euclidean mirror of the manifold layer.
class EuclideanBatchNorm {
 public:
  EuclideanBatchNorm(std::size_t dim, EuclidBnConfig cfg,
                     std::shared_ptr<EuclidBnParams> params)
      : dim_(dim),
        cfg_(cfg),
        params_(std::move(params)),
        train_mean_(dim, 0.0),
        train_var_(dim, 1.0),
        test_mean_(dim, 0.0),
        test_var_(dim, 1.0) {}

  void set_schedule_step(long k) { manual_step_ = k; }

  Matrix forward(const Matrix& x, RunMode mode) {
    if (x.cols() != dim_)
      throw InvalidInputError("EuclideanBatchNorm: feature width mismatch");
    if (mode == RunMode::eval) return normalize(x, test_mean_, test_var_);

    if (x.rows() == 0)
      throw InvalidInputError("EuclideanBatchNorm: empty training batch");
    const long k = manual_step_ ? *manual_step_ : step_ + 1;
    const double gamma_train = cfg_.schedule.value(k);
    std::vector<double> batch_mean(dim_, 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t f = 0; f < dim_; ++f) batch_mean[f] += x(i, f);
    for (double& v : batch_mean) v /= static_cast<double>(x.rows());

    update(train_mean_, train_var_, x, batch_mean, gamma_train);
    update(test_mean_, test_var_, x, batch_mean, cfg_.gamma_test);
    ++step_;
    train_observations_ += static_cast<long>(x.rows());

    frozen_mean_ = train_mean_;
    frozen_var_ = train_var_;
    cache_in_ = x;
    has_cache_ = true;
    return normalize(x, train_mean_, train_var_);
  }

  Matrix forward_frozen(const Matrix& x) const {
    if (!has_cache_)
      throw UsageError(
          "EuclideanBatchNorm::forward_frozen without a train-mode forward");
    return normalize(x, frozen_mean_, frozen_var_);
  }

  struct BackwardResult {
    Matrix input_grads;
    double d_log_scale = 0.0;
  };

  BackwardResult backward(const Matrix& up) const {
    if (!has_cache_)
      throw UsageError(
          "EuclideanBatchNorm::backward without a train-mode forward");
    const double s = params_->scale();
    BackwardResult res;
    res.input_grads = Matrix(up.rows(), dim_);
    for (std::size_t i = 0; i < up.rows(); ++i) {
      for (std::size_t f = 0; f < dim_; ++f) {
        const double denom = std::sqrt(frozen_var_[f]) + cfg_.eps;
        res.input_grads(i, f) = up(i, f) * s / denom;
        // d/d(log s) of s*z is s*z = the normalized output itself.
        res.d_log_scale += up(i, f) * s *
                           (cache_in_(i, f) - frozen_mean_[f]) / denom;
      }
    }
    if (!cfg_.learn_scale) res.d_log_scale = 0.0;
    return res;
  }

  /// Whole-domain statistics for test-time adaptation.
  void fit_statistics(const Matrix& domain_data) {
    if (domain_data.rows() < 2)
      throw InvalidInputError(
          "EuclideanBatchNorm: need at least 2 observations per domain");
    std::vector<double> mean(dim_, 0.0), var(dim_, 0.0);
    for (std::size_t i = 0; i < domain_data.rows(); ++i)
      for (std::size_t f = 0; f < dim_; ++f) mean[f] += domain_data(i, f);
    for (double& v : mean) v /= static_cast<double>(domain_data.rows());
    for (std::size_t i = 0; i < domain_data.rows(); ++i)
      for (std::size_t f = 0; f < dim_; ++f) {
        const double d = domain_data(i, f) - mean[f];
        var[f] += d * d;
      }
    for (double& v : var) v /= static_cast<double>(domain_data.rows());
    test_mean_ = std::move(mean);
    test_var_ = std::move(var);
  }

  void rebind_params(std::shared_ptr<EuclidBnParams> p) {
    params_ = std::move(p);
  }

  long train_observations() const { return train_observations_; }
  const std::vector<double>& test_mean() const { return test_mean_; }
  const std::vector<double>& test_var() const { return test_var_; }
  long step_count() const { return step_; }

 private:
  void update(std::vector<double>& mean, std::vector<double>& var,
              const Matrix& x, const std::vector<double>& batch_mean,
              double gamma) const {
    for (std::size_t f = 0; f < dim_; ++f)
      mean[f] = (1.0 - gamma) * mean[f] + gamma * batch_mean[f];
    for (std::size_t f = 0; f < dim_; ++f) {
      double acc = 0.0;
      for (std::size_t i = 0; i < x.rows(); ++i) {
        const double d = x(i, f) - mean[f];
        acc += d * d;
      }
      var[f] = (1.0 - gamma) * var[f] +
               gamma * acc / static_cast<double>(x.rows());
    }
  }

  Matrix normalize(const Matrix& x, const std::vector<double>& mean,
                   const std::vector<double>& var) const {
    const double s = params_->scale();
    Matrix out(x.rows(), dim_);
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t f = 0; f < dim_; ++f)
        out(i, f) = s * (x(i, f) - mean[f]) / (std::sqrt(var[f]) + cfg_.eps);
    return out;
  }

  std::size_t dim_;
  EuclidBnConfig cfg_;
  std::shared_ptr<EuclidBnParams> params_;
  std::vector<double> train_mean_, train_var_, test_mean_, test_var_;
  long step_ = 0;
  long train_observations_ = 0;
  std::optional<long> manual_step_;

  std::vector<double> frozen_mean_, frozen_var_;
  Matrix cache_in_;
  bool has_cache_ = false;
};

/// Domain dispatch for the flat layer; one layer per domain, shared scale.
class EuclidDomainBatchNorm {
 public:
  EuclidDomainBatchNorm(std::size_t dim, EuclidBnConfig cfg,
                        std::shared_ptr<EuclidBnParams> params)
      : dim_(dim), cfg_(cfg), params_(std::move(params)) {}

  Matrix forward(const Matrix& x, std::span<const int> domains, RunMode mode) {
    if (x.rows() != domains.size())
      throw InvalidInputError("EuclidDomainBatchNorm: domain ids mismatch");
    const auto groups = detail::group_by_domain(domains);
    if (mode == RunMode::train) {
      for (const auto& [domain, idx] : groups)
        if (idx.size() < 2)
          throw InvalidInputError(
              "EuclidDomainBatchNorm: domain " + std::to_string(domain) +
              " has a single observation in a training batch");
    }
    Matrix out(x.rows(), dim_);
    if (mode == RunMode::train) last_groups_.clear();
    for (const auto& [domain, idx] : groups) {
      Matrix sub(idx.size(), dim_);
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t f = 0; f < dim_; ++f) sub(i, f) = x(idx[i], f);
      const Matrix res = layer(domain).forward(sub, mode);
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t f = 0; f < dim_; ++f) out(idx[i], f) = res(i, f);
      if (mode == RunMode::train) last_groups_.emplace_back(domain, idx);
    }
    return out;
  }

  Matrix forward_frozen(const Matrix& x, std::span<const int> domains) const {
    const auto groups = detail::group_by_domain(domains);
    Matrix out(x.rows(), dim_);
    for (const auto& [domain, idx] : groups) {
      auto it = layers_.find(domain);
      if (it == layers_.end())
        throw UsageError("EuclidDomainBatchNorm: no layer for domain " +
                         std::to_string(domain));
      Matrix sub(idx.size(), dim_);
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t f = 0; f < dim_; ++f) sub(i, f) = x(idx[i], f);
      const Matrix res = it->second.forward_frozen(sub);
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t f = 0; f < dim_; ++f) out(idx[i], f) = res(i, f);
    }
    return out;
  }

  struct BackwardResult {
    Matrix input_grads;
    double d_log_scale = 0.0;
  };

  BackwardResult backward(const Matrix& up) {
    if (last_groups_.empty())
      throw UsageError(
          "EuclidDomainBatchNorm::backward without a train-mode forward");
    BackwardResult res;
    res.input_grads = Matrix(up.rows(), dim_);
    for (const auto& [domain, idx] : last_groups_) {
      Matrix sub(idx.size(), dim_);
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t f = 0; f < dim_; ++f) sub(i, f) = up(idx[i], f);
      const EuclideanBatchNorm::BackwardResult br =
          layers_.at(domain).backward(sub);
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t f = 0; f < dim_; ++f)
          res.input_grads(idx[i], f) = br.input_grads(i, f);
      res.d_log_scale += br.d_log_scale;
    }
    return res;
  }

  EuclideanBatchNorm& layer(int domain) {
    auto it = layers_.find(domain);
    if (it == layers_.end()) {
      it = layers_.emplace(domain, EuclideanBatchNorm(dim_, cfg_, params_))
               .first;
      if (schedule_step_) it->second.set_schedule_step(*schedule_step_);
    }
    return it->second;
  }

  bool has_layer(int domain) const { return layers_.count(domain) != 0; }
  void fit_domain(int domain, const Matrix& data) {
    layer(domain).fit_statistics(data);
  }
  void set_schedule_step(long k) {
    schedule_step_ = k;
    for (auto& [_, bn] : layers_) bn.set_schedule_step(k);
  }
  void rebind_params(std::shared_ptr<EuclidBnParams> p) {
    params_ = p;
    for (auto& [_, bn] : layers_) bn.rebind_params(p);
  }
  std::map<int, EuclideanBatchNorm>& layers() { return layers_; }
  const std::map<int, EuclideanBatchNorm>& layers() const { return layers_; }

 private:
  std::size_t dim_;
  EuclidBnConfig cfg_;
  std::shared_ptr<EuclidBnParams> params_;
  std::map<int, EuclideanBatchNorm> layers_;
  std::vector<std::pair<int, std::vector<std::size_t>>> last_groups_;
  std::optional<long> schedule_step_;
};

/// Ablation variant: the same convolutional front end with variance
/// pooling, elementwise log, flat (domain-specific) momentum BN and the
/// linear classifier. No manifold structure anywhere.
class LogVarNet {
 public:
  LogVarNet(TsmNetConfig cfg, std::uint64_t seed)
      : cfg_(validated(cfg)),
        temporal_(cfg.temporal_filters, cfg.temporal_kernel),
        spatial_(cfg.spatio_spectral_filters, cfg.temporal_filters,
                 cfg.channels),
        params_(std::make_shared<EuclidBnParams>()),
        bn_(cfg.spatio_spectral_filters, euclid_cfg(cfg.bn), params_),
        classifier_(cfg.spatio_spectral_filters, cfg.classes) {
    Rng rng(Rng::derive(seed, 0xface));
    temporal_.init(rng);
    spatial_.init(rng);
  }

  const TsmNetConfig& config() const { return cfg_; }
  static constexpr const char* variant() { return "euclid"; }

  void set_epoch(long epoch) { bn_.set_schedule_step(epoch); }

  void zero_grad() {
    temporal_.zero_grad();
    spatial_.zero_grad();
    classifier_.zero_grad();
    grad_log_scale_ = 0.0;
  }

  double train_step(const EpochBatch& batch) {
    const std::vector<int> route = routed_domains(batch.domains);
    Tensor4 bands = temporal_.forward(batch.data);
    Tensor3 virt = spatial_.forward(bands);
    Matrix logvars = varpool_.forward(virt);
    Matrix feats = bn_.forward(logvars, route, RunMode::train);
    const Matrix logit_m = classifier_.logits(feats);
    auto [loss, dfeats] = classifier_.loss_backward(feats, logit_m, batch.labels);

    EuclidDomainBatchNorm::BackwardResult bb = bn_.backward(dfeats);
    grad_log_scale_ += bb.d_log_scale;
    Tensor3 dvirt = varpool_.backward(bb.input_grads);
    Tensor4 dbands = spatial_.backward(dvirt);
    temporal_.backward(dbands);
    return loss;
  }

  ForwardResult evaluate(const EpochBatch& batch) {
    const std::vector<int> route = routed_domains(batch.domains);
    const Matrix feats = bn_.forward(features(batch.data), route, RunMode::eval);
    ForwardResult out;
    out.logits = classifier_.logits(feats);
    out.predictions = SoftmaxClassifier::predictions(out.logits);
    if (!batch.labels.empty()) out.loss = classifier_.loss(out.logits, batch.labels);
    return out;
  }

  double loss_frozen(const EpochBatch& batch) {
    const std::vector<int> route = routed_domains(batch.domains);
    const Matrix feats = bn_.forward_frozen(features(batch.data), route);
    return classifier_.loss(classifier_.logits(feats), batch.labels);
  }

  /// Log-variance features per trial.
  Matrix features(const Tensor3& data) {
    Tensor4 bands = temporal_.forward(data);
    Tensor3 virt = spatial_.forward(bands);
    return varpool_.forward(virt);
  }

  void adapt_domain(int domain, const Tensor3& trials) {
    bn_.fit_domain(cfg_.domain_specific ? domain : 0, features(trials));
  }

  std::vector<int> predict(const Tensor3& trials, int domain) {
    EpochBatch batch;
    batch.data = trials;
    batch.domains.assign(trials.d0, domain);
    return evaluate(batch).predictions;
  }

  std::vector<ParamBinding> param_bindings() {
    std::vector<ParamBinding> out;
    out.push_back({"temporal.w", ParamKind::euclidean, temporal_.weights().data(),
                   temporal_.grads().data(), temporal_.weights().size(), 0, 0,
                   true});
    out.push_back({"spatial.w", ParamKind::euclidean, spatial_.weights().data(),
                   spatial_.grads().data(), spatial_.weights().size(), 0, 0,
                   true});
    out.push_back({"classifier.w", ParamKind::euclidean,
                   classifier_.weights().data(), classifier_.grads().data(),
                   classifier_.weights().size(), 0, 0, true});
    if (cfg_.bn.learn_variance)
      out.push_back({"bn.log_scale", ParamKind::euclidean, &params_->log_scale,
                     &grad_log_scale_, 1, 0, 0, true});
    return out;
  }

  LogVarNet clone() const {
    LogVarNet copy = *this;
    copy.params_ = std::make_shared<EuclidBnParams>(*params_);
    copy.bn_.rebind_params(copy.params_);
    return copy;
  }

  long reeig_activation_count() const { return 0; }
  void reset_reeig_activation_count() {}

  TemporalConv& temporal() { return temporal_; }
  SpatialConv& spatial() { return spatial_; }
  SoftmaxClassifier& classifier() { return classifier_; }
  EuclidDomainBatchNorm& bn() { return bn_; }
  EuclidBnParams& norm_params() { return *params_; }

 private:
  static TsmNetConfig validated(const TsmNetConfig& cfg) {
    cfg.validate();
    return cfg;
  }

  static EuclidBnConfig euclid_cfg(const SpdBnConfig& bn) {
    EuclidBnConfig e;
    e.eps = bn.eps;
    e.gamma_test = bn.gamma_test;
    e.schedule = bn.schedule;
    e.learn_scale = bn.learn_variance;
    return e;
  }

  std::vector<int> routed_domains(const std::vector<int>& domains) const {
    if (cfg_.domain_specific) return domains;
    return std::vector<int>(domains.size(), 0);
  }

  TsmNetConfig cfg_;
  TemporalConv temporal_;
  SpatialConv spatial_;
  LogVarPool varpool_;
  std::shared_ptr<EuclidBnParams> params_;
  EuclidDomainBatchNorm bn_;
  SoftmaxClassifier classifier_;
  double grad_log_scale_ = 0.0;
};

}  // namespace spdtsm

#endif  // SPDTSM_NET_HPP
