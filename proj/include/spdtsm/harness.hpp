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
// Training loop with validation-loss model selection, the
// leave-domains-out unsupervised-adaptation evaluation protocol, ablation
// arms, and the running-statistics convergence experiments.

#ifndef SPDTSM_HARNESS_HPP
#define SPDTSM_HARNESS_HPP

#include <chrono>
#include <cmath>
#include <functional>
#include <future>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "spdtsm/net.hpp"
#include "spdtsm/synthdata.hpp"

namespace spdtsm {

/// Unweighted mean of per-class recall over the classes present in labels.
inline double balanced_accuracy(std::span<const int> predictions,
                                std::span<const int> labels) {
  if (labels.empty() || predictions.size() != labels.size())
    throw InvalidInputError("balanced_accuracy: bad input lengths");
  std::map<int, std::pair<long, long>> per_class;  // class -> {hits, total}
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& [hits, total] = per_class[labels[i]];
    ++total;
    if (predictions[i] == labels[i]) ++hits;
  }
  double acc = 0.0;
  for (const auto& [cls, ht] : per_class)
    acc += static_cast<double>(ht.first) / static_cast<double>(ht.second);
  return acc / static_cast<double>(per_class.size());
}

/// Labels that refuse to be read until predictions exist; documents (and
/// enforces) that unsupervised adaptation never sees them.
class GuardedLabels {
 public:
  explicit GuardedLabels(const std::vector<int>& labels) : labels_(&labels) {}

  void unlock() { unlocked_ = true; }
  bool unlocked() const { return unlocked_; }

  std::span<const int> get() const {
    if (!unlocked_)
      throw UsageError("GuardedLabels: labels read before predictions");
    return *labels_;
  }

 private:
  const std::vector<int>* labels_;
  bool unlocked_ = false;
};

struct SplitPlan {
  std::vector<int> source_domains;
  std::vector<int> target_domains;
  /// Per source domain: trial indices for training and validation,
  /// stratified by label.
  std::map<int, std::vector<std::size_t>> train_indices;
  std::map<int, std::vector<std::size_t>> val_indices;
  std::uint64_t seed = 0;

  static SplitPlan make(const Dataset& ds, double val_fraction,
                        std::uint64_t seed) {
    if (!(val_fraction >= 0.0 && val_fraction < 1.0))
      throw ConfigError("split: validation fraction outside [0, 1)");
    SplitPlan plan;
    plan.seed = seed;
    plan.source_domains = ds.source_ids();
    plan.target_domains = ds.target_ids();
    if (plan.source_domains.empty())
      throw InvalidInputError("split: dataset has no source domains");
    for (int id : plan.source_domains) {
      const DomainData& d = ds.domain(id);
      Rng rng(Rng::derive(seed, 0x5917 + static_cast<std::uint64_t>(id)));
      std::map<int, std::vector<std::size_t>> by_class;
      for (std::size_t j = 0; j < d.labels.size(); ++j)
        by_class[d.labels[j]].push_back(j);
      std::vector<std::size_t>&train = plan.train_indices[id],
                               &val = plan.val_indices[id];
      for (auto& [cls, idx] : by_class) {
        rng.shuffle(idx);
        const std::size_t n_val = static_cast<std::size_t>(
            std::llround(val_fraction * static_cast<double>(idx.size())));
        for (std::size_t j = 0; j < idx.size(); ++j)
          (j < n_val ? val : train).push_back(idx[j]);
      }
      std::sort(train.begin(), train.end());
      std::sort(val.begin(), val.end());
    }
    return plan;
  }
};

struct TrainProtocol {
  int epochs = 50;
  int per_domain = 10;
  int domains_per_batch = 5;
  double val_fraction = 0.2;
  AdamConfig adam;
  std::uint64_t seed = 0;

  int batch_size() const { return per_domain * domains_per_batch; }

  void validate() const {
    if (epochs < 0) throw ConfigError("protocol: negative epoch count");
    if (per_domain < 2)
      throw ConfigError("protocol: need at least 2 trials per domain chunk");
    if (domains_per_batch < 1)
      throw ConfigError("protocol: need at least one domain per batch");
  }
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double gamma_train = 0.0;
  long reeig_activations = 0;
};

template <class Model>
struct TrainResult {
  Model model;               // the validation-loss-minimizing snapshot
  RiemannianAdam::State optimizer_state;  // at the selected epoch
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_val_loss = std::numeric_limits<double>::infinity();
  double fit_seconds = 0.0;
  bool aborted_non_finite = false;
};

namespace detail {

template <class Model>
double validation_loss(Model& model, const Dataset& ds, const SplitPlan& plan) {
  double total = 0.0;
  long count = 0;
  for (int id : plan.source_domains) {
    const auto it = plan.val_indices.find(id);
    if (it == plan.val_indices.end() || it->second.empty()) continue;
    std::vector<std::pair<int, std::size_t>> members;
    for (std::size_t idx : it->second) members.emplace_back(id, idx);
    const EpochBatch batch = make_batch(ds, members);
    const ForwardResult out = model.evaluate(batch);
    total += out.loss * static_cast<double>(members.size());
    count += static_cast<long>(members.size());
  }
  if (count == 0) return std::numeric_limits<double>::quiet_NaN();
  return total / static_cast<double>(count);
}

}  // namespace detail

/// Minibatch training with per-epoch momentum scheduling and model
/// selection on the validation loss. Deterministic for a fixed seed.
template <class Model>
TrainResult<Model> fit_model(Model model, const Dataset& ds,
                             const SplitPlan& plan,
                             const TrainProtocol& proto) {
  proto.validate();
  const auto t0 = std::chrono::steady_clock::now();

  RiemannianAdam adam(proto.adam);
  TrainResult<Model> result{model.clone(), adam.state()};
  const MomentumSchedule& schedule = model.config().bn.schedule;

  for (int epoch = 0; epoch < proto.epochs; ++epoch) {
    model.set_epoch(epoch);
    Rng shuffle_rng(Rng::derive(proto.seed, 0xe90c + epoch));
    const auto batches = domain_batched_epoch(
        plan.train_indices, proto.per_domain, proto.domains_per_batch,
        shuffle_rng);
    if (batches.empty())
      throw InvalidInputError(
          "fit_model: training split cannot fill a single batch");

    EpochLog log_entry;
    log_entry.epoch = epoch;
    log_entry.gamma_train =
        schedule.kind() == MomentumSchedule::Kind::power_decay
            ? schedule.value(std::max<long>(epoch, 1))
            : schedule.value(epoch);
    const long reeig_before = model.reeig_activation_count();

    double loss_sum = 0.0;
    bool aborted = false;
    for (const auto& members : batches) {
      const EpochBatch batch = make_batch(ds, members);
      model.zero_grad();
      double loss;
      try {
        loss = model.train_step(batch);
      } catch (const NumericError&) {
        loss = std::numeric_limits<double>::quiet_NaN();
      }
      if (!std::isfinite(loss)) {
        aborted = true;
        break;
      }
      auto bindings = model.param_bindings();
      try {
        adam.step(bindings);
      } catch (const NumericError&) {
        aborted = true;
        break;
      }
      loss_sum += loss;
    }
    if (aborted) {
      result.aborted_non_finite = true;
      break;
    }

    log_entry.train_loss = loss_sum / static_cast<double>(batches.size());
    log_entry.val_loss = detail::validation_loss(model, ds, plan);
    log_entry.reeig_activations =
        model.reeig_activation_count() - reeig_before;
    result.log.push_back(log_entry);

    if (std::isfinite(log_entry.val_loss) &&
        log_entry.val_loss < result.best_val_loss) {
      result.best_val_loss = log_entry.val_loss;
      result.best_epoch = epoch;
      result.model = model.clone();
      result.optimizer_state = adam.state();
    }
  }

  // Without validation feedback (no epochs or no val split), ship the
  // final state.
  if (result.best_epoch < 0) {
    result.model = model.clone();
    result.optimizer_state = adam.state();
  }

  result.fit_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return result;
}

struct DomainScore {
  int domain = 0;
  double balanced_accuracy = 0.0;
  Matrix confusion;  // rows: true class, cols: predicted
  long trials = 0;
  bool adapted = false;
  bool fresh_statistics = false;  // ran on identity/unit statistics
  bool degenerate_labels = false;  // fewer classes present than configured
  bool skipped = false;
};

struct EvalReport {
  std::vector<DomainScore> per_domain;
  double mean_balanced_accuracy = 0.0;
  double std_balanced_accuracy = 0.0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string version = kVersionString;
};

/// Leave-domains-out scoring: per target domain, optionally fit the
/// normalization statistics on the unlabeled trials, predict, and only
/// then read the labels. Runs on a clone, so evaluation is a pure function
/// of (checkpoint, target data).
template <class Model>
EvalReport adapt_and_evaluate(const Model& checkpoint, const Dataset& ds,
                              std::span<const int> target_ids, bool adapt) {
  Model model = checkpoint.clone();
  EvalReport report;
  const int classes = model.config().classes;
  std::vector<double> scores;
  for (int id : target_ids) {
    const DomainData& domain = ds.domain(id);
    DomainScore score;
    score.domain = id;
    score.trials = static_cast<long>(domain.trials.d0);
    if (domain.trials.d0 < 2) {
      score.skipped = true;
      report.per_domain.push_back(score);
      continue;
    }

    GuardedLabels guard(domain.labels);
    if (adapt) {
      model.adapt_domain(id, domain.trials);
      score.adapted = true;
    } else {
      score.fresh_statistics = true;
    }
    const std::vector<int> preds = model.predict(domain.trials, id);
    guard.unlock();
    const std::span<const int> labels = guard.get();

    score.balanced_accuracy = balanced_accuracy(preds, labels);
    score.confusion = Matrix(classes, classes);
    std::vector<bool> present(classes, false);
    for (std::size_t j = 0; j < preds.size(); ++j) {
      score.confusion(labels[j], preds[j]) += 1.0;
      present[labels[j]] = true;
    }
    score.degenerate_labels =
        std::count(present.begin(), present.end(), true) < classes;
    scores.push_back(score.balanced_accuracy);
    report.per_domain.push_back(score);
  }

  if (!scores.empty()) {
    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= static_cast<double>(scores.size());
    double var = 0.0;
    for (double s : scores) var += (s - mean) * (s - mean);
    report.mean_balanced_accuracy = mean;
    report.std_balanced_accuracy =
        scores.size() > 1
            ? std::sqrt(var / static_cast<double>(scores.size() - 1))
            : 0.0;
  }
  return report;
}

/// Balanced accuracy over the validation split (source domains).
template <class Model>
double validation_score(Model& model, const Dataset& ds,
                        const SplitPlan& plan) {
  std::vector<int> preds, labels;
  for (int id : plan.source_domains) {
    const auto it = plan.val_indices.find(id);
    if (it == plan.val_indices.end() || it->second.empty()) continue;
    std::vector<std::pair<int, std::size_t>> members;
    for (std::size_t idx : it->second) members.emplace_back(id, idx);
    const EpochBatch batch = make_batch(ds, members);
    const ForwardResult out = model.evaluate(batch);
    preds.insert(preds.end(), out.predictions.begin(), out.predictions.end());
    labels.insert(labels.end(), batch.labels.begin(), batch.labels.end());
  }
  return balanced_accuracy(preds, labels);
}

// ---------------------------------------------------------------------------
// Ablation arms
// ---------------------------------------------------------------------------

enum class AblationArm {
  proposed,          // SPD network, domain-specific momentum BN, adaptation
  spdbn_ds,          // SPD network, constant-momentum renormalization, DS
  spdmbn_no_ds,      // SPD network, momentum BN shared across domains
  euclid_dsmbn,      // flat network, domain-specific momentum BN
  euclid_mbn_no_ds,  // flat network, shared momentum BN
};

inline const char* arm_name(AblationArm arm) {
  switch (arm) {
    case AblationArm::proposed: return "spddsmbn";
    case AblationArm::spdbn_ds: return "spdbn_ds";
    case AblationArm::spdmbn_no_ds: return "spdmbn_no_ds";
    case AblationArm::euclid_dsmbn: return "euclid_dsmbn";
    case AblationArm::euclid_mbn_no_ds: return "euclid_mbn_no_ds";
  }
  return "?";
}

inline AblationArm arm_from_name(const std::string& name) {
  for (AblationArm arm :
       {AblationArm::proposed, AblationArm::spdbn_ds, AblationArm::spdmbn_no_ds,
        AblationArm::euclid_dsmbn, AblationArm::euclid_mbn_no_ds})
    if (name == arm_name(arm)) return arm;
  throw ConfigError("unknown ablation arm '" + name + "'");
}

struct ArmResult {
  AblationArm arm;
  std::vector<double> scores;       // per seed: mean target balanced accuracy
  std::vector<double> fit_seconds;  // per seed
  double mean_score = 0.0;
  double std_score = 0.0;
  double delta_vs_proposed = 0.0;
  double p_value_vs_proposed = 1.0;  // paired sign-flip permutation test
  double mean_fit_seconds = 0.0;
};

struct AblationTable {
  std::vector<ArmResult> arms;
  int seeds = 0;
  std::uint64_t base_seed = 0;
};

namespace detail {

inline TsmNetConfig arm_model_config(TsmNetConfig base, AblationArm arm) {
  switch (arm) {
    case AblationArm::proposed:
    case AblationArm::euclid_dsmbn:
      base.domain_specific = true;
      base.bn.mode = BnMode::spdmbn;
      break;
    case AblationArm::spdbn_ds:
      base.domain_specific = true;
      base.bn.mode = BnMode::spdbn;
      base.bn.schedule = MomentumSchedule::constant(base.bn.gamma_test);
      break;
    case AblationArm::spdmbn_no_ds:
    case AblationArm::euclid_mbn_no_ds:
      base.domain_specific = false;
      base.bn.mode = BnMode::spdmbn;
      break;
  }
  return base;
}

inline bool arm_is_euclidean(AblationArm arm) {
  return arm == AblationArm::euclid_dsmbn ||
         arm == AblationArm::euclid_mbn_no_ds;
}

inline bool arm_adapts(AblationArm arm) {
  return arm == AblationArm::proposed || arm == AblationArm::spdbn_ds ||
         arm == AblationArm::euclid_dsmbn;
}

// One training + adapted evaluation run; returns {target BA, fit seconds}.
inline std::pair<double, double> run_arm_once(AblationArm arm,
                                              const Dataset& ds,
                                              const TsmNetConfig& base_model,
                                              TrainProtocol proto,
                                              std::uint64_t seed) {
  proto.seed = seed;
  const SplitPlan plan = SplitPlan::make(ds, proto.val_fraction, seed);
  const TsmNetConfig cfg = arm_model_config(base_model, arm);
  const std::vector<int> targets = ds.target_ids();
  if (arm_is_euclidean(arm)) {
    LogVarNet model(cfg, seed);
    auto result = fit_model(std::move(model), ds, plan, proto);
    const EvalReport rep =
        adapt_and_evaluate(result.model, ds, targets, arm_adapts(arm));
    return {rep.mean_balanced_accuracy, result.fit_seconds};
  }
  TsmNet model(cfg, seed);
  auto result = fit_model(std::move(model), ds, plan, proto);
  const EvalReport rep =
      adapt_and_evaluate(result.model, ds, targets, arm_adapts(arm));
  return {rep.mean_balanced_accuracy, result.fit_seconds};
}

// Paired sign-flip permutation test on per-seed score differences.
inline double paired_permutation_p(const std::vector<double>& a,
                                   const std::vector<double>& b,
                                   std::uint64_t seed, int permutations) {
  const std::size_t n = a.size();
  std::vector<double> diff(n);
  double observed = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = a[i] - b[i];
    observed += diff[i];
  }
  observed = std::abs(observed / static_cast<double>(n));
  Rng rng(Rng::derive(seed, 0x9e97));
  long hits = 0;
  for (int p = 0; p < permutations; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      acc += (rng.uniform() < 0.5 ? diff[i] : -diff[i]);
    if (std::abs(acc / static_cast<double>(n)) >= observed - 1e-15) ++hits;
  }
  return static_cast<double>(hits + 1) / static_cast<double>(permutations + 1);
}

/// Runs jobs with at most `threads` concurrently (1 = sequential).
inline void run_jobs(std::vector<std::function<void()>>& jobs, int threads) {
  if (threads <= 1) {
    for (auto& job : jobs) job();
    return;
  }
  std::size_t next = 0;
  while (next < jobs.size()) {
    std::vector<std::future<void>> wave;
    for (int t = 0; t < threads && next < jobs.size(); ++t, ++next)
      wave.push_back(std::async(std::launch::async, jobs[next]));
    for (auto& f : wave) f.get();
  }
}

}  // namespace detail

/// Trains every arm on identical datasets/splits/seeds and reports mean
/// balanced-accuracy deltas against the proposed arm plus fit times.
inline AblationTable run_ablation(const GenConfig& gen,
                                  const TsmNetConfig& base_model,
                                  const TrainProtocol& proto,
                                  const std::vector<AblationArm>& arms,
                                  int n_seeds, std::uint64_t base_seed,
                                  int threads = 1) {
  if (n_seeds < 1) throw ConfigError("ablation: need at least one seed");
  AblationTable table;
  table.seeds = n_seeds;
  table.base_seed = base_seed;

  // One dataset per seed, shared across arms.
  std::vector<Dataset> datasets;
  datasets.reserve(n_seeds);
  for (int s = 0; s < n_seeds; ++s) {
    GenConfig g = gen;
    g.seed = Rng::derive(base_seed, 0xda7a + s);
    datasets.push_back(generate_dataset_in_memory(g));
  }

  std::vector<AblationArm> all_arms = arms;
  if (std::find(all_arms.begin(), all_arms.end(), AblationArm::proposed) ==
      all_arms.end())
    all_arms.insert(all_arms.begin(), AblationArm::proposed);

  std::map<AblationArm, ArmResult> results;
  for (AblationArm arm : all_arms) {
    results[arm].arm = arm;
    results[arm].scores.resize(n_seeds);
    results[arm].fit_seconds.resize(n_seeds);
  }

  std::vector<std::function<void()>> jobs;
  for (AblationArm arm : all_arms) {
    for (int s = 0; s < n_seeds; ++s) {
      jobs.push_back([&, arm, s]() {
        const std::uint64_t run_seed = Rng::derive(base_seed, 0x5eed + s);
        const auto [score, seconds] = detail::run_arm_once(
            arm, datasets[s], base_model, proto, run_seed);
        results.at(arm).scores[s] = score;
        results.at(arm).fit_seconds[s] = seconds;
      });
    }
  }
  detail::run_jobs(jobs, threads);

  const std::vector<double>& proposed_scores =
      results[AblationArm::proposed].scores;
  for (AblationArm arm : all_arms) {
    ArmResult& r = results[arm];
    double mean = 0.0, fit = 0.0;
    for (int s = 0; s < n_seeds; ++s) {
      mean += r.scores[s];
      fit += r.fit_seconds[s];
    }
    mean /= n_seeds;
    fit /= n_seeds;
    double var = 0.0;
    for (int s = 0; s < n_seeds; ++s)
      var += (r.scores[s] - mean) * (r.scores[s] - mean);
    r.mean_score = mean;
    r.mean_fit_seconds = fit;
    r.std_score = n_seeds > 1 ? std::sqrt(var / (n_seeds - 1)) : 0.0;
    r.delta_vs_proposed =
        mean - std::accumulate(proposed_scores.begin(), proposed_scores.end(),
                               0.0) /
                   n_seeds;
    r.p_value_vs_proposed =
        arm == AblationArm::proposed
            ? 1.0
            : detail::paired_permutation_p(r.scores, proposed_scores,
                                           base_seed, 10000);
    table.arms.push_back(r);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Running-statistics convergence experiments
// ---------------------------------------------------------------------------

struct ConvergeConfig {
  std::string variant = "prop2";  // "prop2" (decay) or "prop1" (variance)
  int dim = 6;
  int steps = 2000;
  int batch_size = 10;
  int dataset_size = 500;
  double alpha = 0.6;   // power-decay exponent (prop2)
  double gamma = 0.5;   // constant momentum (prop1)
  int replicates = 20;  // prop2: seeds (median); prop1: Monte-Carlo streams
  double tangent_scale = 0.25;
  double center_spread = 0.6;
  double param_drift = 0.0;  // per-step drift of the generating center
  int trace_stride = 10;
  std::uint64_t seed = 0;

  void validate() const {
    if (dim < 2 || steps < 2 || batch_size < 1 || dataset_size < 2 ||
        replicates < 1 || trace_stride < 1)
      throw ConfigError("converge: bad sizes");
    if (variant != "prop2" && variant != "prop1")
      throw ConfigError("converge: variant must be 'prop2' or 'prop1'");
    if (variant == "prop2" && !(alpha > 0.0))
      throw ConfigError("converge: alpha must be positive");
    if (variant == "prop1") {
      if (!(gamma > 0.0 && gamma < 1.0))
        throw ConfigError("converge: gamma must be in (0, 1)");
      if (param_drift > step_bound() || param_drift < 0.0)
        throw ConfigError(
            "converge: parameter drift violates the step-norm bound");
    }
  }

  /// Largest admissible parameter step: (1-gamma^2)/(1-gamma)^2 - 1.
  double step_bound() const {
    return (1.0 - gamma * gamma) / ((1.0 - gamma) * (1.0 - gamma)) - 1.0;
  }
};

struct ConvergenceReport {
  std::string variant;
  std::vector<std::vector<double>> traces;  // per replicate: recorded deltas
  std::vector<int> trace_steps;             // step index per recorded column
  std::vector<double> final_deltas;         // prop2: per replicate
  double median_final_delta = 0.0;
  std::vector<double> variance_curve;  // prop1: Var(G_k) per step
  double slope = 0.0;
  double slope_stderr = 0.0;
  double t_statistic = 0.0;
  bool slope_nonpositive = false;
  double step_bound = 0.0;
};

namespace detail {

inline std::vector<SpdMatrix> spd_cloud(Rng& rng, const SpdMatrix& center,
                                        int count, double spread) {
  std::vector<SpdMatrix> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i)
    out.push_back(
        exp_map(center, SymMatrix(rng.gaussian_symmetric(center.dim(), spread))));
  return out;
}

inline SpdMatrix random_center(Rng& rng, int dim, double spread) {
  const Matrix t = rng.gaussian_symmetric(dim, spread);
  return exp_map(SpdMatrix::identity(dim), SymMatrix(t));
}

}  // namespace detail

/// Streams seeded batches through a momentum-BN layer and tracks the AIRM
/// distance between the running train mean and the full-dataset Karcher
/// mean (prop2), or the Monte-Carlo variance of the running mean across
/// replicate streams (prop1).
inline ConvergenceReport run_convergence(const ConvergeConfig& cfg) {
  cfg.validate();
  ConvergenceReport report;
  report.variant = cfg.variant;
  report.step_bound = cfg.step_bound();

  const bool prop2 = cfg.variant == "prop2";
  const int replicates = cfg.replicates;

  // prop1 shares one frozen dataset across replicate streams; prop2 draws a
  // fresh world per seed.
  SpdMatrix shared_center = SpdMatrix::identity(cfg.dim);
  std::vector<SpdMatrix> shared_cloud;
  FrechetStats shared_target{SpdMatrix::identity(cfg.dim), 0.0, 0, 0.0};
  if (!prop2) {
    Rng rng(Rng::derive(cfg.seed, 0xc10d));
    shared_center = detail::random_center(rng, cfg.dim, cfg.center_spread);
    shared_cloud =
        detail::spd_cloud(rng, shared_center, cfg.dataset_size,
                          cfg.tangent_scale);
    shared_target =
        frechet_mean(shared_cloud, batch_mean_estimate(shared_cloud));
  }

  std::vector<std::vector<double>> sq_deltas(
      replicates, std::vector<double>(cfg.steps, 0.0));

  for (int r = 0; r < replicates; ++r) {
    Rng rng(Rng::derive(cfg.seed, 0x7e9 + r));
    std::vector<SpdMatrix> cloud;
    FrechetStats target{SpdMatrix::identity(cfg.dim), 0.0, 0, 0.0};
    if (prop2) {
      const SpdMatrix center =
          detail::random_center(rng, cfg.dim, cfg.center_spread);
      cloud = detail::spd_cloud(rng, center, cfg.dataset_size,
                                cfg.tangent_scale);
      target = frechet_mean(cloud, batch_mean_estimate(cloud));
    }
    const std::vector<SpdMatrix>& data = prop2 ? cloud : shared_cloud;
    const FrechetStats& goal = prop2 ? target : shared_target;

    SpdBnConfig bn_cfg;
    bn_cfg.mode = BnMode::spdmbn;
    bn_cfg.schedule = prop2 ? MomentumSchedule::power_decay(cfg.alpha)
                            : MomentumSchedule::constant(cfg.gamma);
    SpdBatchNorm layer(cfg.dim, bn_cfg,
                       std::make_shared<NormParams>(cfg.dim));

    std::vector<double> trace;
    for (int k = 0; k < cfg.steps; ++k) {
      std::vector<SpdMatrix> batch;
      batch.reserve(cfg.batch_size);
      for (int j = 0; j < cfg.batch_size; ++j)
        batch.push_back(data[rng.uniform_int(data.size())]);
      layer.forward(batch, RunMode::train);
      const double delta =
          airm_distance(layer.stats().train_mean, goal.mean);
      sq_deltas[r][k] = delta * delta;
      if (k % cfg.trace_stride == 0 || k == cfg.steps - 1) {
        trace.push_back(delta);
        if (r == 0) report.trace_steps.push_back(k);
      }
    }
    report.traces.push_back(std::move(trace));
    report.final_deltas.push_back(std::sqrt(sq_deltas[r].back()));
  }

  if (prop2) {
    std::vector<double> finals = report.final_deltas;
    std::sort(finals.begin(), finals.end());
    const std::size_t n = finals.size();
    report.median_final_delta = n % 2 == 1
                                    ? finals[n / 2]
                                    : 0.5 * (finals[n / 2 - 1] + finals[n / 2]);
    return report;
  }

  // prop1: Monte-Carlo variance per step, then a one-sided OLS slope test.
  report.variance_curve.resize(cfg.steps);
  for (int k = 0; k < cfg.steps; ++k) {
    double acc = 0.0;
    for (int r = 0; r < replicates; ++r) acc += sq_deltas[r][k];
    report.variance_curve[k] = acc / static_cast<double>(replicates);
  }
  const int n = cfg.steps;
  double mean_x = 0.0, mean_y = 0.0;
  for (int k = 0; k < n; ++k) {
    mean_x += k;
    mean_y += report.variance_curve[k];
  }
  mean_x /= n;
  mean_y /= n;
  double sxx = 0.0, sxy = 0.0;
  for (int k = 0; k < n; ++k) {
    sxx += (k - mean_x) * (k - mean_x);
    sxy += (k - mean_x) * (report.variance_curve[k] - mean_y);
  }
  report.slope = sxy / sxx;
  double rss = 0.0;
  for (int k = 0; k < n; ++k) {
    const double fit = mean_y + report.slope * (k - mean_x);
    const double resid = report.variance_curve[k] - fit;
    rss += resid * resid;
  }
  report.slope_stderr = std::sqrt(rss / (n - 2) / sxx);
  report.t_statistic =
      report.slope_stderr > 0.0 ? report.slope / report.slope_stderr : 0.0;
  // One-sided test at 5%: the slope must be non-positive and significantly
  // below zero (normal critical value; n is in the hundreds).
  report.slope_nonpositive = report.t_statistic <= -1.6449;
  return report;
}

}  // namespace spdtsm

#endif  // SPDTSM_HARNESS_HPP
