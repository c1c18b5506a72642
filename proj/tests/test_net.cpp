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

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "oracle_utils.hpp"
#include "spdtsm/net.hpp"

using namespace spdtsm;

namespace {

Tensor3 random_tensor3(Rng& rng, std::size_t a, std::size_t b, std::size_t c) {
  Tensor3 t(a, b, c);
  for (double& v : t.v) v = rng.gaussian();
  return t;
}

Tensor4 random_tensor4(Rng& rng, std::size_t a, std::size_t b, std::size_t c,
                       std::size_t d) {
  Tensor4 t(a, b, c, d);
  for (double& v : t.v) v = rng.gaussian();
  return t;
}

// The tiny end-to-end configuration used for gradient checks.
TsmNetConfig tiny_config() {
  TsmNetConfig cfg;
  cfg.channels = 4;
  cfg.time_samples = 32;
  cfg.classes = 2;
  cfg.temporal_filters = 2;
  cfg.temporal_kernel = 9;
  cfg.spatio_spectral_filters = 8;
  cfg.subspace_dim = 4;
  return cfg;
}

EpochBatch tiny_batch(Rng& rng, const TsmNetConfig& cfg, int per_domain = 4,
                      int domains = 2) {
  EpochBatch b;
  const int m = per_domain * domains;
  b.data = random_tensor3(rng, m, cfg.channels, cfg.time_samples);
  for (int i = 0; i < m; ++i) {
    b.labels.push_back(i % cfg.classes);
    b.domains.push_back(i / per_domain);
  }
  return b;
}

}  // namespace

TEST_CASE("temporal convolution forward") {
  Rng rng(301);
  SECTION("unit impulse copies the input to every filter") {
    TemporalConv conv(3, 5);
    conv.weights() = Matrix(3, 5);
    for (int f = 0; f < 3; ++f) conv.weights()(f, 2) = 1.0;  // centered impulse
    const Tensor3 x = random_tensor3(rng, 2, 3, 16);
    const Tensor4 y = conv.forward(x);
    for (std::size_t i = 0; i < 2; ++i)
      for (int f = 0; f < 3; ++f)
        for (std::size_t p = 0; p < 3; ++p)
          for (std::size_t t = 0; t < 16; ++t)
            CHECK(y.row(i, f, p)[t] == Catch::Approx(x.at(i, p, t)).margin(1e-14));
  }
  SECTION("reflect padding preserves constants") {
    TemporalConv conv(2, 7);
    conv.init(rng);
    Tensor3 x(1, 2, 20);
    for (std::size_t p = 0; p < 2; ++p)
      for (std::size_t t = 0; t < 20; ++t) x.at(0, p, t) = 3.5;
    const Tensor4 y = conv.forward(x);
    for (int f = 0; f < 2; ++f) {
      double wsum = 0.0;
      for (int k = 0; k < 7; ++k) wsum += conv.weights()(f, k);
      for (std::size_t t = 0; t < 20; ++t)
        CHECK(y.row(0, f, 0)[t] == Catch::Approx(3.5 * wsum).margin(1e-12));
    }
  }
  SECTION("rejects too-short inputs") {
    TemporalConv conv(2, 9);
    conv.init(rng);
    Tensor3 x(1, 2, 5);
    CHECK_THROWS_AS(conv.forward(x), InvalidInputError);
  }
}

TEST_CASE("temporal convolution gradients") {
  Rng rng(302);
  TemporalConv conv(2, 9);
  conv.init(rng);
  const Tensor3 x = random_tensor3(rng, 2, 3, 32);
  const Tensor4 up = random_tensor4(rng, 2, 2, 3, 32);

  conv.zero_grad();
  conv.forward(x);
  const Tensor3 dx = conv.backward(up);

  auto loss = [&](TemporalConv& c, const Tensor3& input) {
    Tensor4 y = c.forward(input);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += y.v[i] * up.v[i];
    return acc;
  };

  SECTION("kernel gradient") {
    const std::vector<double> fd = oracle::fd_gradient_vec(
        [&]() { return loss(conv, x); }, conv.weights().data(),
        conv.weights().size());
    std::vector<double> analytic(conv.grads().data(),
                                 conv.grads().data() + conv.grads().size());
    CHECK(oracle::rel_error(analytic, fd) < 1e-5);
  }
  SECTION("input gradient") {
    Tensor3 probe = x;
    const std::vector<double> fd = oracle::fd_gradient_vec(
        [&]() { return loss(conv, probe); }, probe.v.data(), probe.v.size());
    std::vector<double> analytic(dx.v.begin(), dx.v.end());
    CHECK(oracle::rel_error(analytic, fd) < 1e-5);
  }
}

TEST_CASE("spatial convolution") {
  Rng rng(303);
  SECTION("one-hot filter selects a (band, channel) row") {
    SpatialConv conv(2, 3, 4);
    conv.weights() = Matrix(2, 12);
    conv.weights()(0, 1 * 4 + 2) = 1.0;  // output 0 <- band 1, channel 2
    const Tensor4 x = random_tensor4(rng, 2, 3, 4, 10);
    const Tensor3 y = conv.forward(x);
    for (std::size_t t = 0; t < 10; ++t)
      CHECK(y.at(0, 0, t) == x.row(0, 1, 2)[t]);
  }
  SECTION("linearity") {
    SpatialConv conv(5, 2, 3);
    conv.init(rng);
    const Tensor4 a = random_tensor4(rng, 1, 2, 3, 8);
    const Tensor4 b = random_tensor4(rng, 1, 2, 3, 8);
    Tensor4 combo(1, 2, 3, 8);
    for (std::size_t i = 0; i < combo.size(); ++i)
      combo.v[i] = 2.0 * a.v[i] - 0.5 * b.v[i];
    const Tensor3 ya = conv.forward(a);
    const Tensor3 yb = conv.forward(b);
    const Tensor3 yc = conv.forward(combo);
    for (std::size_t i = 0; i < yc.size(); ++i)
      CHECK(yc.v[i] == Catch::Approx(2.0 * ya.v[i] - 0.5 * yb.v[i]).margin(1e-10));
  }
  SECTION("gradients") {
    SpatialConv conv(5, 2, 3);
    conv.init(rng);
    const Tensor4 x = random_tensor4(rng, 2, 2, 3, 12);
    Tensor3 up(2, 5, 12);
    for (double& v : up.v) v = rng.gaussian();
    conv.zero_grad();
    conv.forward(x);
    const Tensor4 dx = conv.backward(up);

    auto loss = [&](const Tensor4& input) {
      SpatialConv local = conv;
      Tensor3 y = local.forward(input);
      double acc = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) acc += y.v[i] * up.v[i];
      return acc;
    };
    Tensor4 probe = x;
    const std::vector<double> fd_in = oracle::fd_gradient_vec(
        [&]() { return loss(probe); }, probe.v.data(), probe.v.size());
    std::vector<double> an_in(dx.v.begin(), dx.v.end());
    CHECK(oracle::rel_error(an_in, fd_in) < 1e-5);

    const std::vector<double> fd_w = oracle::fd_gradient_vec(
        [&]() {
          Tensor3 y = conv.forward(x);
          double acc = 0.0;
          for (std::size_t i = 0; i < y.size(); ++i) acc += y.v[i] * up.v[i];
          return acc;
        },
        conv.weights().data(), conv.weights().size());
    std::vector<double> an_w(conv.grads().data(),
                             conv.grads().data() + conv.grads().size());
    CHECK(oracle::rel_error(an_w, fd_w) < 1e-5);
  }
}

TEST_CASE("covariance pooling") {
  Rng rng(304);
  SECTION("orthogonal rows of norm sqrt(T-1) give the identity") {
    const std::size_t t = 9;
    Tensor3 x(1, 2, t);
    // Two centered, orthogonal rows with ||row||^2 = T-1.
    const double scale = std::sqrt((t - 1) / 2.0);
    for (std::size_t s = 0; s < t; ++s) {
      const double a = std::sin(2.0 * M_PI * (s + 0.5) / t);
      const double b = std::cos(2.0 * M_PI * (s + 0.5) / t);
      x.at(0, 0, s) = a;
      x.at(0, 1, s) = b;
    }
    // Orthogonalize and normalize explicitly to be exact.
    double n0 = 0, n1 = 0, dot = 0, m0 = 0, m1 = 0;
    for (std::size_t s = 0; s < t; ++s) {
      m0 += x.at(0, 0, s);
      m1 += x.at(0, 1, s);
    }
    for (std::size_t s = 0; s < t; ++s) {
      x.at(0, 0, s) -= m0 / t;
      x.at(0, 1, s) -= m1 / t;
    }
    for (std::size_t s = 0; s < t; ++s) {
      n0 += x.at(0, 0, s) * x.at(0, 0, s);
      dot += x.at(0, 0, s) * x.at(0, 1, s);
    }
    for (std::size_t s = 0; s < t; ++s)
      x.at(0, 1, s) -= dot / n0 * x.at(0, 0, s);
    for (std::size_t s = 0; s < t; ++s) n1 += x.at(0, 1, s) * x.at(0, 1, s);
    for (std::size_t s = 0; s < t; ++s) {
      x.at(0, 0, s) *= std::sqrt(t - 1.0) / std::sqrt(n0);
      x.at(0, 1, s) *= std::sqrt(t - 1.0) / std::sqrt(n1);
    }
    (void)scale;
    CovariancePool pool;
    const std::vector<Matrix> z = pool.forward(x);
    CHECK(fro_norm(z[0] - Matrix::identity(2)) < 1e-10);
  }
  SECTION("duplicated rows give a rank-1 block") {
    Tensor3 x(1, 2, 16);
    for (std::size_t s = 0; s < 16; ++s)
      x.at(0, 0, s) = x.at(0, 1, s) = std::sin(0.3 * s) + 0.1 * s;
    CovariancePool pool;
    const std::vector<Matrix> z = pool.forward(x);
    CHECK(z[0](0, 0) == Catch::Approx(z[0](0, 1)).margin(1e-12));
    CHECK(z[0](0, 0) == Catch::Approx(z[0](1, 1)).margin(1e-12));
    const std::vector<double> eigs = oracle::eigenvalues_bisect(z[0]);
    CHECK(std::abs(eigs[1]) < 1e-10);
  }
  SECTION("rejects single-sample input") {
    CovariancePool pool;
    Tensor3 x(1, 3, 1);
    CHECK_THROWS_AS(pool.forward(x), InvalidInputError);
  }
  SECTION("gradients") {
    CovariancePool pool;
    const Tensor3 x = random_tensor3(rng, 2, 3, 10);
    std::vector<Matrix> up;
    for (int i = 0; i < 2; ++i) up.push_back(rng.gaussian_symmetric(3));
    pool.forward(x);
    const Tensor3 dx = pool.backward(up);

    Tensor3 probe = x;
    const std::vector<double> fd = oracle::fd_gradient_vec(
        [&]() {
          CovariancePool local;
          const std::vector<Matrix> z = local.forward(probe);
          double acc = 0.0;
          for (int i = 0; i < 2; ++i) acc += fro_dot(up[i], z[i]);
          return acc;
        },
        probe.v.data(), probe.v.size());
    std::vector<double> analytic(dx.v.begin(), dx.v.end());
    CHECK(oracle::rel_error(analytic, fd) < 1e-5);
  }
}

TEST_CASE("bimap layer") {
  Rng rng(305);
  SECTION("identity columns pick the leading principal block") {
    BiMap bimap(5, 3);
    const Matrix z = oracle::random_spd(rng, 5);
    const std::vector<Matrix> in = {z};
    const std::vector<Matrix> out = bimap.forward(in);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        CHECK(out[0](i, j) == Catch::Approx(z(i, j)).margin(1e-14));
  }
  SECTION("eigenvalue interlacing bounds the output spectrum") {
    BiMap bimap(6, 3);
    bimap.init(rng);
    const Matrix z = oracle::random_spd(rng, 6);
    const std::vector<Matrix> in = {z};
    const std::vector<Matrix> out = bimap.forward(in);
    const auto ein = oracle::eigenvalues_bisect(z);
    const auto eout = oracle::eigenvalues_bisect(out[0]);
    CHECK(eout.front() <= ein.front() + 1e-10);
    CHECK(eout.back() >= ein.back() - 1e-10);
  }
  SECTION("stiefel violation raises a model-state error") {
    BiMap bimap(4, 2);
    bimap.weights()(0, 0) = 2.0;
    const std::vector<Matrix> in = {Matrix::identity(4)};
    CHECK_THROWS_AS(bimap.forward(in), ModelStateError);
  }
  SECTION("gradients for dZ and dW") {
    BiMap bimap(5, 3);
    bimap.init(rng);
    const Matrix z = oracle::random_spd(rng, 5);
    const Matrix up = rng.gaussian_symmetric(3);
    const std::vector<Matrix> in = {z};
    bimap.zero_grad();
    bimap.forward(in);
    const std::vector<Matrix> up_batch = {up};
    const std::vector<Matrix> dz = bimap.backward(up_batch);

    const Matrix fd_z = oracle::fd_gradient_sym(
        [&](const Matrix& m) {
          return fro_dot(up, congruence_tza(bimap.weights(), m));
        },
        z);
    CHECK(oracle::rel_error(dz[0], fd_z) < 1e-5);

    const std::vector<double> fd_w = oracle::fd_gradient_vec(
        [&]() { return fro_dot(up, congruence_tza(bimap.weights(), z)); },
        bimap.weights().data(), bimap.weights().size());
    std::vector<double> an_w(bimap.grads().data(),
                             bimap.grads().data() + bimap.grads().size());
    CHECK(oracle::rel_error(an_w, fd_w) < 1e-5);
  }
}

TEST_CASE("reeig layer") {
  Rng rng(306);
  SECTION("inactive above the threshold") {
    ReEig reeig(1e-4);
    const Matrix z = oracle::random_spd(rng, 4);  // spectrum well above 1e-4
    const std::vector<Matrix> in = {z};
    const std::vector<SpdMatrix> out = reeig.forward(in);
    CHECK(fro_norm(out[0].mat() - z) < 1e-10);
    CHECK(reeig.activation_count() == 0);
  }
  SECTION("rectifies a zero eigenvalue to the threshold") {
    ReEig reeig(1e-4);
    const Matrix z = oracle::sym_with_spectrum(rng, {2.0, 1.0, 0.0});
    const std::vector<Matrix> in = {z};
    const std::vector<SpdMatrix> out = reeig.forward(in);
    CHECK(reeig.activation_count() == 1);
    const auto eigs = oracle::eigenvalues_bisect(out[0].mat());
    CHECK(eigs.back() == Catch::Approx(1e-4).margin(1e-12));
  }
  SECTION("gradient away from the kink") {
    ReEig reeig(1e-4);
    const Matrix z = oracle::random_spd(rng, 4);
    const Matrix up = rng.gaussian_symmetric(4);
    const std::vector<Matrix> in = {z};
    reeig.forward(in);
    const std::vector<Matrix> up_batch = {up};
    const std::vector<Matrix> dz = reeig.backward(up_batch);
    const Matrix fd = oracle::fd_gradient_sym(
        [&](const Matrix& m) {
          ReEig local(1e-4);
          const std::vector<Matrix> probe = {symmetrize(m)};
          return fro_dot(up, local.forward(probe)[0].mat());
        },
        z);
    CHECK(oracle::rel_error(dz[0], fd) < 1e-5);
  }
}

TEST_CASE("tangent map") {
  Rng rng(307);
  auto params = std::make_shared<NormParams>(4);
  SpdBnConfig cfg;
  TangentMap map(4, cfg, params);

  SECTION("identity with identity statistics maps to zero") {
    const std::vector<SpdMatrix> z = {SpdMatrix::identity(4)};
    const std::vector<int> domains = {0};
    const Matrix feats = map.forward(z, domains, RunMode::eval);
    CHECK(max_abs(feats) < 1e-12);
    CHECK(feats.cols() == 10);
  }
  SECTION("norm preservation of the vectorization") {
    const SpdMatrix z = SpdMatrix::trusted(oracle::random_spd(rng, 4));
    const std::vector<SpdMatrix> batch = {z};
    const std::vector<int> domains = {0};
    const Matrix feats = map.forward(batch, domains, RunMode::eval);
    // With identity statistics the normalized point is Z^(1/(1+eps)).
    const double p = 1.0 / (1.0 + cfg.eps);
    const Matrix logz =
        matrix_function(z, ScalarFn::log()) * p;
    double norm2 = 0.0;
    for (std::size_t c = 0; c < feats.cols(); ++c)
      norm2 += feats(0, c) * feats(0, c);
    CHECK(std::sqrt(norm2) == Catch::Approx(fro_norm(logz)).margin(1e-10));
  }
  SECTION("matches the direct whiten-log-vectorize route with exact stats") {
    const SpdMatrix center = SpdMatrix::trusted(oracle::random_spd(rng, 4, 0.5));
    std::vector<SpdMatrix> cloud;
    for (int j = 0; j < 20; ++j) {
      const Matrix t = rng.gaussian_symmetric(4, 0.3);
      cloud.push_back(exp_map(center, SymMatrix(t)));
    }
    auto p2 = std::make_shared<NormParams>(4);
    TangentMap tsm(4, cfg, p2);
    tsm.bn().fit_domain(3, cloud);
    const std::vector<int> domains(cloud.size(), 3);
    const Matrix feats = tsm.forward(cloud, domains, RunMode::eval);

    const auto& stats = tsm.bn().layer(3).stats();
    const Matrix isq = matrix_function(stats.test_mean, ScalarFn::inv_sqrt());
    const double scale = 1.0 / (std::sqrt(stats.test_var) + cfg.eps);
    for (std::size_t j = 0; j < cloud.size(); ++j) {
      const Matrix direct =
          matrix_function(SymMatrix::symmetrized(
                              congruence_tza(isq, cloud[j].mat())),
                          ScalarFn::log()) *
          scale;
      std::vector<double> expect(10);
      detail::upper_vectorize(direct, expect.data());
      for (int c = 0; c < 10; ++c)
        CHECK(feats(j, c) == Catch::Approx(expect[c]).margin(1e-9));
    }
    // Euclidean distances between tangent rows equal scaled log-distances.
    const Matrix l0 = matrix_function(
        SymMatrix::symmetrized(congruence_tza(isq, cloud[0].mat())),
        ScalarFn::log());
    const Matrix l1 = matrix_function(
        SymMatrix::symmetrized(congruence_tza(isq, cloud[1].mat())),
        ScalarFn::log());
    double d2 = 0.0;
    for (int c = 0; c < 10; ++c) {
      const double d = feats(0, c) - feats(1, c);
      d2 += d * d;
    }
    CHECK(std::sqrt(d2) ==
          Catch::Approx(scale * fro_norm(l0 - l1)).margin(1e-9));
  }
}

TEST_CASE("softmax classifier") {
  Rng rng(308);
  SoftmaxClassifier cls(5, 3);
  const Matrix v = rng.gaussian_matrix(4, 5);

  SECTION("zero weights give uniform softmax and log C loss") {
    const Matrix logits = cls.logits(v);
    CHECK(max_abs(logits) == 0.0);
    const std::vector<int> labels = {0, 1, 2, 0};
    CHECK(cls.loss(logits, labels) ==
          Catch::Approx(std::log(3.0)).margin(1e-12));
    const Matrix p = SoftmaxClassifier::softmax(logits);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double total = 0.0;
      for (std::size_t c = 0; c < p.cols(); ++c) total += p(i, c);
      CHECK(total == Catch::Approx(1.0).margin(1e-12));
    }
  }
  SECTION("large margins drive the loss to zero") {
    Matrix logits(1, 3);
    logits(0, 1) = 50.0;
    const std::vector<int> labels = {1};
    CHECK(cls.loss(logits, labels) < 1e-12);
  }
  SECTION("label validation") {
    const Matrix logits = cls.logits(v);
    const std::vector<int> bad = {0, 1, 3, 0};
    CHECK_THROWS_AS(cls.loss(logits, bad), InvalidInputError);
  }
  SECTION("gradients") {
    SoftmaxClassifier local(5, 3);
    local.weights() = rng.gaussian_matrix(6, 3, 0.3);
    const std::vector<int> labels = {0, 1, 2, 0};
    local.zero_grad();
    const Matrix logits = local.logits(v);
    auto [loss, dv] = local.loss_backward(v, logits, labels);
    CHECK(loss >= 0.0);

    const std::vector<double> fd_w = oracle::fd_gradient_vec(
        [&]() { return local.loss(local.logits(v), labels); },
        local.weights().data(), local.weights().size(), 1e-6);
    std::vector<double> an_w(local.grads().data(),
                             local.grads().data() + local.grads().size());
    CHECK(oracle::rel_error(an_w, fd_w) < 1e-6);

    Matrix probe = v;
    const std::vector<double> fd_v = oracle::fd_gradient_vec(
        [&]() { return local.loss(local.logits(probe), labels); },
        probe.data(), probe.size(), 1e-6);
    std::vector<double> an_v(dv.data(), dv.data() + dv.size());
    CHECK(oracle::rel_error(an_v, fd_v) < 1e-6);
  }
}

TEST_CASE("full model end-to-end") {
  Rng rng(309);
  const TsmNetConfig cfg = tiny_config();

  SECTION("untrained model predicts at chance on balanced labels") {
    TsmNet model(cfg, 42);
    EpochBatch batch = tiny_batch(rng, cfg, 10, 2);
    const ForwardResult out = model.evaluate(batch);
    double correct_share = 0.0;
    std::vector<int> counts(cfg.classes, 0);
    for (std::size_t i = 0; i < out.predictions.size(); ++i) {
      counts[out.predictions[i]]++;
      if (out.predictions[i] == batch.labels[i]) correct_share += 1.0;
    }
    correct_share /= out.predictions.size();
    // Zero classifier -> constant predictions -> exactly chance accuracy.
    CHECK(correct_share == Catch::Approx(1.0 / cfg.classes).margin(1e-12));
    CHECK(out.loss == Catch::Approx(std::log(2.0)).margin(1e-12));
  }

  SECTION("eval determinism") {
    TsmNet model(cfg, 42);
    EpochBatch batch = tiny_batch(rng, cfg);
    const ForwardResult a = model.evaluate(batch);
    const ForwardResult b = model.evaluate(batch);
    CHECK(a.logits == b.logits);
  }

  SECTION("clone isolates the shared parameter block") {
    TsmNet model(cfg, 42);
    TsmNet copy = model.clone();
    copy.norm_params().log_scale = 1.0;
    CHECK(model.norm_params().log_scale == 0.0);
  }
}

TEST_CASE("end-to-end gradient check on the tiny config") {
  Rng rng(310);
  TsmNetConfig cfg = tiny_config();
  TsmNet model(cfg, 7);
  // A couple of optimizer-free steps so the classifier is nonzero and the
  // gradient is informative.
  model.classifier().weights() = rng.gaussian_matrix(cfg.feature_dim() + 1,
                                                     cfg.classes, 0.05);
  EpochBatch batch = tiny_batch(rng, cfg, 4, 2);

  model.zero_grad();
  const double loss = model.train_step(batch);
  CHECK(std::isfinite(loss));

  auto frozen_loss = [&]() { return model.loss_frozen(batch); };

  SECTION("temporal kernel") {
    const std::vector<double> fd = oracle::fd_gradient_vec(
        frozen_loss, model.temporal().weights().data(),
        model.temporal().weights().size());
    std::vector<double> an(model.temporal().grads().data(),
                           model.temporal().grads().data() +
                               model.temporal().grads().size());
    CHECK(oracle::rel_error(an, fd) < 1e-4);
  }
  SECTION("spatial weights") {
    const std::vector<double> fd = oracle::fd_gradient_vec(
        frozen_loss, model.spatial().weights().data(),
        model.spatial().weights().size());
    std::vector<double> an(model.spatial().grads().data(),
                           model.spatial().grads().data() +
                               model.spatial().grads().size());
    CHECK(oracle::rel_error(an, fd) < 1e-4);
  }
  SECTION("bimap weights") {
    // Step small enough that probes stay inside the layer's 1e-6 Stiefel
    // tolerance.
    const std::vector<double> fd = oracle::fd_gradient_vec(
        frozen_loss, model.bimap().weights().data(),
        model.bimap().weights().size(), 3e-7);
    std::vector<double> an(model.bimap().grads().data(),
                           model.bimap().grads().data() +
                               model.bimap().grads().size());
    CHECK(oracle::rel_error(an, fd) < 1e-4);
  }
  SECTION("classifier weights") {
    const std::vector<double> fd = oracle::fd_gradient_vec(
        frozen_loss, model.classifier().weights().data(),
        model.classifier().weights().size());
    std::vector<double> an(model.classifier().grads().data(),
                           model.classifier().grads().data() +
                               model.classifier().grads().size());
    CHECK(oracle::rel_error(an, fd) < 1e-4);
  }
  SECTION("dispersion scale") {
    const double fd = oracle::fd_gradient_vec(
        frozen_loss, &model.norm_params().log_scale, 1)[0];
    CHECK(model.grad_log_scale() ==
          Catch::Approx(fd).epsilon(1e-4).margin(1e-10));
  }
}

TEST_CASE("euclidean ablation network") {
  Rng rng(311);
  TsmNetConfig cfg = tiny_config();

  SECTION("constant channels hit the variance floor without NaNs") {
    LogVarPool pool;
    Tensor3 x(1, 2, 16);
    for (std::size_t s = 0; s < 16; ++s) {
      x.at(0, 0, s) = 2.0;  // constant channel -> zero variance
      x.at(0, 1, s) = std::sin(0.4 * s);
    }
    const Matrix y = pool.forward(x);
    CHECK(y(0, 0) == Catch::Approx(std::log(1e-10)).margin(1e-12));
    CHECK(std::isfinite(y(0, 1)));
    Matrix up(1, 2);
    up(0, 0) = 1.0;
    up(0, 1) = 1.0;
    const Tensor3 dx = pool.backward(up);
    for (std::size_t s = 0; s < 16; ++s)
      CHECK(dx.at(0, 0, s) == 0.0);  // gradient blocked below the floor
  }

  SECTION("exact statistics whiten features per domain") {
    Rng local(99);
    const std::size_t dim = 6;
    auto params = std::make_shared<EuclidBnParams>();
    EuclidBnConfig ecfg;
    ecfg.eps = 0.0;
    EuclideanBatchNorm bn(dim, ecfg, params);
    Matrix data(40, dim);
    for (std::size_t i = 0; i < data.rows(); ++i)
      for (std::size_t f = 0; f < dim; ++f)
        data(i, f) = 3.0 * local.gaussian() + static_cast<double>(f);
    bn.fit_statistics(data);
    const Matrix out = bn.forward(data, RunMode::eval);
    for (std::size_t f = 0; f < dim; ++f) {
      double mean = 0.0, var = 0.0;
      for (std::size_t i = 0; i < out.rows(); ++i) mean += out(i, f);
      mean /= out.rows();
      for (std::size_t i = 0; i < out.rows(); ++i)
        var += (out(i, f) - mean) * (out(i, f) - mean);
      var /= out.rows();
      CHECK(mean == Catch::Approx(0.0).margin(1e-6));
      CHECK(var == Catch::Approx(1.0).margin(1e-6));
    }
  }

  SECTION("end-to-end gradient check") {
    LogVarNet model(cfg, 7);
    model.classifier().weights() =
        rng.gaussian_matrix(cfg.spatio_spectral_filters + 1, cfg.classes, 0.05);
    EpochBatch batch = tiny_batch(rng, cfg, 4, 2);
    model.zero_grad();
    const double loss = model.train_step(batch);
    CHECK(std::isfinite(loss));
    auto frozen_loss = [&]() { return model.loss_frozen(batch); };

    const std::vector<double> fd_t = oracle::fd_gradient_vec(
        frozen_loss, model.temporal().weights().data(),
        model.temporal().weights().size());
    std::vector<double> an_t(model.temporal().grads().data(),
                             model.temporal().grads().data() +
                                 model.temporal().grads().size());
    CHECK(oracle::rel_error(an_t, fd_t) < 1e-5);

    const std::vector<double> fd_s = oracle::fd_gradient_vec(
        frozen_loss, model.spatial().weights().data(),
        model.spatial().weights().size());
    std::vector<double> an_s(model.spatial().grads().data(),
                             model.spatial().grads().data() +
                                 model.spatial().grads().size());
    CHECK(oracle::rel_error(an_s, fd_s) < 1e-5);

    const std::vector<double> fd_c = oracle::fd_gradient_vec(
        frozen_loss, model.classifier().weights().data(),
        model.classifier().weights().size());
    std::vector<double> an_c(model.classifier().grads().data(),
                             model.classifier().grads().data() +
                                 model.classifier().grads().size());
    CHECK(oracle::rel_error(an_c, fd_c) < 1e-5);
  }
}
