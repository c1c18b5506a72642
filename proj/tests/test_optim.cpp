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
#include "spdtsm/optim.hpp"
#include "spdtsm/rng.hpp"

using namespace spdtsm;

TEST_CASE("stiefel_project") {
  Rng rng(201);
  const Matrix w = qr_orthonormalize(rng.gaussian_matrix(6, 3));

  SECTION("already-tangent gradients are unchanged") {
    // Build a tangent vector: W A (A skew) + orthogonal-complement part.
    Matrix skew(3, 3);
    skew(0, 1) = 0.4;
    skew(1, 0) = -0.4;
    skew(1, 2) = -0.9;
    skew(2, 1) = 0.9;
    Matrix ambient = rng.gaussian_matrix(6, 3);
    const Matrix complement = ambient - w * mul_at_b(w, ambient);
    const Matrix tangent = w * skew + complement;
    CHECK(fro_norm(stiefel_project(w, tangent) - tangent) < 1e-12);
  }
  SECTION("the normal direction is annihilated") {
    CHECK(fro_norm(stiefel_project(w, w)) < 1e-12);
  }
  SECTION("projection lands in the tangent space") {
    const Matrix g = rng.gaussian_matrix(6, 3);
    const Matrix proj = stiefel_project(w, g);
    const Matrix wtp = mul_at_b(w, proj);
    CHECK(fro_norm(wtp + transposed(wtp)) < 1e-10);  // WᵀP is skew-symmetric
  }
}

TEST_CASE("stiefel_retract") {
  Rng rng(202);
  const Matrix w = qr_orthonormalize(rng.gaussian_matrix(8, 4));

  SECTION("zero step is the identity") {
    const Matrix r = stiefel_retract(w, Matrix(8, 4));
    CHECK(fro_norm(r - w) < 1e-12);
  }
  SECTION("any step restores orthonormal columns") {
    for (int rep = 0; rep < 5; ++rep) {
      const Matrix step = rng.gaussian_matrix(8, 4, 0.8);
      const Matrix r = stiefel_retract(w, step);
      CHECK(stiefel_deviation(r) < 1e-10);
    }
  }
  SECTION("first-order agreement with the straight step") {
    // ||retract(W, tV) - (W + tV)|| must shrink like t^2.
    const Matrix v = stiefel_project(w, rng.gaussian_matrix(8, 4));
    double prev_ratio = 0.0;
    for (double t : {1e-2, 5e-3, 2.5e-3}) {
      const Matrix r = stiefel_retract(w, v * t);
      const double err = fro_norm(r - (w + v * t));
      const double ratio = err / (t * t);
      if (prev_ratio > 0.0)
        CHECK(ratio == Catch::Approx(prev_ratio).epsilon(0.35));
      prev_ratio = ratio;
    }
  }
}

TEST_CASE("adam on euclidean parameters") {
  SECTION("zero gradients leave parameters unchanged except weight decay") {
    AdamConfig cfg;
    RiemannianAdam opt(cfg);
    std::vector<double> w = {1.0, -2.0};
    std::vector<double> g = {0.0, 0.0};
    std::vector<double> w_decayed = {0.5};
    std::vector<double> g2 = {0.0};
    std::vector<ParamBinding> params = {
        {"plain", ParamKind::euclidean, w.data(), g.data(), 2, 0, 0, false},
        {"decayed", ParamKind::euclidean, w_decayed.data(), g2.data(), 1, 0, 0,
         true}};
    opt.step(params);
    CHECK(w[0] == 1.0);
    CHECK(w[1] == -2.0);
    CHECK(w_decayed[0] ==
          Catch::Approx(0.5 - cfg.lr * cfg.weight_decay * 0.5).margin(1e-15));
  }
  SECTION("first step matches the hand-computed scalar trace") {
    AdamConfig cfg;
    cfg.weight_decay = 0.0;
    RiemannianAdam opt(cfg);
    double w = 0.7;
    const double g = 0.3;
    std::vector<ParamBinding> params = {
        {"scalar", ParamKind::euclidean, &w, &g, 1, 0, 0, false}};
    opt.step(params);
    // Bias correction makes mhat = g and vhat = g^2 on the first step.
    const double expected = 0.7 - cfg.lr * g / (std::abs(g) + cfg.eps);
    CHECK(w == Catch::Approx(expected).margin(1e-15));
  }
  SECTION("beta1 = beta2 = 0 reduces to sign-normalized descent") {
    AdamConfig cfg;
    cfg.beta1 = 0.0;
    cfg.beta2 = 0.0;
    cfg.weight_decay = 0.0;
    RiemannianAdam opt(cfg);
    double w = 0.0;
    double g = -4.2;
    std::vector<ParamBinding> params = {
        {"scalar", ParamKind::euclidean, &w, &g, 1, 0, 0, false}};
    for (int k = 0; k < 3; ++k) {
      const double before = w;
      opt.step(params);
      CHECK(w - before ==
            Catch::Approx(cfg.lr * g / (std::abs(g) + cfg.eps) * -1.0)
                .margin(1e-15));
    }
  }
  SECTION("non-finite gradients abort with the parameter name") {
    RiemannianAdam opt;
    double w = 0.0;
    double g = std::nan("");
    std::vector<ParamBinding> params = {
        {"broken", ParamKind::euclidean, &w, &g, 1, 0, 0, false}};
    try {
      opt.step(params);
      FAIL("expected NumericError");
    } catch (const NumericError& err) {
      CHECK(std::string(err.what()).find("broken") != std::string::npos);
    }
  }
}

TEST_CASE("adam on the stiefel manifold") {
  Rng rng(203);
  const Matrix target = qr_orthonormalize(rng.gaussian_matrix(6, 3));
  // Start a short hop away from the target (tangent of norm 0.25).
  Matrix hop = stiefel_project(target, rng.gaussian_matrix(6, 3));
  hop *= 0.25 / fro_norm(hop);
  Matrix w = stiefel_retract(target, hop);

  AdamConfig cfg;
  cfg.lr = 2e-3;
  cfg.weight_decay = 0.0;
  RiemannianAdam opt(cfg);

  Matrix grad(6, 3);
  std::vector<ParamBinding> params = {{"w", ParamKind::stiefel, w.data(),
                                       grad.data(), w.size(), 6, 3, false}};

  auto objective = [&](const Matrix& m) {
    const Matrix d = m - target;
    return fro_dot(d, d);
  };

  double prev = objective(w);
  const double initial = prev;
  for (int step = 0; step < 100; ++step) {
    const Matrix d = (w - target) * 2.0;
    for (std::size_t i = 0; i < grad.size(); ++i) grad.data()[i] = d.data()[i];
    opt.step(params);
    const double now = objective(w);
    CHECK(now < prev + 1e-12);
    CHECK(stiefel_deviation(w) < 1e-8);
    prev = now;
  }
  CHECK(prev < initial);
  CHECK(prev < 1e-4);
}

TEST_CASE("stiefel parameters refuse weight decay") {
  Rng rng(204);
  Matrix w = qr_orthonormalize(rng.gaussian_matrix(4, 2));
  Matrix g(4, 2);
  RiemannianAdam opt;
  std::vector<ParamBinding> params = {
      {"w", ParamKind::stiefel, w.data(), g.data(), w.size(), 4, 2, true}};
  CHECK_THROWS_AS(opt.step(params), InvalidInputError);
}

TEST_CASE("optimizer state round-trips") {
  Rng rng(205);
  RiemannianAdam a;
  double w1 = 0.3, g1 = 0.1;
  std::vector<ParamBinding> params = {
      {"x", ParamKind::euclidean, &w1, &g1, 1, 0, 0, false}};
  a.step(params);
  a.step(params);

  RiemannianAdam b;
  b.restore(a.state());
  double wa = w1, wb = w1;
  std::vector<ParamBinding> pa = {
      {"x", ParamKind::euclidean, &wa, &g1, 1, 0, 0, false}};
  std::vector<ParamBinding> pb = {
      {"x", ParamKind::euclidean, &wb, &g1, 1, 0, 0, false}};
  a.step(pa);
  b.step(pb);
  CHECK(wa == wb);
}
