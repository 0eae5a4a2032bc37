#include <doctest.h>

#include "glalab/rng.hpp"
#include "glalab/wpgd_oracle.hpp"

using namespace glalab;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("one-step predictor") {
  SUBCASE("hand arithmetic") {
    MatrixXd X(2, 1);
    X << 1.0, 2.0;
    VectorXd y(2);
    y << 1.0, 1.0;
    VectorXd omega(2);
    omega << 0.5, 0.25;
    VectorXd x(1);
    x << 2.0;
    CHECK(wpgd_predict(x, X, y, MatrixXd::Identity(1, 1), omega) == doctest::Approx(2.0));
  }
  SUBCASE("ones weighting with identity preconditioners is plain GD") {
    RngStream rng(2, 0);
    const int n = 5, d = 3;
    const MatrixXd X = rng.normal_matrix(n, d);
    const VectorXd y = rng.normal_vector(n);
    const VectorXd x = rng.normal_vector(d);
    const double got = wpgd_predict(x, X, y, MatrixXd::Identity(d, d), MatrixXd::Identity(d, d),
                                    MatrixXd::Ones(n, d));
    CHECK(got == doctest::Approx(x.dot(X.transpose() * y)).epsilon(1e-12));
  }
  SUBCASE("zero weights predict zero") {
    RngStream rng(2, 1);
    const MatrixXd X = rng.normal_matrix(4, 2);
    const VectorXd y = rng.normal_vector(4);
    const VectorXd x = rng.normal_vector(2);
    CHECK(wpgd_predict(x, X, y, MatrixXd::Identity(2, 2), VectorXd::Zero(4)) == 0.0);
  }
  SUBCASE("reduction chain: general -> sample-wise -> PGD") {
    RngStream rng(2, 2);
    const int n = 6, d = 3;
    const MatrixXd X = rng.normal_matrix(n, d);
    const VectorXd y = rng.normal_vector(n);
    const VectorXd x = rng.normal_vector(d);
    const MatrixXd P1 = rng.normal_matrix(d, d);
    const MatrixXd P2 = rng.normal_matrix(d, d);
    const VectorXd omega = rng.normal_vector(n);
    const MatrixXd Omega = omega * Eigen::RowVectorXd::Ones(d);
    const double general = wpgd_predict(x, X, y, P1, P2, Omega);
    const double scalar = wpgd_predict(x, X, y, (P2 * P1.transpose()).eval(), omega);
    CHECK(general == doctest::Approx(scalar).epsilon(1e-12));
    const double pgd = wpgd_predict(x, X, y, P1, P2, MatrixXd::Ones(n, d));
    CHECK(pgd == doctest::Approx(x.dot(P2 * P1.transpose() * X.transpose() * y)).epsilon(1e-12));
  }
  SUBCASE("shape mismatch throws") {
    CHECK_THROWS(wpgd_predict(VectorXd::Zero(2), MatrixXd::Zero(3, 2), VectorXd::Zero(2),
                              MatrixXd::Identity(2, 2), VectorXd::Zero(3)));
  }
}

TEST_CASE("multi-layer recurrence") {
  RngStream rng(7, 0);
  const int n = 5, d = 3, L = 3;
  const MatrixXd X = rng.normal_matrix(n, d);
  const VectorXd y = rng.normal_vector(n);
  const VectorXd x = rng.normal_vector(d);
  std::vector<WpgdLayer> layers;
  for (int l = 0; l < L; ++l)
    layers.push_back({rng.normal_matrix(d, d) * 0.2, rng.normal_matrix(d, d) * 0.2});
  std::vector<VectorXd> gates;
  for (int i = 0; i < n; ++i) {
    VectorXd g(d);
    for (int j = 0; j < d; ++j) g(j) = rng.uniform(0.2, 1.0);
    gates.push_back(g);
  }

  SUBCASE("single layer collapses to the one-step predictor") {
    MatrixXd Omega(n, d);
    for (int i = 0; i < n; ++i) Omega.row(i) = gates[static_cast<size_t>(i)].transpose();
    const auto trace = wpgd_multilayer(X, y, x, {layers[0]}, gates, true);
    const double expect = -wpgd_predict(x, X, y, layers[0].P_k, layers[0].P_q, Omega);
    CHECK(trace.readouts[0](n) == doctest::Approx(expect).epsilon(1e-10));
  }
  SUBCASE("sign conventions differ by negating P_q") {
    const auto a = wpgd_multilayer(X, y, x, layers, gates, true);
    std::vector<WpgdLayer> flipped;
    for (const auto& l : layers) flipped.push_back({l.P_k, (-l.P_q).eval()});
    const auto b = wpgd_multilayer(X, y, x, flipped, gates, false);
    for (int l = 0; l < L; ++l)
      CHECK((a.readouts[static_cast<size_t>(l)] - b.readouts[static_cast<size_t>(l)])
                .cwiseAbs()
                .maxCoeff() == 0.0);
  }
  SUBCASE("zero gate coordinates are rejected") {
    auto bad = gates;
    bad[2](1) = 0.0;
    CHECK_THROWS(wpgd_multilayer(X, y, x, layers, bad, true));
  }
  SUBCASE("mask monotonicity with all-ones gates") {
    // When later examples carry no signal, beta_i matches beta_j for j > i.
    MatrixXd Xz = X;
    VectorXd yz = y;
    for (int i = 2; i < n; ++i) {
      Xz.row(i).setZero();
      yz(i) = 0.0;
    }
    std::vector<VectorXd> ones(static_cast<size_t>(n), VectorXd::Ones(d));
    const auto trace = wpgd_multilayer(Xz, yz, x, layers, ones, true);
    for (int l = 0; l < L; ++l)
      for (int i = 2; i < n; ++i)
        CHECK((trace.B[static_cast<size_t>(l)].row(1) - trace.B[static_cast<size_t>(l)].row(i))
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
  }
}

TEST_CASE("causal PGD corollary") {
  RngStream rng(8, 0);
  const int n = 6, d = 3;
  const MatrixXd X = rng.normal_matrix(n, d);
  const VectorXd y = rng.normal_vector(n);
  const VectorXd x = rng.normal_vector(d);

  SUBCASE("first step recovers P X' y") {
    const MatrixXd P = rng.normal_matrix(d, d) * 0.3;
    const auto trace = causal_pgd_multilayer(X, y, x, {P});
    CHECK((trace.beta_hat[0] - P * X.transpose() * y).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("full attention replays preconditioned gradient descent") {
    std::vector<MatrixXd> P;
    for (int l = 0; l < 3; ++l) P.push_back(rng.normal_matrix(d, d) * 0.1);
    const auto trace = causal_pgd_multilayer(X, y, x, P, true);
    VectorXd beta = VectorXd::Zero(d);
    for (int l = 0; l < 3; ++l) {
      beta = beta - P[static_cast<size_t>(l)] * (X.transpose() * (X * beta - y));
      CHECK((trace.beta_hat[static_cast<size_t>(l)] - beta).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}
