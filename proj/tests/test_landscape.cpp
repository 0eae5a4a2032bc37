#include <doctest.h>

#include <cmath>

#include "glalab/gla_engine.hpp"
#include "glalab/landscape.hpp"
#include "glalab/rng.hpp"

using namespace glalab;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

RiskModel scalar_instance() {
  // d = 1, sigma = 0, one context example with correlation 0.6
  return RiskModel::isotropic(1, 0.0, build_correlation_structure({{1, 0.6}}));
}

}  // namespace

TEST_CASE("closed-form risk") {
  SUBCASE("null predictor risk is M") {
    RngStream rng(1, 0);
    const auto corr = build_correlation_structure({{2, 0.3}, {2, 0.4}});
    VectorXd spec(3);
    spec << 2.0, 1.0, 0.5;
    const RiskModel model = RiskModel::general(MatrixXd(spec.asDiagonal()), 0.7, corr);
    const double M = spec.sum() + 0.49;
    CHECK(closed_form_risk(MatrixXd::Zero(3, 3), VectorXd::Zero(4), model) ==
          doctest::Approx(M));
    CHECK(closed_form_risk(rng.normal_matrix(3, 3), VectorXd::Zero(4), model) ==
          doctest::Approx(M));
  }
  SUBCASE("scalar algebra: 1 - 1.2 c w + 3 c^2 w^2") {
    const RiskModel model = scalar_instance();
    auto risk = [&](double c, double w) {
      return closed_form_risk(MatrixXd::Constant(1, 1, c), VectorXd::Constant(1, w), model);
    };
    CHECK(risk(1.0, 0.2) == doctest::Approx(1.0 - 1.2 * 0.2 + 3 * 0.04));
    CHECK(risk(0.5, 0.4) == doctest::Approx(0.88));
    CHECK(risk(2.0, 0.1) == doctest::Approx(1.0 - 1.2 * 0.2 + 3 * 0.04));
  }
}

TEST_CASE("risk gradient") {
  SUBCASE("vanishes at the origin") {
    const auto corr = build_correlation_structure({{3, 0.5}});
    const RiskModel model = RiskModel::isotropic(2, 0.1, corr);
    const auto [gP, gw] = risk_gradient(MatrixXd::Zero(2, 2), VectorXd::Zero(3), model);
    CHECK(gP.cwiseAbs().maxCoeff() == 0.0);
    CHECK(gw.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("matches central differences") {
    RngStream rng(3, 0);
    for (int trial = 0; trial < 10; ++trial) {
      const int d = 2 + static_cast<int>(rng.uniform_index(2));
      MatrixXd A = rng.normal_matrix(d, d);
      const RiskModel model = RiskModel::general(
          A * A.transpose() + 0.3 * MatrixXd::Identity(d, d), rng.uniform(),
          build_correlation_structure({{2, 0.4}, {1, 0.3}}));
      const MatrixXd P = rng.normal_matrix(d, d);
      const VectorXd w = rng.normal_vector(3);
      const auto [gP, gw] = risk_gradient(P, w, model);
      const double h = 1e-5;
      MatrixXd Pp = P;
      double worst = 0.0;
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
          Pp(i, j) += h;
          const double up = closed_form_risk(Pp, w, model);
          Pp(i, j) -= 2 * h;
          const double dn = closed_form_risk(Pp, w, model);
          Pp(i, j) += h;
          worst = std::max(worst, std::abs((up - dn) / (2 * h) - gP(i, j)));
        }
      const double scale = std::max(1.0, gP.cwiseAbs().maxCoeff());
      CHECK(worst / scale < 1e-6);
    }
  }
}

TEST_CASE("spectral setup") {
  SUBCASE("identity covariance always satisfies the gap condition") {
    const auto corr = build_correlation_structure({{4, 0.9}});
    const auto spec = spectral_setup(RiskModel::isotropic(3, 0.0, corr));
    CHECK(spec.delta_sigma == 0.0);
    CHECK(spec.gap_condition);
  }
  SUBCASE("block-ones R has equal nonzero extremes") {
    const auto corr = build_correlation_structure({{2, 0.4}, {2, 0.5}});
    const auto spec = spectral_setup(RiskModel::isotropic(2, 0.0, corr));
    CHECK(spec.lambda_max_nz == doctest::Approx(2.0));
    CHECK(spec.lambda_min_nz == doctest::Approx(2.0));
    CHECK(spec.delta_r == doctest::Approx(0.0));
    CHECK(spec.r_in_range_of_R);
  }
  SUBCASE("flags r outside the range of R") {
    RiskModel model = RiskModel::isotropic(2, 0.0, build_correlation_structure({{2, 0.4}}));
    model.corr.r << 0.5, -0.5;  // orthogonal to the all-ones range
    const auto spec = spectral_setup(model);
    CHECK_FALSE(spec.r_in_range_of_R);
  }
  SUBCASE("rejects non-SPD covariance") {
    RiskModel model = RiskModel::isotropic(2, 0.0, build_correlation_structure({{1, 0.5}}));
    model.Sigma << 1.0, 0.0, 0.0, -1.0;
    CHECK_THROWS(spectral_setup(model));
  }
}

TEST_CASE("transfer functions") {
  SUBCASE("identity covariance pins h2") {
    for (int d : {1, 3, 7}) {
      for (double sigma : {0.0, 0.5}) {
        const auto corr = build_correlation_structure({{2, 0.3}});
        const auto spec = spectral_setup(RiskModel::isotropic(d, sigma, corr));
        for (double gamma : {1.0, 2.0, 17.0})
          CHECK(transfer_h2(gamma, spec) ==
                doctest::Approx(1.0 / (d + sigma * sigma + 1.0)).epsilon(1e-12));
      }
    }
  }
  SUBCASE("single eigenvalue makes h1 constant") {
    const auto corr = build_correlation_structure({{3, 0.5}});  // lambda = {3, 0, 0}
    const auto spec = spectral_setup(RiskModel::isotropic(2, 0.0, corr));
    CHECK(transfer_h1(0.1, spec) == doctest::Approx(3.0));
    CHECK(transfer_h1(0.9, spec) == doctest::Approx(3.0));
  }
  SUBCASE("scalar instance composite equals 2") {
    const auto spec = spectral_setup(scalar_instance());
    CHECK(transfer_h2(1.0, spec) == doctest::Approx(0.5));
    CHECK(transfer_h2(5.0, spec) == doctest::Approx(0.5));
    CHECK(transfer_composite(1.0, spec) == doctest::Approx(2.0));
  }
  SUBCASE("h2 stays in (0, 1]; h1 stays within the weighted eigenvalue hull") {
    RngStream rng(17, 0);
    for (int trial = 0; trial < 20; ++trial) {
      const int d = 1 + static_cast<int>(rng.uniform_index(5));
      VectorXd s(d);
      for (int i = 0; i < d; ++i) s(i) = rng.uniform(0.2, 3.0);
      const auto corr = build_correlation_structure({{2, 0.5}, {3, 0.2}});
      const auto spec = spectral_setup(
          RiskModel::general(MatrixXd(s.asDiagonal()), rng.uniform(), corr));
      double lo = 1e300, hi = 0.0;
      for (int i = 0; i < spec.lambda.size(); ++i) {
        if (spec.a(i) * spec.a(i) > 1e-20) {
          lo = std::min(lo, spec.lambda(i));
          hi = std::max(hi, spec.lambda(i));
        }
      }
      for (double gamma = 1.0; gamma < 40.0; gamma *= 2.3) {
        const double h2 = transfer_h2(gamma, spec);
        CHECK(h2 > 0.0);
        CHECK(h2 <= 1.0);
        const double h1 = transfer_h1(h2, spec);
        CHECK(h1 >= lo - 1e-12);
        CHECK(h1 <= hi + 1e-12);
      }
    }
  }
  SUBCASE("h1 rejects a vanishing correlation vector") {
    RiskModel model = RiskModel::isotropic(2, 0.0, build_correlation_structure({{2, 0.0}}));
    const auto spec = spectral_setup(model);
    CHECK_THROWS(transfer_h1(1.0, spec));
  }
}

TEST_CASE("fixed point solver") {
  SUBCASE("scalar instance converges to 2 in a few iterations") {
    const auto spec = spectral_setup(scalar_instance());
    const auto fp = solve_fixed_point(spec);
    CHECK(fp.converged);
    CHECK(fp.gamma == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(fp.iterations <= 3);
    CHECK(fp.residual <= 1e-12);
  }
  SUBCASE("identity covariance solves in one composite application") {
    const auto corr = build_correlation_structure({{3, 0.4}, {3, 0.6}});
    const auto spec = spectral_setup(RiskModel::isotropic(4, 0.2, corr));
    const auto fp = solve_fixed_point(spec);
    const double expect = transfer_h1(1.0 / (4 + 0.04 + 1.0), spec) + 1.0;
    CHECK(fp.gamma == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("optimal WPGD solution") {
  SUBCASE("scalar instance closed form") {
    const auto sol = optimal_wpgd(scalar_instance());
    CHECK(sol.converged);
    CHECK(sol.gamma == doctest::Approx(2.0));
    CHECK(sol.P_dir(0, 0) == doctest::Approx(1.0 / 3.0));
    CHECK(sol.omega(0) == doctest::Approx(0.4));
    CHECK(sol.rescale == doctest::Approx(1.5));
    CHECK(sol.risk == doctest::Approx(0.88).epsilon(1e-10));
    CHECK(optimal_wpgd_risk_isotropic(scalar_instance()) == doctest::Approx(0.88));
  }
  SUBCASE("shared task recovers uniform weights") {
    const int n = 4, d = 3;
    const auto corr = build_correlation_structure({{n, 1.0}});
    const auto sol = optimal_wpgd(RiskModel::isotropic(d, 0.0, corr));
    const double expect = 1.0 / (n + d + 1.0);
    for (int i = 0; i < n; ++i) CHECK(sol.omega(i) == doctest::Approx(expect));
  }
  SUBCASE("two orthogonal segments, isotropic fast path") {
    const auto corr = build_correlation_structure({{1, 0.0}, {1, 0.8}});
    const RiskModel model = RiskModel::isotropic(1, 0.0, corr);
    CHECK(optimal_wpgd_risk_isotropic(model) == doctest::Approx(1.0 - 0.64 / 3.0));
    CHECK(optimal_wpgd(model).risk == doctest::Approx(1.0 - 0.64 / 3.0).epsilon(1e-10));
  }
  SUBCASE("stationarity after the rescale") {
    RngStream rng(23, 0);
    for (int trial = 0; trial < 10; ++trial) {
      const int d = 2 + static_cast<int>(rng.uniform_index(3));
      VectorXd s(d);
      for (int i = 0; i < d; ++i) s(i) = rng.uniform(0.9, 1.1);
      const auto corr = build_correlation_structure({{2, 0.3}, {2, 0.5}});
      const RiskModel model =
          RiskModel::general(MatrixXd(s.asDiagonal()), rng.uniform(0.0, 0.3), corr);
      const auto spec = spectral_setup(model);
      if (!spec.gap_condition) continue;
      const auto sol = optimal_wpgd(model);
      const auto [gP, gw] = risk_gradient(sol.P, sol.omega, model);
      const auto [gP0, gw0] =
          risk_gradient(rng.normal_matrix(d, d), rng.normal_vector(model.n()), model);
      const double ref = 1.0 + std::sqrt(gP0.squaredNorm() + gw0.squaredNorm());
      CHECK(std::sqrt(gP.squaredNorm() + gw.squaredNorm()) <= 1e-8 * ref);
    }
  }
  SUBCASE("empty context returns the null risk") {
    const auto corr = build_correlation_structure({{0, 0.5}});
    const auto sol = optimal_wpgd(RiskModel::isotropic(3, 0.5, corr));
    CHECK(sol.risk == doctest::Approx(3.25));
  }
}

TEST_CASE("linear attention optimum") {
  SUBCASE("single example absorbs the weighting") {
    const auto corr = build_correlation_structure({{1, 0.7}});
    const RiskModel model = RiskModel::isotropic(2, 0.3, corr);
    const auto att = optimal_att_risk(model);
    CHECK(att.att_risk == doctest::Approx(optimal_wpgd_risk_isotropic(model)).epsilon(1e-12));
    CHECK(att.gap_formula == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("reversed-correlation hand case") {
    const auto corr = build_correlation_structure({{1, 0.0}, {1, 0.8}});
    const auto att = optimal_att_risk(RiskModel::isotropic(1, 0.0, corr));
    CHECK(att.att_risk == doctest::Approx(1.0 - 0.64 / 6.0).epsilon(1e-10));
    CHECK(att.gap_formula == doctest::Approx(0.64 / 3.0 - 0.64 / 6.0).epsilon(1e-10));
    CHECK(att.gap_direct == doctest::Approx(att.gap_formula).epsilon(1e-10));
  }
  SUBCASE("no correlation leaves the context useless") {
    const auto corr = build_correlation_structure({{2, 0.0}, {2, 0.0}});
    const RiskModel model = RiskModel::isotropic(3, 0.4, corr);
    CHECK(optimal_att_risk(model).att_risk == doctest::Approx(3.16));
    CHECK(optimal_wpgd_risk_isotropic(model) == doctest::Approx(3.16));
  }
  SUBCASE("requires identity covariance") {
    const auto corr = build_correlation_structure({{1, 0.5}});
    RiskModel model = RiskModel::general(2.0 * MatrixXd::Identity(2, 2), 0.0, corr);
    CHECK_THROWS(optimal_att_risk(model));
  }
}

TEST_CASE("monotone box projection") {
  VectorXd v(2);
  v << 0.5, 0.3;
  CHECK(project_monotone_box(v).isApprox(Eigen::Vector2d(0.4, 0.4)));
  VectorXd w(3);
  w << -0.2, 0.5, 1.4;
  CHECK(project_monotone_box(w).isApprox(Eigen::Vector3d(0.0, 0.5, 1.0)));
  VectorXd z(4);
  z << 0.9, 0.1, 0.5, 0.2;
  const VectorXd pz = project_monotone_box(z);
  for (int i = 0; i + 1 < 4; ++i) CHECK(pz(i) <= pz(i + 1) + 1e-15);
}

TEST_CASE("constrained optimum over the monotone box") {
  SUBCASE("favorable ordering matches the unconstrained optimum") {
    const auto corr = build_correlation_structure({{1, 0.0}, {1, 0.8}});
    const RiskModel model = RiskModel::isotropic(1, 0.0, corr);
    const auto cons = constrained_optimum(model);
    CHECK(cons.risk == doctest::Approx(1.0 - 0.64 / 3.0).epsilon(1e-9));
  }
  SUBCASE("reversed ordering collapses to uniform weights") {
    const auto corr = build_correlation_structure({{1, 0.8}, {1, 0.0}});
    const RiskModel model = RiskModel::isotropic(1, 0.0, corr);
    const auto cons = constrained_optimum(model);
    CHECK(cons.risk == doctest::Approx(1.0 - 0.64 / 6.0).epsilon(1e-9));
    CHECK(cons.segment_weights(0) == doctest::Approx(cons.segment_weights(1)).epsilon(1e-6));
  }
  SUBCASE("single segment equals the unconstrained optimum") {
    const auto corr = build_correlation_structure({{4, 0.6}});
    const RiskModel model = RiskModel::isotropic(3, 0.2, corr);
    const auto cons = constrained_optimum(model);
    CHECK(cons.risk == doctest::Approx(optimal_wpgd_risk_isotropic(model)).epsilon(1e-9));
  }
}

TEST_CASE("global optimality against Adam restarts") {
  // 50 random restarts on tiny instances never beat the fixed-point solution,
  // and the best restart reproduces it.
  RngStream rng(41, 0);
  for (int inst = 0; inst < 3; ++inst) {
    const int d = 1 + inst % 2;
    const auto corr = build_correlation_structure({{1, 0.3}, {2, 0.6}});
    const RiskModel model = RiskModel::isotropic(d, 0.1 * inst, corr);
    const double optimum = optimal_wpgd(model).risk;
    const int n = model.n();

    double best = 1e300;
    for (int restart = 0; restart < 50; ++restart) {
      VectorXd theta(d * d + n);
      rng.fill_normal(theta);
      VectorXd m = VectorXd::Zero(theta.size()), v = VectorXd::Zero(theta.size());
      for (int it = 1; it <= 4000; ++it) {
        const Eigen::Map<const MatrixXd> P(theta.data(), d, d);
        const Eigen::Map<const VectorXd> w(theta.data() + d * d, n);
        const auto [gP, gw] = risk_gradient(P, w, model);
        VectorXd grad(theta.size());
        grad.head(d * d) = Eigen::Map<const VectorXd>(gP.data(), d * d);
        grad.tail(n) = gw;
        m = 0.9 * m + 0.1 * grad;
        v = 0.999 * v + 0.001 * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(0.9, it), c2 = 1.0 - std::pow(0.999, it);
        theta.array() -= 0.02 * (m.array() / c1) / ((v.array() / c2).sqrt() + 1e-8);
      }
      const Eigen::Map<const MatrixXd> P(theta.data(), d, d);
      const Eigen::Map<const VectorXd> w(theta.data() + d * d, n);
      best = std::min(best, closed_form_risk(P, w, model));
    }
    CHECK(best >= optimum - 1e-6);
    CHECK(std::abs(best - optimum) / optimum < 1e-4);
  }
}

TEST_CASE("vector gating realizer") {
  SUBCASE("non-monotone weights are realized exactly") {
    const auto real = realize_vector_gating({0.8, 0.2}, {2, 3}, 3, 4);
    const MatrixXd omega =
        induced_weighting_with_head(real.gates, real.u, real.head, real.data_positions, 3);
    for (int i = 0; i < 2; ++i) CHECK(omega.row(i).isApproxToConstant(0.8, 1e-14));
    for (int i = 2; i < 5; ++i) CHECK(omega.row(i).isApproxToConstant(0.2, 1e-14));
  }
  SUBCASE("monotone weights") {
    const auto real = realize_vector_gating({0.2, 0.8}, {1, 1}, 2, 2);
    const MatrixXd omega =
        induced_weighting_with_head(real.gates, real.u, real.head, real.data_positions, 2);
    CHECK(omega(0, 0) == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(omega(1, 0) == doctest::Approx(0.8).epsilon(1e-14));
  }
  SUBCASE("needs K <= p") {
    CHECK_THROWS(realize_vector_gating({0.1, 0.2, 0.3}, {1, 1, 1}, 2, 2));
  }
}
