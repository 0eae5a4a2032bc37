#include <doctest.h>

#include <sstream>

#include "glalab/multitask_data.hpp"

using namespace glalab;

TEST_CASE("correlation structure from segments") {
  SUBCASE("shared task") {
    const auto corr = build_correlation_structure({{2, 1.0}});
    CHECK(corr.n() == 2);
    CHECK(corr.R.isApprox(Eigen::MatrixXd::Ones(2, 2)));
    CHECK(corr.r.isApprox(Eigen::VectorXd::Ones(2)));
  }
  SUBCASE("orthogonal segments") {
    const auto corr = build_correlation_structure({{1, 0.0}, {1, 0.8}});
    CHECK(corr.R.isApprox(Eigen::MatrixXd::Identity(2, 2)));
    CHECK(corr.r(0) == 0.0);
    CHECK(corr.r(1) == 0.8);
  }
  SUBCASE("block expansion with general cross") {
    Eigen::MatrixXd cross(2, 2);
    cross << 1.0, 0.3, 0.3, 1.0;
    const auto corr = build_correlation_structure({{2, 0.2}, {1, 0.4}}, cross);
    CHECK(corr.R(0, 1) == 1.0);   // within segment
    CHECK(corr.R(0, 2) == 0.3);   // across segments
    CHECK(corr.r(2) == 0.4);
  }
  SUBCASE("rejects unsatisfiable joint correlation") {
    CHECK_THROWS(build_correlation_structure({{1, 0.9}, {1, 0.9}}));
    CHECK_THROWS(build_correlation_structure({{1, 1.2}}));
    CHECK_THROWS(build_correlation_structure({{-1, 0.2}}));
    Eigen::MatrixXd bad_diag(1, 1);
    bad_diag << 0.5;
    CHECK_THROWS(build_correlation_structure({{1, 0.2}}, bad_diag));
  }
}

TEST_CASE("task ensembles") {
  RngStream rng(11, 0);
  SUBCASE("perfect correlation copies the segment task") {
    const auto corr = build_correlation_structure({{3, 1.0}});
    const auto tasks = sample_task_ensemble(corr, 4, rng);
    CHECK(tasks.beta == tasks.B.row(0).transpose());
    CHECK(tasks.B.row(0) == tasks.B.row(2));
  }
  SUBCASE("query equals the fully correlated segment") {
    const auto corr = build_correlation_structure({{1, 0.0}, {1, 1.0}});
    const auto tasks = sample_task_ensemble(corr, 4, rng);
    CHECK(tasks.beta == tasks.B.row(1).transpose());
  }
  SUBCASE("empirical moments converge") {
    const auto corr = build_correlation_structure({{1, 0.5}, {1, 0.5}});
    const int d = 8, draws = 20000;
    std::vector<TaskEnsemble> samples;
    samples.reserve(draws);
    for (int i = 0; i < draws; ++i) samples.push_back(sample_task_ensemble(corr, d, rng));
    const auto [Rhat, rhat] = empirical_correlation(samples);
    const double bound = 5.0 / std::sqrt(static_cast<double>(draws));
    CHECK((Rhat - corr.R).cwiseAbs().maxCoeff() < bound);
    CHECK((rhat - corr.r).cwiseAbs().maxCoeff() < bound);
  }
  SUBCASE("residual independence") {
    // beta_i - R_ij beta_j must be uncorrelated with beta_j.
    const auto corr = build_correlation_structure({{1, 0.6}, {1, 0.5}});
    const int d = 6, draws = 20000;
    double acc = 0.0;
    for (int i = 0; i < draws; ++i) {
      const auto tasks = sample_task_ensemble(corr, d, rng);
      const Eigen::VectorXd resid =
          tasks.beta - corr.r(0) * tasks.B.row(0).transpose();
      acc += resid.dot(tasks.B.row(0)) / d;
    }
    CHECK(std::abs(acc / draws) < 5.0 / std::sqrt(static_cast<double>(draws)));
  }
  SUBCASE("deterministic empirical correlation") {
    TaskEnsemble e;
    e.d = 3;
    e.beta = Eigen::VectorXd::LinSpaced(3, 1.0, 3.0);
    e.B = e.beta.transpose().replicate(2, 1);
    const auto [Rhat, rhat] = empirical_correlation({e});
    CHECK(Rhat.isApprox(e.B * e.B.transpose() / 3.0));
    CHECK(rhat.isApprox(e.B * e.beta / 3.0));
  }
  SUBCASE("general cross matches joint second moments") {
    Eigen::MatrixXd cross(2, 2);
    cross << 1.0, 0.5, 0.5, 1.0;
    const auto corr = build_correlation_structure({{1, 0.3}, {1, 0.3}}, cross);
    const int d = 8, draws = 20000;
    std::vector<TaskEnsemble> samples;
    for (int i = 0; i < draws; ++i) samples.push_back(sample_task_ensemble(corr, d, rng));
    const auto [Rhat, rhat] = empirical_correlation(samples);
    const double bound = 5.0 / std::sqrt(static_cast<double>(draws));
    CHECK((Rhat - corr.R).cwiseAbs().maxCoeff() < bound);
    CHECK((rhat - corr.r).cwiseAbs().maxCoeff() < bound);
  }
}

TEST_CASE("feature covariance validation") {
  CHECK_THROWS(FeatureCovariance::diagonal(Eigen::Vector2d(1.0, 0.0)));
  Eigen::MatrixXd not_spd(2, 2);
  not_spd << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS(FeatureCovariance::general(not_spd));
  const auto cov = FeatureCovariance::diagonal(Eigen::Vector2d(4.0, 1.0));
  CHECK(cov.sqrt(0, 0) == 2.0);
}

TEST_CASE("multitask prompt layout") {
  RngStream rng(3, 0);
  const auto corr = build_correlation_structure({{3, 0.2}, {3, 0.8}});
  const auto tasks = sample_task_ensemble(corr, 4, rng);
  const auto cov = FeatureCovariance::identity(4);
  const int p = 5;
  const auto ctx = sample_contextual_vectors(2, p, rng);

  SUBCASE("with delimiters") {
    const auto prompt = sample_multitask_prompt(tasks, corr, cov, 0.0, true, ctx, rng);
    CHECK(prompt.Z.rows() == 6 + 2 + 1);
    CHECK(prompt.Z.cols() == 4 + 1 + p);
    REQUIRE(prompt.delimiter_positions.size() == 2);
    for (int pos : prompt.delimiter_positions)
      CHECK(prompt.Z.row(pos).head(5).cwiseAbs().maxCoeff() == 0.0);  // exact zeros
    CHECK(prompt.Z(prompt.Z.rows() - 1, 4) == 0.0);  // query label slot
    for (int pos : prompt.data_positions)
      CHECK(prompt.Z.row(pos).tail(p) == ctx.row(0));
    // noiseless labels match X beta exactly
    for (int i = 0; i < 6; ++i)
      CHECK(prompt.y(i) == doctest::Approx(prompt.X.row(i).dot(tasks.B.row(i))).epsilon(1e-12));
  }
  SUBCASE("plain prompt") {
    const auto prompt =
        sample_multitask_prompt(tasks, corr, cov, 0.3, false, Eigen::MatrixXd(0, 0), rng);
    CHECK(prompt.Z.rows() == 7);
    CHECK(prompt.Z.cols() == 5);
    CHECK(prompt.delimiter_positions.empty());
  }
  SUBCASE("csv dump") {
    const auto prompt = sample_multitask_prompt(tasks, corr, cov, 0.0, true, ctx, rng);
    std::ostringstream os;
    dump_prompt_csv(prompt, os);
    const std::string text = os.str();
    CHECK(text.find("role,x0,x1,x2,x3,label,c0,c1,c2,c3,c4") == 0);
    CHECK(text.find("delimiter") != std::string::npos);
    CHECK(text.find("query") != std::string::npos);
  }
  SUBCASE("rejects negative noise") {
    CHECK_THROWS(sample_multitask_prompt(tasks, corr, cov, -0.1, true, ctx, rng));
  }
}
