#include "glalab/verify.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "glalab/gla_engine.hpp"
#include "glalab/landscape.hpp"
#include "glalab/multitask_data.hpp"
#include "glalab/wpgd_oracle.hpp"

namespace glalab {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd random_gate(int m, RngStream& rng, double lo = 0.05, double hi = 1.0) {
  MatrixXd G(m, m);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i) G(i, j) = rng.uniform(lo, hi);
  return G;
}

MatrixXd plain_prompt(const MatrixXd& X, const VectorXd& y, const VectorXd& x) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  MatrixXd Z = MatrixXd::Zero(n + 1, d + 1);
  Z.topLeftCorner(n, d) = X;
  Z.col(d).head(n) = y;
  Z.row(n).head(d) = x.transpose();
  return Z;
}

CorrelationStructure random_structure(RngStream& rng, int max_K = 4, int max_len = 5,
                                      bool allow_negative = false) {
  const int K = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(max_K)));
  std::vector<Segment> segs;
  double rss = 0.0;
  for (int k = 0; k < K; ++k) {
    Segment s;
    s.length = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(max_len)));
    s.query_corr = allow_negative ? rng.uniform(-1.0, 1.0) : rng.uniform(0.0, 1.0);
    segs.push_back(s);
    rss += s.query_corr * s.query_corr;
  }
  if (rss > 0.95) {
    const double scale = std::sqrt(0.95 / rss);
    for (auto& s : segs) s.query_corr *= scale;
  }
  return build_correlation_structure(segs);
}

VerifyCheck check(const std::string& name, double deviation, double tol) {
  return {name, deviation, tol, deviation <= tol};
}

// ---- equivalence -----------------------------------------------------------

VerifyReport verify_equivalence(std::uint64_t seed) {
  VerifyReport report;
  report.suite = "equivalence";
  RngStream root(seed, 0x715c);

  {  // single layer, arbitrary gate matrices, restricted construction
    double worst = 0.0;
    RngStream rng = root.child(0);
    for (int trial = 0; trial < 100; ++trial) {
      const int n = 1 + static_cast<int>(rng.uniform_index(64));
      const int d = 1 + static_cast<int>(rng.uniform_index(16));
      const MatrixXd X = rng.normal_matrix(n, d);
      const VectorXd y = rng.normal_vector(n);
      const VectorXd x = rng.normal_vector(d);
      const MatrixXd P_k = rng.normal_matrix(d, d) / std::sqrt(d);
      const MatrixXd P_q = rng.normal_matrix(d, d) / std::sqrt(d);
      std::vector<MatrixXd> gates;
      for (int i = 0; i <= n; ++i) gates.push_back(random_gate(d + 1, rng));

      AttentionModel model = build_restricted(P_k, P_q);
      model.gating = GatingSpec::explicit_matrices(gates);
      const MatrixXd Z = plain_prompt(X, y, x);
      const double f_gla = gla_predict(Z, model);

      std::vector<VectorXd> rows;
      for (const auto& G : gates) rows.push_back(G.row(d).head(d).transpose());
      std::vector<int> data_pos(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) data_pos[static_cast<size_t>(i)] = i;
      const MatrixXd Omega = induced_weighting(rows, data_pos, d);
      const double f_wpgd = wpgd_predict(x, X, y, P_k, P_q, Omega);
      worst = std::max(worst, std::abs(f_gla - f_wpgd));
    }
    report.checks.push_back(check("single_layer_general_gates", worst, 1e-10));
  }

  {  // scalar gating collapses to sample weights
    double worst = 0.0;
    RngStream rng = root.child(1);
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 1 + static_cast<int>(rng.uniform_index(32));
      const int d = 1 + static_cast<int>(rng.uniform_index(8));
      const MatrixXd X = rng.normal_matrix(n, d);
      const VectorXd y = rng.normal_vector(n);
      const VectorXd x = rng.normal_vector(d);
      const MatrixXd P_k = rng.normal_matrix(d, d) / std::sqrt(d);
      const MatrixXd P_q = rng.normal_matrix(d, d) / std::sqrt(d);
      AttentionModel model = build_restricted(P_k, P_q);
      model.gating = GatingSpec::scalar_linear(rng.normal_vector(d + 1));
      const MatrixXd Z = plain_prompt(X, y, x);
      const double f_gla = gla_predict(Z, model);

      const GlaTrace trace = gla_forward(Z, model);
      std::vector<int> data_pos(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) data_pos[static_cast<size_t>(i)] = i;
      const MatrixXd Omega =
          induced_weighting(value_channel_gate_rows(trace, d), data_pos, d);
      const VectorXd omega = collapse_sample_weights(Omega);
      const double f_wpgd = wpgd_predict(x, X, y, (P_q * P_k.transpose()).eval(), omega);
      worst = std::max(worst, std::abs(f_gla - f_wpgd));
    }
    report.checks.push_back(check("scalar_gating_sample_weights", worst, 1e-10));
  }

  {  // value-vector construction with prediction head
    double worst = 0.0;
    RngStream rng = root.child(2);
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 1 + static_cast<int>(rng.uniform_index(16));
      const int d = 1 + static_cast<int>(rng.uniform_index(6));
      const MatrixXd X = rng.normal_matrix(n, d);
      const VectorXd y = rng.normal_vector(n);
      const VectorXd x = rng.normal_vector(d);
      const MatrixXd P_k = rng.normal_matrix(d, d) / std::sqrt(d);
      const MatrixXd P_q = rng.normal_matrix(d, d) / std::sqrt(d);
      const VectorXd u = rng.normal_vector(d + 1);
      const VectorXd h = rng.normal_vector(d + 1);
      std::vector<MatrixXd> gates;
      for (int i = 0; i <= n; ++i) gates.push_back(random_gate(d + 1, rng));

      AttentionModel model = build_value_vector(P_k, P_q, u);
      model.gating = GatingSpec::explicit_matrices(gates);
      model.head = h;
      const double f_gla = gla_predict(plain_prompt(X, y, x), model);

      std::vector<int> data_pos(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) data_pos[static_cast<size_t>(i)] = i;
      const MatrixXd Omega = induced_weighting_with_head(gates, u, h, data_pos, d);
      const double f_wpgd = wpgd_predict(x, X, y, P_k, P_q, Omega);
      worst = std::max(worst, std::abs(f_gla - f_wpgd));
    }
    report.checks.push_back(check("value_vector_head", worst, 1e-10));
  }

  {  // delimiter prompts: delimiters are transparent to the prediction
    double worst = 0.0;
    RngStream rng = root.child(3);
    for (int trial = 0; trial < 50; ++trial) {
      const int d = 1 + static_cast<int>(rng.uniform_index(5));
      const int p = 2 + static_cast<int>(rng.uniform_index(5));
      CorrelationStructure corr = random_structure(rng, std::min(p, 3));
      const TaskEnsemble tasks = sample_task_ensemble(corr, d, rng);
      const MatrixXd ctx = sample_contextual_vectors(corr.num_segments(), p, rng);
      const FeatureCovariance cov = FeatureCovariance::identity(d);
      const MultiTaskPrompt prompt =
          sample_multitask_prompt(tasks, corr, cov, 0.1, true, ctx, rng);
      const int m = d + 1 + p;
      const MatrixXd P_k = rng.normal_matrix(d, d) / std::sqrt(d);
      const MatrixXd P_q = rng.normal_matrix(d, d) / std::sqrt(d);
      std::vector<MatrixXd> gates;
      for (int i = 0; i < prompt.Z.rows(); ++i) gates.push_back(random_gate(m, rng));

      AttentionModel model = build_delimiter(P_k, P_q, p);
      model.gating = GatingSpec::explicit_matrices(gates);
      const double f_gla = gla_predict(prompt.Z, model);

      std::vector<VectorXd> rows;
      for (const auto& G : gates) rows.push_back(G.row(d).head(d).transpose());
      const MatrixXd Omega = induced_weighting(rows, prompt.data_positions, d);
      const double f_wpgd = wpgd_predict(prompt.x_query, prompt.X, prompt.y, P_k, P_q, Omega);
      worst = std::max(worst, std::abs(f_gla - f_wpgd));
    }
    report.checks.push_back(check("delimiter_prompt", worst, 1e-10));
  }

  {  // all-ones gating equals dense causal linear attention
    double worst = 0.0;
    RngStream rng = root.child(4);
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 1 + static_cast<int>(rng.uniform_index(16));
      const int d = 1 + static_cast<int>(rng.uniform_index(6));
      const MatrixXd Z = rng.normal_matrix(n + 1, d + 1);
      AttentionModel model = build_restricted(rng.normal_matrix(d, d), rng.normal_matrix(d, d));
      const GlaTrace trace = gla_forward(Z, model);
      const MatrixXd dense = causal_linear_attention(Z, model.W_k, model.W_q, model.W_v);
      for (int i = 0; i <= n; ++i)
        worst = std::max(
            worst, (trace.outputs[static_cast<size_t>(i)].transpose() - dense.row(i)).cwiseAbs().maxCoeff());
    }
    report.checks.push_back(check("all_ones_dense_attention", worst, 1e-12));
  }

  {  // multi-layer GLA vs recurrent WPGD oracle (feature-only gating)
    double worst_gated = 0.0, worst_ones = 0.0;
    RngStream rng = root.child(5);
    for (int trial = 0; trial < 20; ++trial) {
      const int n = 2 + static_cast<int>(rng.uniform_index(7));
      const int d = 1 + static_cast<int>(rng.uniform_index(4));
      const int L = 1 + static_cast<int>(rng.uniform_index(4));
      const MatrixXd X = rng.normal_matrix(n, d);
      const VectorXd y = rng.normal_vector(n);
      const VectorXd x = rng.normal_vector(d);
      const MatrixXd Z = plain_prompt(X, y, x);

      std::vector<MatrixXd> gates;
      for (int i = 0; i <= n; ++i) gates.push_back(random_gate(d + 1, rng, 0.3, 1.0));
      std::vector<WpgdLayer> oracle_layers;
      std::vector<AttentionModel> gla_layers;
      for (int l = 0; l < L; ++l) {
        WpgdLayer lay;
        lay.P_k = rng.normal_matrix(d, d) * (0.5 / d);
        lay.P_q = rng.normal_matrix(d, d) * (0.5 / d);
        oracle_layers.push_back(lay);
        AttentionModel model = build_restricted(lay.P_k, (-lay.P_q).eval());
        model.gating = GatingSpec::explicit_matrices(gates);
        gla_layers.push_back(model);
      }

      std::vector<VectorXd> rows;
      for (const auto& G : gates) rows.push_back(G.row(d).head(d).transpose());
      std::vector<int> data_pos(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) data_pos[static_cast<size_t>(i)] = i;
      const MatrixXd Omega = induced_weighting(rows, data_pos, d);
      std::vector<VectorXd> products;
      for (int i = 0; i < n; ++i) products.push_back(Omega.row(i).transpose());

      const auto engine = gla_multilayer_forward(Z, gla_layers);
      const auto oracle = wpgd_multilayer(X, y, x, oracle_layers, products, true);
      for (int l = 0; l < L; ++l)
        worst_gated = std::max(
            worst_gated,
            (engine[static_cast<size_t>(l)] - oracle.readouts[static_cast<size_t>(l)])
                .cwiseAbs()
                .maxCoeff());

      // all-ones gating against the causal PGD corollary
      std::vector<AttentionModel> ones_layers;
      std::vector<MatrixXd> P;
      for (int l = 0; l < L; ++l) {
        AttentionModel model =
            build_restricted(oracle_layers[static_cast<size_t>(l)].P_k,
                             (-oracle_layers[static_cast<size_t>(l)].P_q).eval());
        ones_layers.push_back(model);
        P.push_back(oracle_layers[static_cast<size_t>(l)].P_q *
                    oracle_layers[static_cast<size_t>(l)].P_k.transpose());
      }
      const auto engine_ones = gla_multilayer_forward(Z, ones_layers);
      const auto oracle_ones = causal_pgd_multilayer(X, y, x, P);
      for (int l = 0; l < L; ++l)
        worst_ones = std::max(
            worst_ones,
            (engine_ones[static_cast<size_t>(l)] - oracle_ones.readouts[static_cast<size_t>(l)])
                .cwiseAbs()
                .maxCoeff());
    }
    report.checks.push_back(check("multilayer_gated_vs_oracle", worst_gated, 1e-8));
    report.checks.push_back(check("multilayer_allones_vs_causal_pgd", worst_ones, 1e-10));
  }

  return report;
}

// ---- gradients --------------------------------------------------------------

VerifyReport verify_gradients(std::uint64_t seed) {
  VerifyReport report;
  report.suite = "gradients";
  RngStream rng(seed, 0x9dc1);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 1 + static_cast<int>(rng.uniform_index(4));
    CorrelationStructure corr = random_structure(rng, 3, 3, true);
    MatrixXd A = rng.normal_matrix(d, d);
    MatrixXd Sigma = A * A.transpose() + Eigen::MatrixXd::Identity(d, d) * 0.5;
    RiskModel model = RiskModel::general(Sigma, rng.uniform(0.0, 1.0), corr);
    const MatrixXd P = rng.normal_matrix(d, d);
    const VectorXd w = rng.normal_vector(model.n());

    const auto [gP, gw] = risk_gradient(P, w, model);
    const double h = 1e-5;
    double err = 0.0;
    MatrixXd Pp = P;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        Pp(i, j) = P(i, j) + h;
        const double up = closed_form_risk(Pp, w, model);
        Pp(i, j) = P(i, j) - h;
        const double dn = closed_form_risk(Pp, w, model);
        Pp(i, j) = P(i, j);
        err = std::max(err, std::abs((up - dn) / (2 * h) - gP(i, j)));
      }
    VectorXd wp = w;
    for (int i = 0; i < model.n(); ++i) {
      wp(i) = w(i) + h;
      const double up = closed_form_risk(P, wp, model);
      wp(i) = w(i) - h;
      const double dn = closed_form_risk(P, wp, model);
      wp(i) = w(i);
      err = std::max(err, std::abs((up - dn) / (2 * h) - gw(i)));
    }
    const double scale = std::max(1.0, std::max(gP.cwiseAbs().maxCoeff(), gw.cwiseAbs().maxCoeff()));
    worst = std::max(worst, err / scale);
  }
  report.checks.push_back(check("closed_form_gradient_fd", worst, 1e-6));
  return report;
}

// ---- landscape --------------------------------------------------------------

VerifyReport verify_landscape(std::uint64_t seed) {
  VerifyReport report;
  report.suite = "landscape";
  RngStream root(seed, 0x3a7f);

  {  // hand-solved one-dimensional instance
    CorrelationStructure corr = build_correlation_structure({{1, 0.6}});
    RiskModel model = RiskModel::isotropic(1, 0.0, corr);
    const LandscapeSolution sol = optimal_wpgd(model);
    double dev = std::abs(sol.gamma - 2.0);
    dev = std::max(dev, std::abs(sol.risk - 0.88));
    dev = std::max(dev, std::abs(sol.rescale - 1.5));
    dev = std::max(dev, std::abs(sol.omega(0) - 0.4));
    report.checks.push_back(check("scalar_instance_closed_form", dev, 1e-10));
  }

  {  // multistart agreement and residuals under the spectral-gap condition
    double spread = 0.0, resid = 0.0, h2dev = 0.0, fastdev = 0.0;
    RngStream rng = root.child(1);
    for (int trial = 0; trial < 50; ++trial) {
      const int d = 2 + static_cast<int>(rng.uniform_index(5));
      CorrelationStructure corr = random_structure(rng);
      VectorXd spectrum(d);
      for (int i = 0; i < d; ++i) spectrum(i) = rng.uniform(0.8, 1.2);
      RiskModel model = RiskModel::general(MatrixXd(spectrum.asDiagonal()),
                                           rng.uniform(0.0, 0.5), corr);
      const Spectrum spec = spectral_setup(model);
      if (!spec.gap_condition) continue;
      double lo = 1e300, hi = -1e300;
      for (double g0 : {1.0, 2.0, 10.0, 100.0}) {
        const FixedPointResult fp = solve_fixed_point(spec, 1e-12, 10000, g0);
        lo = std::min(lo, fp.gamma);
        hi = std::max(hi, fp.gamma);
        resid = std::max(resid, fp.residual);
      }
      spread = std::max(spread, hi - lo);

      RiskModel iso = RiskModel::isotropic(d, model.sigma, corr);
      const Spectrum iso_spec = spectral_setup(iso);
      const FixedPointResult iso_fp = solve_fixed_point(iso_spec);
      h2dev = std::max(h2dev, std::abs(transfer_h2(iso_fp.gamma, iso_spec) -
                                       1.0 / (d + iso.sigma * iso.sigma + 1.0)));
      fastdev = std::max(fastdev, std::abs(optimal_wpgd(iso).risk -
                                           optimal_wpgd_risk_isotropic(iso)));
    }
    report.checks.push_back(check("fixed_point_multistart_spread", spread, 1e-9));
    report.checks.push_back(check("fixed_point_residual", resid, 1e-12));
    report.checks.push_back(check("isotropic_h2_closed_form", h2dev, 1e-12));
    report.checks.push_back(check("isotropic_fast_path", fastdev, 1e-10));
  }

  {  // risk ordering and the attention gap identity
    double order_dev = 0.0, gap_dev = 0.0;
    RngStream rng = root.child(2);
    for (int trial = 0; trial < 100; ++trial) {
      const int d = 1 + static_cast<int>(rng.uniform_index(5));
      CorrelationStructure corr = random_structure(rng, 4, 4, true);
      RiskModel model = RiskModel::isotropic(d, rng.uniform(0.0, 1.0), corr);
      const double wpgd = optimal_wpgd_risk_isotropic(model);
      const ConstrainedResult cons = constrained_optimum(model);
      const AttRiskResult att = optimal_att_risk(model);
      order_dev = std::max(order_dev, std::max(0.0, wpgd - cons.risk));
      order_dev = std::max(order_dev, std::max(0.0, cons.risk - att.att_risk));
      gap_dev = std::max(gap_dev, std::abs(att.gap_formula - att.gap_direct));
    }
    report.checks.push_back(check("risk_ordering", order_dev, 1e-9));
    report.checks.push_back(check("att_gap_identity", gap_dev, 1e-10));
  }

  {  // vector-gating realizer reproduces arbitrary segment weights
    double worst = 0.0;
    RngStream rng = root.child(3);
    for (int trial = 0; trial < 100; ++trial) {
      const int K = 1 + static_cast<int>(rng.uniform_index(5));
      const int p = K + static_cast<int>(rng.uniform_index(3));
      const int d = 1 + static_cast<int>(rng.uniform_index(5));
      std::vector<int> lens;
      std::vector<double> targets;
      for (int k = 0; k < K; ++k) {
        lens.push_back(1 + static_cast<int>(rng.uniform_index(4)));
        targets.push_back(rng.uniform());
      }
      const VectorGatingRealization real = realize_vector_gating(targets, lens, d, p);
      const MatrixXd omega = induced_weighting_with_head(real.gates, real.u, real.head,
                                                         real.data_positions, d);
      int row = 0;
      for (int k = 0; k < K; ++k)
        for (int i = 0; i < lens[static_cast<size_t>(k)]; ++i, ++row)
          worst = std::max(
              worst,
              (omega.row(row).array() - targets[static_cast<size_t>(k)]).abs().maxCoeff());
    }
    report.checks.push_back(check("vector_gating_realizer", worst, 1e-12));
  }

  return report;
}

// ---- moments ----------------------------------------------------------------

VerifyReport verify_moments(std::uint64_t seed) {
  VerifyReport report;
  report.suite = "moments";
  RngStream root(seed, 0xb0b5);

  {  // Gaussian quartic identity E[(u'Wu)(u'Vu)] = tr W tr V + 2 tr(WV)
    RngStream rng = root.child(0);
    const int d = 4;
    MatrixXd W = rng.normal_matrix(d, d);
    W = ((W + W.transpose()) / 2).eval();
    MatrixXd V = rng.normal_matrix(d, d);
    V = ((V + V.transpose()) / 2).eval();
    const double exact = W.trace() * V.trace() + 2.0 * (W * V).trace();
    const int samples = 1000000;
    double sum = 0.0, sumsq = 0.0;
    VectorXd u(d);
    for (int s = 0; s < samples; ++s) {
      rng.fill_normal(u);
      const double val = u.dot(W * u) * u.dot(V * u);
      sum += val;
      sumsq += val * val;
    }
    const double mean = sum / samples;
    const double se = std::sqrt((sumsq / samples - mean * mean) / samples);
    report.checks.push_back(check("quartic_moment_identity", std::abs(mean - exact) / se, 3.0));
  }

  {  // label second moment E[y^2] = tr(Sigma) + sigma^2
    RngStream rng = root.child(1);
    const int d = 3;
    const double sigma = 0.7;
    VectorXd spectrum(d);
    spectrum << 2.0, 1.0, 0.5;
    const FeatureCovariance cov = FeatureCovariance::diagonal(spectrum);
    CorrelationStructure corr = build_correlation_structure({{2, 0.5}, {2, 0.5}});
    const double exact = spectrum.sum() + sigma * sigma;
    const int samples = 200000;
    double sum = 0.0, sumsq = 0.0;
    for (int s = 0; s < samples; ++s) {
      const TaskEnsemble tasks = sample_task_ensemble(corr, d, rng);
      const MultiTaskPrompt prompt = sample_multitask_prompt(
          tasks, corr, cov, sigma, false, Eigen::MatrixXd(0, 0), rng);
      const double val = prompt.y(0) * prompt.y(0);
      sum += val;
      sumsq += val * val;
    }
    const double mean = sum / samples;
    const double se = std::sqrt((sumsq / samples - mean * mean) / samples);
    report.checks.push_back(check("label_second_moment", std::abs(mean - exact) / se, 3.0));
  }

  {  // empirical task correlations converge to (R, r)
    RngStream rng = root.child(2);
    const int d = 8;
    CorrelationStructure corr = build_correlation_structure({{1, 0.2}, {1, 0.8}});
    const int samples = 100000;
    std::vector<TaskEnsemble> draws;
    draws.reserve(samples);
    for (int s = 0; s < samples; ++s) draws.push_back(sample_task_ensemble(corr, d, rng));
    const auto [Rhat, rhat] = empirical_correlation(draws);
    const double bound = 5.0 / std::sqrt(static_cast<double>(samples));
    const double dev = std::max((Rhat - corr.R).cwiseAbs().maxCoeff(),
                                (rhat - corr.r).cwiseAbs().maxCoeff());
    report.checks.push_back(check("empirical_correlation", dev, bound));
  }

  return report;
}

}  // namespace

std::vector<std::string> verify_suites() {
  return {"equivalence", "landscape", "gradients", "moments"};
}

VerifyReport run_verify(const std::string& suite, std::uint64_t seed) {
  if (suite == "equivalence") return verify_equivalence(seed);
  if (suite == "landscape") return verify_landscape(seed);
  if (suite == "gradients") return verify_gradients(seed);
  if (suite == "moments") return verify_moments(seed);
  throw std::invalid_argument("unknown suite: " + suite);
}

}  // namespace glalab
