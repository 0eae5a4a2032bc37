#include "glalab/multitask_data.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace glalab {

namespace {

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& A, double floor_tol) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
  Eigen::VectorXd vals = es.eigenvalues();
  if (vals.minCoeff() < -floor_tol) throw std::invalid_argument("matrix is not PSD");
  for (int i = 0; i < vals.size(); ++i) vals(i) = std::sqrt(std::max(vals(i), 0.0));
  return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

CorrelationStructure build_correlation_structure(
    const std::vector<Segment>& segments, const std::optional<Eigen::MatrixXd>& cross) {
  const int K = static_cast<int>(segments.size());
  if (K == 0) throw std::invalid_argument("need at least one segment");
  int n = 0;
  for (const auto& seg : segments) {
    if (seg.length < 0) throw std::invalid_argument("segment length must be >= 0");
    if (std::abs(seg.query_corr) > 1.0) throw std::invalid_argument("|r_k| must be <= 1");
    n += seg.length;
  }

  CorrelationStructure out;
  out.segments = segments;
  out.cross = cross.value_or(Eigen::MatrixXd::Identity(K, K));
  if (out.cross.rows() != K || out.cross.cols() != K)
    throw std::invalid_argument("cross must be K x K");
  if (!out.cross.isApprox(out.cross.transpose(), 1e-12))
    throw std::invalid_argument("cross must be symmetric");
  for (int k = 0; k < K; ++k)
    if (std::abs(out.cross(k, k) - 1.0) > 1e-12)
      throw std::invalid_argument("cross must have unit diagonal");
  out.orthogonal_cross = out.cross.isIdentity(1e-12);

  // Joint correlation of (beta_1 .. beta_K, beta_query); its PSD-ness is what
  // makes the ensemble samplable.
  Eigen::MatrixXd joint(K + 1, K + 1);
  joint.topLeftCorner(K, K) = out.cross;
  for (int k = 0; k < K; ++k) {
    joint(k, K) = segments[k].query_corr;
    joint(K, k) = segments[k].query_corr;
  }
  joint(K, K) = 1.0;
  out.joint_sqrt = symmetric_sqrt(joint, 1e-10);  // throws when not PSD

  out.R.resize(n, n);
  out.r.resize(n);
  int row = 0;
  for (int k = 0; k < K; ++k) {
    int col = 0;
    for (int l = 0; l < K; ++l) {
      const double v = (k == l) ? 1.0 : out.cross(k, l);
      out.R.block(row, col, segments[k].length, segments[l].length).setConstant(v);
      col += segments[l].length;
    }
    out.r.segment(row, segments[k].length).setConstant(segments[k].query_corr);
    row += segments[k].length;
  }
  return out;
}

TaskEnsemble sample_task_ensemble(const CorrelationStructure& corr, int d, RngStream& rng) {
  const int K = corr.num_segments();
  TaskEnsemble out;
  out.d = d;

  Eigen::MatrixXd tasks(K, d);  // row k = beta_k
  if (corr.orthogonal_cross) {
    rng.fill_normal(tasks);
    double rss = 0.0;
    out.beta = Eigen::VectorXd::Zero(d);
    for (int k = 0; k < K; ++k) {
      const double rk = corr.segments[k].query_corr;
      out.beta += rk * tasks.row(k).transpose();
      rss += rk * rk;
    }
    const double resid = std::sqrt(std::max(1.0 - rss, 0.0));
    if (resid > 0.0) out.beta += resid * rng.normal_vector(d);
  } else {
    Eigen::MatrixXd iid(K + 1, d);
    rng.fill_normal(iid);
    Eigen::MatrixXd mixed = corr.joint_sqrt * iid;  // rows jointly correlated, columns iid
    tasks = mixed.topRows(K);
    out.beta = mixed.row(K).transpose();
  }

  out.B.resize(corr.n(), d);
  int row = 0;
  for (int k = 0; k < K; ++k) {
    for (int i = 0; i < corr.segments[k].length; ++i) out.B.row(row++) = tasks.row(k);
  }
  return out;
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> empirical_correlation(
    const std::vector<TaskEnsemble>& samples) {
  if (samples.empty()) throw std::invalid_argument("no samples");
  const int n = static_cast<int>(samples.front().B.rows());
  const int d = samples.front().d;
  Eigen::MatrixXd Rhat = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd rhat = Eigen::VectorXd::Zero(n);
  for (const auto& s : samples) {
    if (s.B.rows() != n || s.d != d) throw std::invalid_argument("shape mismatch");
    Rhat.noalias() += s.B * s.B.transpose();
    rhat.noalias() += s.B * s.beta;
  }
  const double scale = 1.0 / (static_cast<double>(samples.size()) * d);
  return {Rhat * scale, rhat * scale};
}

FeatureCovariance FeatureCovariance::identity(int d) {
  FeatureCovariance cov;
  cov.Sigma = Eigen::MatrixXd::Identity(d, d);
  cov.sqrt = cov.Sigma;
  cov.is_identity = true;
  return cov;
}

FeatureCovariance FeatureCovariance::diagonal(const Eigen::VectorXd& spectrum) {
  if (spectrum.minCoeff() <= 0.0) throw std::invalid_argument("Sigma must be SPD");
  FeatureCovariance cov;
  cov.Sigma = spectrum.asDiagonal();
  cov.sqrt = spectrum.cwiseSqrt().asDiagonal();
  cov.is_identity = spectrum.isOnes(1e-15);
  return cov;
}

FeatureCovariance FeatureCovariance::general(const Eigen::MatrixXd& Sigma) {
  if (!Sigma.isApprox(Sigma.transpose(), 1e-12))
    throw std::invalid_argument("Sigma must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Sigma);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
  if (es.eigenvalues().minCoeff() <= 0.0) throw std::invalid_argument("Sigma must be SPD");
  FeatureCovariance cov;
  cov.Sigma = Sigma;
  cov.sqrt = es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() *
             es.eigenvectors().transpose();
  cov.is_identity = Sigma.isIdentity(1e-15);
  return cov;
}

Eigen::MatrixXd sample_contextual_vectors(int K, int p, RngStream& rng) {
  return rng.normal_matrix(K + 1, p);
}

MultiTaskPrompt sample_multitask_prompt(const TaskEnsemble& ensemble,
                                        const CorrelationStructure& corr,
                                        const FeatureCovariance& cov, double sigma,
                                        bool with_delimiters,
                                        const Eigen::MatrixXd& contextual, RngStream& rng) {
  if (sigma < 0.0) throw std::invalid_argument("sigma must be >= 0");
  const int d = ensemble.d;
  const int n = static_cast<int>(ensemble.B.rows());
  const int K = corr.num_segments();
  const int p = static_cast<int>(contextual.cols());
  if (with_delimiters && contextual.rows() != K + 1)
    throw std::invalid_argument("need K+1 contextual vectors");
  if (with_delimiters && p <= 0) throw std::invalid_argument("delimiters require p > 0");
  if (cov.d() != d) throw std::invalid_argument("Sigma dimension mismatch");

  MultiTaskPrompt out;
  out.d = d;
  out.p = p;
  out.with_delimiters = with_delimiters;

  out.X.resize(n, d);
  Eigen::MatrixXd raw(n, d);
  rng.fill_normal(raw);
  if (cov.is_identity)
    out.X = raw;
  else
    out.X.noalias() = raw * cov.sqrt;  // rows x_i' = raw_i' Sigma^(1/2)

  out.y.resize(n);
  for (int i = 0; i < n; ++i)
    out.y(i) = out.X.row(i).dot(ensemble.B.row(i)) + sigma * (sigma > 0.0 ? rng.normal() : 0.0);

  Eigen::VectorXd xq = rng.normal_vector(d);
  out.x_query = cov.is_identity ? xq : (cov.sqrt * xq).eval();
  out.y_query = out.x_query.dot(ensemble.beta) + sigma * (sigma > 0.0 ? rng.normal() : 0.0);

  const int width = d + 1 + p;
  const int rows = n + (with_delimiters ? K : 0) + 1;
  out.Z = Eigen::MatrixXd::Zero(rows, width);
  int row = 0, data = 0;
  for (int k = 0; k < K; ++k) {
    for (int i = 0; i < corr.segments[k].length; ++i) {
      out.Z.row(row).head(d) = out.X.row(data);
      out.Z(row, d) = out.y(data);
      if (p > 0) out.Z.row(row).tail(p) = contextual.row(0);
      out.data_positions.push_back(row);
      ++row;
      ++data;
    }
    if (with_delimiters) {
      out.Z.row(row).tail(p) = contextual.row(k + 1);  // data slots stay exactly zero
      out.delimiter_positions.push_back(row);
      ++row;
    }
  }
  out.Z.row(row).head(d) = out.x_query;  // query label slot is 0
  if (p > 0) out.Z.row(row).tail(p) = contextual.row(0);
  return out;
}

void dump_prompt_csv(const MultiTaskPrompt& prompt, std::ostream& os) {
  os << "role";
  for (int j = 0; j < prompt.d; ++j) os << ",x" << j;
  os << ",label";
  for (int j = 0; j < prompt.p; ++j) os << ",c" << j;
  os << "\n";
  for (int i = 0; i < prompt.Z.rows(); ++i) {
    const bool is_delim = std::find(prompt.delimiter_positions.begin(),
                                    prompt.delimiter_positions.end(),
                                    i) != prompt.delimiter_positions.end();
    const bool is_query = (i == prompt.Z.rows() - 1);
    os << (is_query ? "query" : (is_delim ? "delimiter" : "data"));
    char buf[32];
    for (int j = 0; j < prompt.Z.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", prompt.Z(i, j));
      os << ',' << buf;
    }
    os << "\n";
  }
}

}  // namespace glalab
