#include "glalab/landscape.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace glalab {

namespace {

// Eigen returns ascending eigenvalues; flip to descending.
void symmetric_eig_descending(const Eigen::MatrixXd& A, Eigen::VectorXd& vals,
                              Eigen::MatrixXd& vecs) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
  vals = es.eigenvalues().reverse();
  vecs = es.eigenvectors().rowwise().reverse();
}

// tr(Sigma P' Sigma P) = <P Sigma, Sigma P> and
// tr(Sigma^2 P' Sigma P) = <P Sigma^2, Sigma P>.
double tr_sps_p(const Eigen::MatrixXd& S, const Eigen::MatrixXd& P) {
  return (P * S).cwiseProduct(S * P).sum();
}
double tr_s2ps_p(const Eigen::MatrixXd& S, const Eigen::MatrixXd& P) {
  return (P * S * S).cwiseProduct(S * P).sum();
}

Eigen::VectorXd expand_segments(const Eigen::VectorXd& t, const std::vector<Segment>& segments) {
  int n = 0;
  for (const auto& seg : segments) n += seg.length;
  Eigen::VectorXd omega(n);
  int row = 0;
  for (size_t k = 0; k < segments.size(); ++k) {
    omega.segment(row, segments[k].length).setConstant(t(static_cast<int>(k)));
    row += segments[k].length;
  }
  return omega;
}

}  // namespace

RiskModel RiskModel::isotropic(int d, double sigma, const CorrelationStructure& corr) {
  RiskModel model;
  model.Sigma = Eigen::MatrixXd::Identity(d, d);
  model.corr = corr;
  model.sigma = sigma;
  model.d = d;
  return model;
}

RiskModel RiskModel::general(const Eigen::MatrixXd& Sigma, double sigma,
                             const CorrelationStructure& corr) {
  RiskModel model;
  model.Sigma = Sigma;
  model.corr = corr;
  model.sigma = sigma;
  model.d = static_cast<int>(Sigma.rows());
  return model;
}

bool RiskModel::sigma_is_identity(double tol) const { return Sigma.isIdentity(tol); }

double closed_form_risk(const Eigen::MatrixXd& P, const Eigen::VectorXd& omega,
                        const RiskModel& model) {
  const double M = model.M();
  if (omega.size() == 0) return M;
  if (P.rows() != model.d || P.cols() != model.d || omega.size() != model.n())
    throw std::invalid_argument("shape mismatch");
  const Eigen::MatrixXd& S = model.Sigma;
  const double tr_S2P = (S * S * P).trace();
  const double tr_SPtSP = tr_sps_p(S, P);
  const double tr_S2PtSP = tr_s2ps_p(S, P);
  const double wn2 = omega.squaredNorm();
  const double wRw = omega.dot(model.corr.R * omega);
  return M - 2.0 * tr_S2P * omega.dot(model.corr.r) + M * wn2 * tr_SPtSP +
         (wn2 + wRw) * tr_S2PtSP;
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> risk_gradient(const Eigen::MatrixXd& P,
                                                          const Eigen::VectorXd& omega,
                                                          const RiskModel& model) {
  const Eigen::MatrixXd& S = model.Sigma;
  const double M = model.M();
  const Eigen::MatrixXd S2 = S * S;
  const Eigen::MatrixXd SP = S * P;
  const double tr_S2P = (S2 * P).trace();
  const double tr_SPtSP = tr_sps_p(S, P);
  const double tr_S2PtSP = tr_s2ps_p(S, P);
  const double wn2 = omega.squaredNorm();
  const double wr = omega.dot(model.corr.r);
  const double wRw = omega.dot(model.corr.R * omega);

  Eigen::MatrixXd grad_P = -2.0 * wr * S2 + 2.0 * M * wn2 * (SP * S) +
                           2.0 * (wn2 + wRw) * (SP * S2);
  Eigen::VectorXd grad_w = -2.0 * tr_S2P * model.corr.r + 2.0 * M * tr_SPtSP * omega +
                           2.0 * tr_S2PtSP * (omega + model.corr.R * omega);
  return {std::move(grad_P), std::move(grad_w)};
}

Spectrum spectral_setup(const RiskModel& model) {
  Spectrum spec;
  spec.M = model.M();
  symmetric_eig_descending(model.Sigma, spec.s, spec.U);
  if (spec.s.minCoeff() <= 0.0) throw std::invalid_argument("Sigma must be SPD");
  spec.s_max = spec.s(0);
  spec.s_min = spec.s(spec.s.size() - 1);
  spec.delta_sigma = spec.s_max - spec.s_min;

  const int n = model.n();
  if (n > 0) {
    symmetric_eig_descending(model.corr.R, spec.lambda, spec.E);
    spec.a = spec.E.transpose() * model.corr.r;
    const double lam_top = std::max(spec.lambda.maxCoeff(), 0.0);
    const double zero_tol = 1e-10 * std::max(lam_top, 1.0);
    spec.lambda_max_nz = 0.0;
    spec.lambda_min_nz = 0.0;
    double a_mass_on_zero = 0.0;
    for (int i = 0; i < n; ++i) {
      if (std::abs(spec.lambda(i)) > zero_tol) {
        if (spec.lambda_max_nz == 0.0) spec.lambda_max_nz = spec.lambda(i);
        spec.lambda_min_nz = spec.lambda(i);
      } else {
        a_mass_on_zero += spec.a(i) * spec.a(i);
      }
    }
    spec.delta_r = spec.lambda_max_nz - spec.lambda_min_nz;
    const double a_norm2 = spec.a.squaredNorm();
    spec.a_all_zero = a_norm2 <= 1e-28;
    spec.r_in_range_of_R = spec.a_all_zero || (a_mass_on_zero <= 1e-16 * a_norm2);
  } else {
    spec.lambda.resize(0);
    spec.E.resize(0, 0);
    spec.a.resize(0);
    spec.delta_r = 0.0;
    spec.a_all_zero = true;
  }
  spec.gap_condition = spec.delta_sigma * spec.delta_r < spec.M + spec.s_min;
  return spec;
}

double transfer_h1(double gbar, const Spectrum& spec) {
  if (spec.a_all_zero) throw std::domain_error("correlation vector has no mass (h1 undefined)");
  double num = 0.0, den = 0.0;
  for (int i = 0; i < spec.lambda.size(); ++i) {
    const double ai2 = spec.a(i) * spec.a(i);
    const double w = ai2 / std::pow(1.0 + spec.lambda(i) * gbar, 2);
    num += spec.lambda(i) * w;
    den += w;
  }
  return num / den;
}

double transfer_h2(double gamma, const Spectrum& spec) {
  double num = 0.0, den = 0.0;
  for (int i = 0; i < spec.s.size(); ++i) {
    const double si = spec.s(i);
    const double w = 1.0 / std::pow(spec.M + si * gamma, 2);
    num += si * si * w;
    den += si * si * si * w;
  }
  return 1.0 / (1.0 + spec.M * num / den);
}

FixedPointResult solve_fixed_point(const Spectrum& spec, double tol, int max_iter, double gamma0) {
  FixedPointResult out;
  out.contraction = spec.gap_condition;
  double gamma = gamma0;
  for (int it = 1; it <= max_iter; ++it) {
    const double next = transfer_composite(gamma, spec);
    out.iterations = it;
    const double delta = std::abs(next - gamma);
    gamma = next;
    if (delta <= tol) {
      out.converged = true;
      break;
    }
  }
  out.gamma = gamma;
  out.residual = std::abs(gamma - transfer_composite(gamma, spec));
  return out;
}

LandscapeSolution optimal_wpgd(const RiskModel& model) {
  LandscapeSolution sol;
  if (model.n() == 0) {
    sol.P = Eigen::MatrixXd::Zero(model.d, model.d);
    sol.P_dir = sol.P;
    sol.omega.resize(0);
    sol.risk = model.M();
    sol.converged = true;
    return sol;
  }
  const Spectrum spec = spectral_setup(model);
  const FixedPointResult fp = solve_fixed_point(spec);
  sol.gamma = fp.gamma;
  sol.converged = fp.converged;
  sol.iterations = fp.iterations;
  sol.residual = fp.residual;
  sol.h2_at_gamma = transfer_h2(fp.gamma, spec);

  // P_dir = Sigma^-1/2 ((gamma/M) Sigma + I)^-1 Sigma^-1/2, diagonal in the Sigma basis.
  Eigen::VectorXd diag(spec.s.size());
  for (int i = 0; i < spec.s.size(); ++i)
    diag(i) = spec.M / (spec.s(i) * (fp.gamma * spec.s(i) + spec.M));
  sol.P_dir = spec.U * diag.asDiagonal() * spec.U.transpose();

  Eigen::MatrixXd A = sol.h2_at_gamma * model.corr.R +
                      Eigen::MatrixXd::Identity(model.n(), model.n());
  sol.omega = A.ldlt().solve(model.corr.r);

  // One-dimensional quadratic minimization along the scaling ray.
  const Eigen::MatrixXd& S = model.Sigma;
  const double trA = (S * S * sol.P_dir).trace() * sol.omega.dot(model.corr.r);
  const double trB = tr_sps_p(S, sol.P_dir);
  const double trE = tr_s2ps_p(S, sol.P_dir);
  const double C = sol.omega.squaredNorm();
  const double D = sol.omega.dot(model.corr.R * sol.omega);
  const double denom = spec.M * C * trB + (C + D) * trE;
  sol.rescale = denom > 0.0 ? trA / denom : 0.0;
  sol.P = sol.rescale * sol.P_dir;
  sol.risk = closed_form_risk(sol.P, sol.omega, model);
  return sol;
}

double optimal_wpgd_risk_isotropic(const RiskModel& model) {
  if (!model.sigma_is_identity()) throw std::invalid_argument("requires Sigma = I");
  const double base = model.d + model.sigma * model.sigma;
  if (model.n() == 0) return base;
  Eigen::MatrixXd Rp = model.corr.R;
  Rp.diagonal().array() += base + 1.0;
  const Eigen::VectorXd sol = Rp.ldlt().solve(model.corr.r);
  return base - model.d * model.corr.r.dot(sol);
}

AttRiskResult optimal_att_risk(const RiskModel& model) {
  if (!model.sigma_is_identity()) throw std::invalid_argument("requires Sigma = I");
  AttRiskResult out;
  const double base = model.d + model.sigma * model.sigma;
  const int n = model.n();
  if (n == 0) {
    out.att_risk = base;
    return out;
  }
  const double ones_r = model.corr.r.sum();
  const double ones_R_ones = model.corr.R.sum();
  out.att_risk = base - model.d * ones_r * ones_r / (n * (base + 1.0) + ones_R_ones);

  Eigen::MatrixXd Rp = model.corr.R;
  Rp.diagonal().array() += base + 1.0;
  const auto solver = Rp.ldlt();
  const Eigen::VectorXd Rp_inv_r = solver.solve(model.corr.r);
  const double ones_Rp_ones = n * (base + 1.0) + ones_R_ones;
  out.gap_formula =
      model.d * (model.corr.r.dot(Rp_inv_r) - ones_r * ones_r / ones_Rp_ones);
  out.gap_direct = out.att_risk - optimal_wpgd_risk_isotropic(model);
  return out;
}

Eigen::VectorXd project_monotone_box(const Eigen::VectorXd& v) {
  const int K = static_cast<int>(v.size());
  // Pool adjacent violators for the nondecreasing isotonic fit.
  std::vector<double> value;
  std::vector<int> weight;
  value.reserve(K);
  weight.reserve(K);
  for (int i = 0; i < K; ++i) {
    value.push_back(v(i));
    weight.push_back(1);
    while (value.size() > 1 && value[value.size() - 2] > value.back()) {
      const double merged = (value[value.size() - 2] * weight[weight.size() - 2] +
                             value.back() * weight.back()) /
                            (weight[weight.size() - 2] + weight.back());
      weight[weight.size() - 2] += weight.back();
      value[value.size() - 2] = merged;
      value.pop_back();
      weight.pop_back();
    }
  }
  Eigen::VectorXd out(K);
  int pos = 0;
  for (size_t b = 0; b < value.size(); ++b)
    for (int i = 0; i < weight[b]; ++i) out(pos++) = std::min(1.0, std::max(0.0, value[b]));
  return out;
}

namespace {

struct ReducedQuadratic {
  Eigen::MatrixXd H;  // risk(t) = const - 2 b't + t'Ht
  Eigen::VectorXd b;
};

ReducedQuadratic reduce_omega_quadratic(const Eigen::MatrixXd& P, const RiskModel& model) {
  const Eigen::MatrixXd& S = model.Sigma;
  const double tr_S2P = (S * S * P).trace();
  const double tr_SPtSP = tr_sps_p(S, P);
  const double tr_S2PtSP = tr_s2ps_p(S, P);
  const int K = model.corr.num_segments();
  const auto& segs = model.corr.segments;

  ReducedQuadratic red;
  red.b.resize(K);
  red.H.resize(K, K);
  int row = 0;
  std::vector<int> offsets(static_cast<size_t>(K));
  for (int k = 0; k < K; ++k) {
    offsets[static_cast<size_t>(k)] = row;
    red.b(k) = tr_S2P * model.corr.r.segment(row, segs[static_cast<size_t>(k)].length).sum();
    row += segs[static_cast<size_t>(k)].length;
  }
  for (int k = 0; k < K; ++k) {
    for (int l = 0; l < K; ++l) {
      const double block_sum = model.corr.R
                                   .block(offsets[static_cast<size_t>(k)],
                                          offsets[static_cast<size_t>(l)],
                                          segs[static_cast<size_t>(k)].length,
                                          segs[static_cast<size_t>(l)].length)
                                   .sum();
      double h = tr_S2PtSP * block_sum;
      if (k == l)
        h += (model.M() * tr_SPtSP + tr_S2PtSP) * segs[static_cast<size_t>(k)].length;
      red.H(k, l) = h;
    }
  }
  return red;
}

Eigen::MatrixXd optimal_p_given_omega(const Eigen::VectorXd& omega, const RiskModel& model,
                                      const Spectrum& spec) {
  const double wr = omega.dot(model.corr.r);
  const double wn2 = omega.squaredNorm();
  const double q = wn2 + omega.dot(model.corr.R * omega);
  if (wn2 <= 0.0 || wr == 0.0) return Eigen::MatrixXd::Zero(model.d, model.d);
  Eigen::VectorXd diag(spec.s.size());
  for (int i = 0; i < spec.s.size(); ++i)
    diag(i) = wr / (spec.M * wn2 + q * spec.s(i));
  return spec.U * diag.asDiagonal() * spec.U.transpose();
}

}  // namespace

ConstrainedResult constrained_optimum(const RiskModel& model, double tol, int max_outer) {
  const int K = model.corr.num_segments();
  ConstrainedResult best;
  best.risk = std::numeric_limits<double>::infinity();
  if (model.n() == 0) {
    best.segment_weights = Eigen::VectorXd::Zero(K);
    best.omega.resize(0);
    best.P = Eigen::MatrixXd::Zero(model.d, model.d);
    best.risk = model.M();
    best.converged = true;
    return best;
  }
  const Spectrum spec = spectral_setup(model);

  std::vector<Eigen::VectorXd> starts;
  starts.push_back(Eigen::VectorXd::Ones(K));
  {
    // Segment averages of the unconstrained optimum, projected into W.
    const LandscapeSolution unc = optimal_wpgd(model);
    Eigen::VectorXd t(K);
    int row = 0;
    for (int k = 0; k < K; ++k) {
      const int len = model.corr.segments[static_cast<size_t>(k)].length;
      t(k) = len > 0 ? unc.omega.segment(row, len).mean() : 0.0;
      row += len;
    }
    const double top = t.cwiseAbs().maxCoeff();
    if (top > 1.0) t /= top;  // scale freedom: fold the excess into P
    starts.push_back(project_monotone_box(t));
  }
  starts.push_back(Eigen::VectorXd::LinSpaced(K, 0.25, 1.0));

  for (const auto& t0 : starts) {
    Eigen::VectorXd t = t0;
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(model.d, model.d);
    double risk = std::numeric_limits<double>::infinity();
    int outer = 0;
    bool converged = false;
    for (outer = 1; outer <= max_outer; ++outer) {
      const Eigen::VectorXd omega = expand_segments(t, model.corr.segments);
      P = optimal_p_given_omega(omega, model, spec);
      const ReducedQuadratic red = reduce_omega_quadratic(P, model);
      const double lip = 2.0 * red.H.selfadjointView<Eigen::Lower>().eigenvalues().maxCoeff();
      if (lip > 0.0) {
        const double step = 1.0 / lip;
        for (int inner = 0; inner < 20000; ++inner) {
          const Eigen::VectorXd grad = 2.0 * (red.H * t - red.b);
          const Eigen::VectorXd next = project_monotone_box(t - step * grad);
          const double move = (next - t).norm();
          t = next;
          if (move <= 1e-15 * std::max(1.0, t.norm())) break;
        }
      }
      const double new_risk = closed_form_risk(P, expand_segments(t, model.corr.segments), model);
      if (std::abs(risk - new_risk) <= tol) {
        risk = new_risk;
        converged = true;
        break;
      }
      risk = new_risk;
    }
    if (risk < best.risk) {
      best.segment_weights = t;
      best.omega = expand_segments(t, model.corr.segments);
      best.P = P;
      best.risk = risk;
      best.outer_iterations = outer;
      best.converged = converged;
    }
  }
  return best;
}

VectorGatingRealization realize_vector_gating(const std::vector<double>& segment_weights,
                                              const std::vector<int>& segment_lengths, int d,
                                              int p) {
  const int K = static_cast<int>(segment_weights.size());
  if (static_cast<int>(segment_lengths.size()) != K)
    throw std::invalid_argument("segment count mismatch");
  if (K > p) throw std::invalid_argument("need K <= p contextual dimensions");
  const int m = d + 1 + p;

  VectorGatingRealization out;
  out.d = d;
  out.p = p;
  int tokens = 1;  // query
  for (int len : segment_lengths) tokens += len + 1;

  out.gates.assign(static_cast<size_t>(tokens), Eigen::MatrixXd::Ones(m, m));
  int row = 0;
  for (int k = 0; k < K; ++k) {
    for (int i = 0; i < segment_lengths[static_cast<size_t>(k)]; ++i)
      out.data_positions.push_back(row++);
    // Delimiter closing segment k: coordinate k+1 (0-based row k+1) switches
    // off everything before it.
    if (k + 1 < K) out.gates[static_cast<size_t>(row)].row(k + 1).setZero();
    ++row;
  }

  out.u = Eigen::VectorXd::Zero(m);
  out.head = Eigen::VectorXd::Zero(m);
  double prev = 0.0;
  for (int k = 0; k < K; ++k) {
    out.u(k) = 1.0;
    out.head(k) = segment_weights[static_cast<size_t>(k)] - prev;
    prev = segment_weights[static_cast<size_t>(k)];
  }
  return out;
}

}  // namespace glalab
