#pragma once

#include <utility>
#include <vector>

#include <Eigen/Core>

#include "glalab/multitask_data.hpp"

namespace glalab {

// Analytic problem instance for the one-step WPGD population risk.
struct RiskModel {
  Eigen::MatrixXd Sigma;  // d x d SPD feature covariance
  CorrelationStructure corr;
  double sigma = 0.0;  // label noise
  int d = 0;

  int n() const { return corr.n(); }
  double M() const { return sigma * sigma + Sigma.trace(); }

  static RiskModel isotropic(int d, double sigma, const CorrelationStructure& corr);
  static RiskModel general(const Eigen::MatrixXd& Sigma, double sigma,
                           const CorrelationStructure& corr);
  bool sigma_is_identity(double tol = 1e-12) const;
};

// Population risk of the sample-wise WPGD predictor x' P X' (omega (.) y):
//   M - 2 tr(Sigma^2 P) w'r + M |w|^2 tr(Sigma P' Sigma P)
//     + (|w|^2 + w'Rw) tr(Sigma^2 P' Sigma P),   M = sigma^2 + tr(Sigma).
double closed_form_risk(const Eigen::MatrixXd& P, const Eigen::VectorXd& omega,
                        const RiskModel& model);

// Exact gradients of closed_form_risk. The P-gradient uses
//   d/dP tr(Sigma P' Sigma P)   = 2 Sigma P Sigma
//   d/dP tr(Sigma^2 P' Sigma P) = 2 Sigma P Sigma^2,
// valid for arbitrary (non-commuting) P; finite differences pin this down.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> risk_gradient(const Eigen::MatrixXd& P,
                                                          const Eigen::VectorXd& omega,
                                                          const RiskModel& model);

struct Spectrum {
  Eigen::VectorXd s;       // eigenvalues of Sigma, descending
  Eigen::MatrixXd U;       // eigenvectors of Sigma
  Eigen::VectorXd lambda;  // eigenvalues of R, descending
  Eigen::MatrixXd E;       // eigenvectors of R
  Eigen::VectorXd a;       // E' r
  double M = 0.0;
  double s_min = 0.0, s_max = 0.0;
  double lambda_min_nz = 0.0, lambda_max_nz = 0.0;  // extremes over nonzero eigenvalues
  double delta_sigma = 0.0, delta_r = 0.0;
  bool gap_condition = false;      // delta_sigma * delta_r < M + s_min
  bool r_in_range_of_R = true;     // no mass of a on zero eigenvalues
  bool a_all_zero = false;
};

Spectrum spectral_setup(const RiskModel& model);

// h1(gbar) = [sum lambda_i a_i^2 / (1 + lambda_i gbar)^2] / [sum a_i^2 / (1 + lambda_i gbar)^2]
double transfer_h1(double gbar, const Spectrum& spec);
// h2(gamma) = (1 + M [sum s_i^2/(M + s_i gamma)^2] / [sum s_i^3/(M + s_i gamma)^2])^-1
double transfer_h2(double gamma, const Spectrum& spec);
inline double transfer_composite(double gamma, const Spectrum& spec) {
  return transfer_h1(transfer_h2(gamma, spec), spec) + 1.0;
}

struct FixedPointResult {
  double gamma = 1.0;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  bool contraction = false;  // mirrors the spectral-gap condition
};

// Plain iteration gamma <- h1(h2(gamma)) + 1 from gamma0.
FixedPointResult solve_fixed_point(const Spectrum& spec, double tol = 1e-12, int max_iter = 10000,
                                   double gamma0 = 1.0);

struct LandscapeSolution {
  double gamma = 1.0;
  Eigen::MatrixXd P;          // rescaled preconditioner c* P_dir
  Eigen::MatrixXd P_dir;      // Sigma^-1/2 ((gamma/M) Sigma + I)^-1 Sigma^-1/2
  Eigen::VectorXd omega;      // (h2(gamma) R + I)^-1 r
  double rescale = 1.0;       // c*
  double risk = 0.0;
  double h2_at_gamma = 0.0;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
};

// Global WPGD optimum via the fixed-point characterization; the joint scale
// is folded into P so the returned pair minimizes closed_form_risk along the
// scaling ray.
LandscapeSolution optimal_wpgd(const RiskModel& model);

// Sigma = I closed form: d + sigma^2 - d r'(R + (d + sigma^2 + 1) I)^-1 r.
double optimal_wpgd_risk_isotropic(const RiskModel& model);

struct AttRiskResult {
  double att_risk = 0.0;     // d + sigma^2 - d (1'r)^2 / (n (d+sigma^2+1) + 1'R1)
  double gap_formula = 0.0;  // d r'(R+^-1 - 11'/(1'R+1)) r, R+ = R + (d+sigma^2+1) I
  double gap_direct = 0.0;   // att_risk - optimal_wpgd_risk_isotropic
};

// Optimal linear-attention (uniform-weight) risk; requires Sigma = I.
AttRiskResult optimal_att_risk(const RiskModel& model);

struct ConstrainedResult {
  Eigen::VectorXd segment_weights;  // K monotone values in [0, 1]
  Eigen::VectorXd omega;            // expanded to n entries
  Eigen::MatrixXd P;
  double risk = 0.0;
  int outer_iterations = 0;
  bool converged = false;
};

// min closed_form_risk over P in R^{d x d} and omega in
//   W = { [w_1 1',...,w_K 1']' : 0 <= w_1 <= ... <= w_K <= 1 }
// by alternating a closed-form P-step with projected gradient on the K
// segment values (pool-adjacent-violators + clipping).
ConstrainedResult constrained_optimum(const RiskModel& model, double tol = 1e-12,
                                      int max_outer = 200);

// Projection onto {x : x_1 <= ... <= x_K, 0 <= x_i <= 1}: isotonic regression
// (PAV) followed by clipping.
Eigen::VectorXd project_monotone_box(const Eigen::VectorXd& v);

struct VectorGatingRealization {
  std::vector<Eigen::MatrixXd> gates;  // per-token m x m gate matrices
  Eigen::VectorXd u;
  Eigen::VectorXd head;
  std::vector<int> data_positions;
  int d = 0, p = 0;
};

// Realizes arbitrary per-segment weights w_1..w_K (monotone or not) with
// per-coordinate gating on a delimiter prompt layout: coordinate k carries
// the suffix indicator that switches on at segment k and u_k h_k telescopes
// the increments w_k - w_{k-1}. Requires K <= p.
VectorGatingRealization realize_vector_gating(const std::vector<double>& segment_weights,
                                              const std::vector<int>& segment_lengths, int d,
                                              int p);

}  // namespace glalab
