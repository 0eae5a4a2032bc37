#pragma once

#include <vector>

#include <Eigen/Core>

namespace glalab {

// One step of generalized WPGD: beta = P2 (X P1 (.) Omega)' y, prediction x' beta.
double wpgd_predict(const Eigen::VectorXd& x, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                    const Eigen::MatrixXd& P1, const Eigen::MatrixXd& P2,
                    const Eigen::MatrixXd& Omega);

// Sample-wise form: x' P X' (omega (.) y).
double wpgd_predict(const Eigen::VectorXd& x, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                    const Eigen::MatrixXd& P, const Eigen::VectorXd& omega);

struct WpgdLayer {
  Eigen::MatrixXd P_k, P_q;
};

struct MultiLayerTrace {
  // Per layer: B (n x d, row i = beta_i), beta_hat (d), readouts (n+1).
  std::vector<Eigen::MatrixXd> B;
  std::vector<Eigen::VectorXd> beta_hat;
  std::vector<Eigen::VectorXd> readouts;
};

// L coupled WPGD trajectories with causal masks:
//   grad_{i,l} = X_l' M_i (y_l - y),  X_l = X P_{k,l} (.) Omega,  y_l = diag(X B_l')
//   beta_{i,l} = beta_{i,l-1} - P_{q,l} (grad_{i,l} (/) g_{i:n+1})
//   beta_hat_l = (1 - a_l) beta_hat_{l-1} - P_{q,l} grad_{n,l},  a_l = x' P_{q,l} P_{k,l}' x
// with readouts y_i - x_i' beta_{i,l} and -x' beta_hat_l. `gate_products[i]`
// is g_{i+1:n+1} for the i-th example (0-based); Omega stacks those rows, so
// the query update needs no gate division. With negate_pq = false the update
// adds instead of subtracting and a_l flips sign, mirroring the two
// parameterizations of W_q.
MultiLayerTrace wpgd_multilayer(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                const Eigen::VectorXd& x, const std::vector<WpgdLayer>& layers,
                                const std::vector<Eigen::VectorXd>& gate_products,
                                bool negate_pq = true);

// All-ones gating collapse: beta_hat_l = (1 - a_l) beta_hat_{l-1} - P_l X' (y_l - y).
// With full_attention = true the causal coupling is replaced by y_l = X beta_hat_l
// and a_l = 0, which is plain L-step preconditioned GD.
MultiLayerTrace causal_pgd_multilayer(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                      const Eigen::VectorXd& x,
                                      const std::vector<Eigen::MatrixXd>& P,
                                      bool full_attention = false);

}  // namespace glalab
