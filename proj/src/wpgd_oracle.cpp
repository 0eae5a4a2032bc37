#include "glalab/wpgd_oracle.hpp"

#include <stdexcept>

namespace glalab {

double wpgd_predict(const Eigen::VectorXd& x, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                    const Eigen::MatrixXd& P1, const Eigen::MatrixXd& P2,
                    const Eigen::MatrixXd& Omega) {
  if (X.rows() != y.size() || X.cols() != x.size()) throw std::invalid_argument("shape mismatch");
  if (Omega.rows() != X.rows() || Omega.cols() != X.cols())
    throw std::invalid_argument("Omega shape mismatch");
  const Eigen::MatrixXd weighted = (X * P1).cwiseProduct(Omega);
  const Eigen::VectorXd beta = P2 * (weighted.transpose() * y);
  return x.dot(beta);
}

double wpgd_predict(const Eigen::VectorXd& x, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                    const Eigen::MatrixXd& P, const Eigen::VectorXd& omega) {
  if (X.rows() != y.size() || X.cols() != x.size() || omega.size() != y.size())
    throw std::invalid_argument("shape mismatch");
  return x.dot(P * (X.transpose() * omega.cwiseProduct(y)));
}

MultiLayerTrace wpgd_multilayer(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                const Eigen::VectorXd& x, const std::vector<WpgdLayer>& layers,
                                const std::vector<Eigen::VectorXd>& gate_products,
                                bool negate_pq) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  if (static_cast<int>(gate_products.size()) != n)
    throw std::invalid_argument("need one gate product per example");
  Eigen::MatrixXd Omega(n, d);
  for (int i = 0; i < n; ++i) {
    if (gate_products[static_cast<size_t>(i)].size() != d)
      throw std::invalid_argument("gate product width mismatch");
    if ((gate_products[static_cast<size_t>(i)].array() == 0.0).any())
      throw std::invalid_argument("gate products must be nonzero (Hadamard division)");
    Omega.row(i) = gate_products[static_cast<size_t>(i)].transpose();
  }
  const double sign = negate_pq ? -1.0 : 1.0;

  MultiLayerTrace out;
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, d);
  Eigen::VectorXd beta_hat = Eigen::VectorXd::Zero(d);
  for (const auto& layer : layers) {
    const Eigen::MatrixXd Xl = (X * layer.P_k).cwiseProduct(Omega);
    Eigen::VectorXd y_l(n);
    for (int i = 0; i < n; ++i) y_l(i) = X.row(i).dot(B.row(i));
    const Eigen::VectorXd resid = y_l - y;

    Eigen::MatrixXd B_next(n, d);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(d);  // running X_l' M_i resid
    for (int i = 0; i < n; ++i) {
      grad.noalias() += resid(i) * Xl.row(i).transpose();
      const Eigen::VectorXd masked = grad.cwiseQuotient(gate_products[static_cast<size_t>(i)]);
      B_next.row(i) = B.row(i) + sign * (layer.P_q * masked).transpose();
    }
    const double alpha = x.dot(layer.P_q * (layer.P_k.transpose() * x));
    Eigen::VectorXd beta_next = (1.0 + sign * alpha) * beta_hat + sign * (layer.P_q * grad);

    Eigen::VectorXd readout(n + 1);
    for (int i = 0; i < n; ++i) readout(i) = y(i) - X.row(i).dot(B_next.row(i));
    readout(n) = -x.dot(beta_next);

    B = std::move(B_next);
    beta_hat = std::move(beta_next);
    out.B.push_back(B);
    out.beta_hat.push_back(beta_hat);
    out.readouts.push_back(std::move(readout));
  }
  return out;
}

MultiLayerTrace causal_pgd_multilayer(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                      const Eigen::VectorXd& x,
                                      const std::vector<Eigen::MatrixXd>& P,
                                      bool full_attention) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  MultiLayerTrace out;
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, d);
  Eigen::VectorXd beta_hat = Eigen::VectorXd::Zero(d);
  for (const auto& Pl : P) {
    Eigen::VectorXd y_l(n);
    if (full_attention) {
      y_l.noalias() = X * beta_hat;
    } else {
      for (int i = 0; i < n; ++i) y_l(i) = X.row(i).dot(B.row(i));
    }
    const Eigen::VectorXd resid = y_l - y;

    Eigen::MatrixXd B_next(n, d);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < n; ++i) {
      grad.noalias() += resid(i) * X.row(i).transpose();
      B_next.row(i) = B.row(i) - (Pl * grad).transpose();
    }
    const double alpha = full_attention ? 0.0 : x.dot(Pl * x);
    Eigen::VectorXd beta_next = (1.0 - alpha) * beta_hat - Pl * (X.transpose() * resid);

    Eigen::VectorXd readout(n + 1);
    for (int i = 0; i < n; ++i) readout(i) = y(i) - X.row(i).dot(B_next.row(i));
    readout(n) = -x.dot(beta_next);

    B = std::move(B_next);
    beta_hat = std::move(beta_next);
    out.B.push_back(B);
    out.beta_hat.push_back(beta_hat);
    out.readouts.push_back(std::move(readout));
  }
  return out;
}

}  // namespace glalab
