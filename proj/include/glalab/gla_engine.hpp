#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

namespace glalab {

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

enum class GateKind { AllOnes, ScalarLinear, VectorLinear, ExplicitMatrices };

// Gating specification. ScalarLinear produces G_i = phi(w_g' z_i) * ones;
// VectorLinear produces G_i = phi(W_g z_i) 1' (each row constant);
// ExplicitMatrices injects arbitrary per-token gate matrices.
struct GatingSpec {
  GateKind kind = GateKind::AllOnes;
  Eigen::VectorXd w_g;
  Eigen::MatrixXd W_g;
  std::vector<Eigen::MatrixXd> gates;
  std::function<double(double)> activation = [](double z) { return logistic(z); };

  static GatingSpec all_ones() { return {}; }
  static GatingSpec scalar_linear(const Eigen::VectorXd& w_g);
  static GatingSpec vector_linear(const Eigen::MatrixXd& W_g);
  static GatingSpec explicit_matrices(std::vector<Eigen::MatrixXd> gates);

  // Gate matrix for token index (0-based) with token vector z.
  Eigen::MatrixXd gate(int index, const Eigen::VectorXd& z) const;
};

enum class ConstructionKind { Restricted, Delimiter, ValueVector, DelimiterValueVector };

// Key/query/value matrices (token width m = d+1 or d+p+1) plus gating and an
// optional linear prediction head.
struct AttentionModel {
  Eigen::MatrixXd W_k, W_q, W_v;
  GatingSpec gating;
  std::optional<Eigen::VectorXd> head;
  ConstructionKind kind = ConstructionKind::Restricted;
  int d = 0;
  int p = 0;

  int width() const { return static_cast<int>(W_k.rows()); }
  int label_index() const { return d; }  // column d of Z holds the label
};

AttentionModel build_restricted(const Eigen::MatrixXd& P_k, const Eigen::MatrixXd& P_q);
AttentionModel build_delimiter(const Eigen::MatrixXd& P_k, const Eigen::MatrixXd& P_q, int p);
AttentionModel build_value_vector(const Eigen::MatrixXd& P_k, const Eigen::MatrixXd& P_q,
                                  const Eigen::VectorXd& u);
AttentionModel build_delimiter_value_vector(const Eigen::MatrixXd& P_k,
                                            const Eigen::MatrixXd& P_q, int p,
                                            const Eigen::VectorXd& u);

struct GlaTrace {
  std::vector<Eigen::MatrixXd> states;   // S_1 .. S_N
  std::vector<Eigen::VectorXd> outputs;  // o_1 .. o_N
  std::vector<Eigen::MatrixXd> gates;    // G_1 .. G_N
};

// Exact recurrence S_i = G_i (.) S_{i-1} + v_i k_i', o_i = S_i q_i with S_0 = 0.
GlaTrace gla_forward(const Eigen::MatrixXd& Z, const AttentionModel& model);

// Prediction read-out: label coordinate of the last output for the
// restricted/delimiter constructions, head' o_last when a head is present.
double gla_predict(const Eigen::MatrixXd& Z, const AttentionModel& model);

// Dense causal linear attention mask(Z Wq Wk' Z') Z Wv; oracle for AllOnes gating.
Eigen::MatrixXd causal_linear_attention(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& W_k,
                                        const Eigen::MatrixXd& W_q, const Eigen::MatrixXd& W_v);

// Suffix Hadamard products of per-token gate rows. `rows[t]` is the d-vector
// gate row of token t (all tokens, data and otherwise); the result has one
// row per entry of data_positions, equal to the product of the rows of every
// later token (empty product = ones).
Eigen::MatrixXd induced_weighting(const std::vector<Eigen::VectorXd>& rows,
                                  const std::vector<int>& data_positions, int d);

// Collapses a row-constant weighting matrix to per-sample weights; throws if
// some row is not constant.
Eigen::VectorXd collapse_sample_weights(const Eigen::MatrixXd& omega, double tol = 1e-12);

// Extracts the gate row relevant to the value channel (row d, first d
// entries) for each token of a forward trace.
std::vector<Eigen::VectorXd> value_channel_gate_rows(const GlaTrace& trace, int d);

// Per-coordinate weighting composed through u and h:
//   sum_r h_r u_r * suffix-products of row r of the gate matrices.
Eigen::MatrixXd induced_weighting_with_head(const std::vector<Eigen::MatrixXd>& gates,
                                            const Eigen::VectorXd& u, const Eigen::VectorXd& h,
                                            const std::vector<int>& data_positions, int d);

// Residual multi-layer stack: Z_l = Z_{l-1} + GLA_{l-1}(Z_{l-1}). Returns the
// label-column read-outs o_{i,l} = [Z_l + GLA_l(Z_l)]_{i, d} for every layer.
std::vector<Eigen::VectorXd> gla_multilayer_forward(const Eigen::MatrixXd& Z,
                                                    const std::vector<AttentionModel>& layers);

}  // namespace glalab
