#include "glalab/gla_engine.hpp"

#include <cmath>
#include <stdexcept>

namespace glalab {

GatingSpec GatingSpec::scalar_linear(const Eigen::VectorXd& w_g) {
  GatingSpec spec;
  spec.kind = GateKind::ScalarLinear;
  spec.w_g = w_g;
  return spec;
}

GatingSpec GatingSpec::vector_linear(const Eigen::MatrixXd& W_g) {
  GatingSpec spec;
  spec.kind = GateKind::VectorLinear;
  spec.W_g = W_g;
  return spec;
}

GatingSpec GatingSpec::explicit_matrices(std::vector<Eigen::MatrixXd> gates) {
  GatingSpec spec;
  spec.kind = GateKind::ExplicitMatrices;
  spec.gates = std::move(gates);
  return spec;
}

Eigen::MatrixXd GatingSpec::gate(int index, const Eigen::VectorXd& z) const {
  const int m = static_cast<int>(z.size());
  switch (kind) {
    case GateKind::AllOnes:
      return Eigen::MatrixXd::Ones(m, m);
    case GateKind::ScalarLinear: {
      if (w_g.size() != m) throw std::invalid_argument("gate vector width mismatch");
      return Eigen::MatrixXd::Constant(m, m, activation(w_g.dot(z)));
    }
    case GateKind::VectorLinear: {
      if (W_g.cols() != m) throw std::invalid_argument("gate matrix width mismatch");
      Eigen::VectorXd col = (W_g * z).unaryExpr(activation);
      return col * Eigen::RowVectorXd::Ones(m);
    }
    case GateKind::ExplicitMatrices: {
      const auto& G = gates.at(static_cast<size_t>(index));
      if (G.rows() != m || G.cols() != m) throw std::invalid_argument("explicit gate size mismatch");
      return G;
    }
  }
  throw std::logic_error("unreachable");
}

namespace {

AttentionModel make_model(int m, int d, int p, ConstructionKind kind) {
  AttentionModel model;
  model.W_k = Eigen::MatrixXd::Zero(m, m);
  model.W_q = Eigen::MatrixXd::Zero(m, m);
  model.W_v = Eigen::MatrixXd::Zero(m, m);
  model.kind = kind;
  model.d = d;
  model.p = p;
  return model;
}

}  // namespace

AttentionModel build_restricted(const Eigen::MatrixXd& P_k, const Eigen::MatrixXd& P_q) {
  const int d = static_cast<int>(P_k.rows());
  AttentionModel model = make_model(d + 1, d, 0, ConstructionKind::Restricted);
  model.W_k.topLeftCorner(d, d) = P_k;
  model.W_q.topLeftCorner(d, d) = P_q;
  model.W_v(d, d) = 1.0;
  return model;
}

AttentionModel build_delimiter(const Eigen::MatrixXd& P_k, const Eigen::MatrixXd& P_q, int p) {
  const int d = static_cast<int>(P_k.rows());
  AttentionModel model = make_model(d + 1 + p, d, p, ConstructionKind::Delimiter);
  model.W_k.topLeftCorner(d, d) = P_k;
  model.W_q.topLeftCorner(d, d) = P_q;
  model.W_v(d, d) = 1.0;  // last p rows and columns stay zero
  return model;
}

AttentionModel build_value_vector(const Eigen::MatrixXd& P_k, const Eigen::MatrixXd& P_q,
                                  const Eigen::VectorXd& u) {
  const int d = static_cast<int>(P_k.rows());
  if (u.size() != d + 1) throw std::invalid_argument("u must have token width");
  AttentionModel model = make_model(d + 1, d, 0, ConstructionKind::ValueVector);
  model.W_k.topLeftCorner(d, d) = P_k;
  model.W_q.topLeftCorner(d, d) = P_q;
  model.W_v.row(d) = u.transpose();  // W_v' z = z_label * u
  return model;
}

AttentionModel build_delimiter_value_vector(const Eigen::MatrixXd& P_k,
                                            const Eigen::MatrixXd& P_q, int p,
                                            const Eigen::VectorXd& u) {
  const int d = static_cast<int>(P_k.rows());
  if (u.size() != d + 1 + p) throw std::invalid_argument("u must have token width");
  AttentionModel model = make_model(d + 1 + p, d, p, ConstructionKind::DelimiterValueVector);
  model.W_k.topLeftCorner(d, d) = P_k;
  model.W_q.topLeftCorner(d, d) = P_q;
  model.W_v.row(d) = u.transpose();
  return model;
}

GlaTrace gla_forward(const Eigen::MatrixXd& Z, const AttentionModel& model) {
  const int m = model.width();
  if (Z.cols() != m) throw std::invalid_argument("token width mismatch");
  const int N = static_cast<int>(Z.rows());

  GlaTrace trace;
  trace.states.reserve(N);
  trace.outputs.reserve(N);
  trace.gates.reserve(N);

  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < N; ++i) {
    const Eigen::VectorXd z = Z.row(i).transpose();
    const Eigen::MatrixXd G = model.gating.gate(i, z);
    const Eigen::VectorXd k = model.W_k.transpose() * z;
    const Eigen::VectorXd q = model.W_q.transpose() * z;
    const Eigen::VectorXd v = model.W_v.transpose() * z;
    S = G.cwiseProduct(S);
    S.noalias() += v * k.transpose();
    trace.gates.push_back(G);
    trace.states.push_back(S);
    trace.outputs.push_back(S * q);
  }
  return trace;
}

double gla_predict(const Eigen::MatrixXd& Z, const AttentionModel& model) {
  const GlaTrace trace = gla_forward(Z, model);
  const Eigen::VectorXd& last = trace.outputs.back();
  if (model.kind == ConstructionKind::ValueVector ||
      model.kind == ConstructionKind::DelimiterValueVector) {
    if (!model.head) throw std::invalid_argument("value-vector construction needs a head");
    return model.head->dot(last);
  }
  return last(model.label_index());
}

Eigen::MatrixXd causal_linear_attention(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& W_k,
                                        const Eigen::MatrixXd& W_q, const Eigen::MatrixXd& W_v) {
  Eigen::MatrixXd scores = Z * W_q * W_k.transpose() * Z.transpose();
  scores = scores.triangularView<Eigen::Lower>();  // causal mask, diagonal kept
  return scores * Z * W_v;
}

Eigen::MatrixXd induced_weighting(const std::vector<Eigen::VectorXd>& rows,
                                  const std::vector<int>& data_positions, int d) {
  const int N = static_cast<int>(rows.size());
  Eigen::MatrixXd omega(static_cast<int>(data_positions.size()), d);
  Eigen::VectorXd suffix = Eigen::VectorXd::Ones(d);
  int out = static_cast<int>(data_positions.size()) - 1;
  for (int t = N - 1; t >= 0 && out >= 0; --t) {
    if (data_positions[static_cast<size_t>(out)] == t) {
      omega.row(out) = suffix.transpose();
      --out;
    }
    if (rows[static_cast<size_t>(t)].size() != d)
      throw std::invalid_argument("gate row width mismatch");
    suffix = suffix.cwiseProduct(rows[static_cast<size_t>(t)]);
  }
  if (out >= 0) throw std::invalid_argument("data positions out of range");
  return omega;
}

Eigen::VectorXd collapse_sample_weights(const Eigen::MatrixXd& omega, double tol) {
  Eigen::VectorXd w(omega.rows());
  for (int i = 0; i < omega.rows(); ++i) {
    const double v = omega(i, 0);
    if ((omega.row(i).array() - v).abs().maxCoeff() > tol)
      throw std::invalid_argument("weighting row is not constant");
    w(i) = v;
  }
  return w;
}

std::vector<Eigen::VectorXd> value_channel_gate_rows(const GlaTrace& trace, int d) {
  std::vector<Eigen::VectorXd> rows;
  rows.reserve(trace.gates.size());
  for (const auto& G : trace.gates) rows.push_back(G.row(d).head(d).transpose());
  return rows;
}

Eigen::MatrixXd induced_weighting_with_head(const std::vector<Eigen::MatrixXd>& gates,
                                            const Eigen::VectorXd& u, const Eigen::VectorXd& h,
                                            const std::vector<int>& data_positions, int d) {
  if (u.size() != h.size()) throw std::invalid_argument("u/h size mismatch");
  const int m = static_cast<int>(u.size());
  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(static_cast<int>(data_positions.size()), d);
  std::vector<Eigen::VectorXd> rows(gates.size());
  for (int r = 0; r < m; ++r) {
    const double scale = h(r) * u(r);
    if (scale == 0.0) continue;
    for (size_t t = 0; t < gates.size(); ++t) rows[t] = gates[t].row(r).head(d).transpose();
    omega.noalias() += scale * induced_weighting(rows, data_positions, d);
  }
  return omega;
}

std::vector<Eigen::VectorXd> gla_multilayer_forward(const Eigen::MatrixXd& Z,
                                                    const std::vector<AttentionModel>& layers) {
  if (layers.empty()) throw std::invalid_argument("need at least one layer");
  const int label = layers.front().label_index();
  Eigen::MatrixXd Zl = Z;
  std::vector<Eigen::VectorXd> readouts;
  readouts.reserve(layers.size());
  for (const auto& layer : layers) {
    if (layer.width() != Z.cols()) throw std::invalid_argument("layer width mismatch");
    const GlaTrace trace = gla_forward(Zl, layer);
    Eigen::MatrixXd next = Zl;
    for (int i = 0; i < Zl.rows(); ++i) next.row(i) += trace.outputs[static_cast<size_t>(i)];
    readouts.push_back(next.col(label));
    Zl = std::move(next);
  }
  return readouts;
}

}  // namespace glalab
