#include "glalab/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace glalab {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::LinAtt: return "linatt";
    case Variant::GlaScalar: return "gla_scalar";
    case Variant::GlaScalarNoDelim: return "gla_wo";
    case Variant::GlaVector: return "gla_vector";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  if (name == "linatt") return Variant::LinAtt;
  if (name == "gla_scalar" || name == "gla") return Variant::GlaScalar;
  if (name == "gla_wo" || name == "gla_scalar_wo") return Variant::GlaScalarNoDelim;
  if (name == "gla_vector") return Variant::GlaVector;
  throw std::invalid_argument("unknown variant: " + name);
}

int TrainConfig::n() const {
  return std::accumulate(segment_lengths.begin(), segment_lengths.end(), 0);
}

CorrelationStructure correlation_for(const TrainConfig& cfg) {
  std::vector<Segment> segs;
  segs.reserve(cfg.segment_lengths.size());
  for (size_t k = 0; k < cfg.segment_lengths.size(); ++k)
    segs.push_back({cfg.segment_lengths[k], cfg.correlations.at(k)});
  return build_correlation_structure(segs);
}

RiskModel risk_model_for(const TrainConfig& cfg) {
  return RiskModel::isotropic(cfg.d, cfg.sigma, correlation_for(cfg));
}

ParamLayout ParamLayout::make(const TrainConfig& cfg) {
  ParamLayout lay;
  lay.variant = cfg.variant;
  lay.m = cfg.width();
  lay.layers = cfg.layers;
  if (cfg.variant == Variant::GlaVector && cfg.layers != 1)
    throw std::invalid_argument("vector gating is trained single-layer");
  int off = 0;
  const int mm = lay.m * lay.m;
  for (int l = 0; l < lay.layers; ++l) {
    lay.w_k.push_back(off);
    off += mm;
    lay.w_q.push_back(off);
    off += mm;
    if (cfg.variant == Variant::GlaScalar || cfg.variant == Variant::GlaScalarNoDelim) {
      lay.w_g.push_back(off);
      off += lay.m;
    }
  }
  if (cfg.variant == Variant::GlaVector) {
    lay.W_g = off;
    off += mm;
    lay.u = off;
    off += lay.m;
    lay.head = off;
    off += lay.m;
  }
  lay.total = off;
  return lay;
}

Eigen::VectorXd init_params(const TrainConfig& cfg, RngStream& rng) {
  const ParamLayout lay = ParamLayout::make(cfg);
  Eigen::VectorXd theta(lay.total);
  const int m = lay.m;
  const double attn_std = 1.0 / std::sqrt(static_cast<double>(cfg.d));
  const double gate_std = 1.0 / std::sqrt(static_cast<double>(m));
  for (int l = 0; l < lay.layers; ++l) {
    for (int i = 0; i < m * m; ++i) theta(lay.w_k[l] + i) = attn_std * rng.normal();
    for (int i = 0; i < m * m; ++i) theta(lay.w_q[l] + i) = attn_std * rng.normal();
    if (!lay.w_g.empty())
      for (int i = 0; i < m; ++i) theta(lay.w_g[l] + i) = gate_std * rng.normal();
  }
  if (lay.variant == Variant::GlaVector) {
    for (int i = 0; i < m * m; ++i) theta(lay.W_g + i) = gate_std * rng.normal();
    for (int i = 0; i < m; ++i) theta(lay.u + i) = 0.05 * rng.normal();
    theta(lay.u + cfg.d) += 1.0;  // bias the value vector toward the label channel
    for (int i = 0; i < m; ++i) theta(lay.head + i) = 0.05 * rng.normal();
  }
  return theta;
}

namespace {

using Eigen::Map;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Map<const MatrixXd> mat_view(const VectorXd& theta, int off, int m) {
  return Map<const MatrixXd>(theta.data() + off, m, m);
}
Map<const VectorXd> vec_view(const VectorXd& theta, int off, int m) {
  return Map<const VectorXd>(theta.data() + off, m);
}
Map<MatrixXd> mat_view(VectorXd& theta, int off, int m) {
  return Map<MatrixXd>(theta.data() + off, m, m);
}
Map<VectorXd> vec_view(VectorXd& theta, int off, int m) {
  return Map<VectorXd>(theta.data() + off, m);
}

// Minibatch engine with tokens stored as columns so the recurrences walk
// contiguous memory and all embedding work is one GEMM per layer.
class BatchEngine {
 public:
  BatchEngine(const TrainConfig& cfg, int batch)
      : cfg_(cfg),
        lay_(ParamLayout::make(cfg)),
        B_(batch),
        N_(cfg.tokens()),
        m_(cfg.width()),
        L_(cfg.layers) {
    const int cols = B_ * N_;
    Z0_.resize(m_, cols);
    Kt_.assign(static_cast<size_t>(L_), MatrixXd(m_, cols));
    Qt_.assign(static_cast<size_t>(L_), MatrixXd(m_, cols));
    St_.assign(static_cast<size_t>(L_), MatrixXd(m_, cols));
    gate_.assign(static_cast<size_t>(L_), VectorXd(cols));
    gate_deriv_.assign(static_cast<size_t>(L_), VectorXd(cols));
    labels_.assign(static_cast<size_t>(L_) + 1, VectorXd(cols));
    if (L_ > 1) Zl_.resize(m_, cols);
    Kh_.resize(m_, cols);
    Qh_.resize(m_, cols);
    gh_.resize(cols);
    lam_hat_.resize(cols);
    yq_.resize(B_);
    preds_.resize(B_);
    beta_seg_.resize(cfg.d, cfg.K());
    beta_q_.resize(cfg.d);
    x_.resize(cfg.d);
    if (cfg.variant == Variant::GlaVector) {
      Zq_.resize(m_, B_);
      Qv_.resize(m_, B_);
      Qvh_.resize(m_, B_);
      Gt_.resize(m_, cols);
      Gp_.resize(m_, cols);
      Gh_.resize(m_, cols);
      Sstack_.resize(m_, static_cast<Eigen::Index>(m_) * N_);
      Swork_.resize(m_, m_);
      Shat_.resize(m_, m_);
    }
  }

  int batch() const { return B_; }
  const VectorXd& y_query() const { return yq_; }
  const VectorXd& predictions() const { return preds_; }

  // Fresh prompts; sample b draws from stream.child(base + b), so a sample's
  // data depends only on its absolute index.
  void sample_batch(const Eigen::MatrixXd& contextual, RngStream stream,
                    std::uint64_t base = 0) {
    for (int b = 0; b < B_; ++b) {
      RngStream rng = stream.child(base + static_cast<std::uint64_t>(b));
      fill_sample(b, contextual, rng);
    }
  }

  void inject_tokens(int b, const Eigen::MatrixXd& tokens) {
    if (tokens.rows() != N_ || tokens.cols() != m_)
      throw std::invalid_argument("token matrix shape mismatch");
    Z0_.middleCols(b * N_, N_) = tokens.transpose();
    yq_(b) = 0.0;
  }

  double forward(const VectorXd& theta) {
    if (cfg_.variant == Variant::GlaVector) return forward_vector(theta, nullptr);
    return forward_scalar(theta, nullptr);
  }

  double forward_backward(const VectorXd& theta, VectorXd& grad) {
    grad.setZero(lay_.total);
    if (cfg_.variant == Variant::GlaVector) return forward_vector(theta, &grad);
    return forward_scalar(theta, &grad);
  }

 private:
  void fill_sample(int b, const Eigen::MatrixXd& contextual, RngStream& rng) {
    const int d = cfg_.d, K = cfg_.K(), p = cfg_.p;
    const bool delims = cfg_.with_delimiters();
    rng.fill_normal(beta_seg_);
    double rss = 0.0;
    beta_q_.setZero();
    for (int k = 0; k < K; ++k) {
      const double rk = cfg_.correlations[static_cast<size_t>(k)];
      beta_q_ += rk * beta_seg_.col(k);
      rss += rk * rk;
    }
    const double resid = std::sqrt(std::max(1.0 - rss, 0.0));
    if (resid > 0.0) {
      rng.fill_normal(x_);
      beta_q_ += resid * x_;
    }
    int c = b * N_;
    for (int k = 0; k < K; ++k) {
      for (int i = 0; i < cfg_.segment_lengths[static_cast<size_t>(k)]; ++i, ++c) {
        rng.fill_normal(x_);
        double y = x_.dot(beta_seg_.col(k));
        if (cfg_.sigma > 0.0) y += cfg_.sigma * rng.normal();
        Z0_.col(c).head(d) = x_;
        Z0_(d, c) = y;
        if (delims) Z0_.col(c).tail(p) = contextual.row(0).transpose();
      }
      if (delims) {
        Z0_.col(c).head(d + 1).setZero();
        Z0_.col(c).tail(p) = contextual.row(k + 1).transpose();
        ++c;
      }
    }
    rng.fill_normal(x_);
    double yq = x_.dot(beta_q_);
    if (cfg_.sigma > 0.0) yq += cfg_.sigma * rng.normal();
    Z0_.col(c).head(d) = x_;
    Z0_(d, c) = 0.0;
    if (delims) Z0_.col(c).tail(p) = contextual.row(0).transpose();
    yq_(b) = yq;
  }

  const MatrixXd* layer_tokens(int l) {
    if (l == 0) return &Z0_;
    Zl_ = Z0_;
    Zl_.row(cfg_.d) = labels_[static_cast<size_t>(l)].transpose();
    return &Zl_;
  }

  // LinAtt / GlaScalar / GlaScalarNoDelim, any number of layers. The state
  // has a single live row (value matrix hits the label channel only), so it
  // is carried as an m-vector per token.
  double forward_scalar(const VectorXd& theta, VectorXd* grad) {
    const bool gated = !lay_.w_g.empty();
    const int cols = B_ * N_;
    const int d = cfg_.d;
    labels_[0] = Z0_.row(d).transpose();
    VectorXd s(m_), shat(m_);

    for (int l = 0; l < L_; ++l) {
      const MatrixXd* Z = layer_tokens(l);
      const auto Wk = mat_view(theta, lay_.w_k[static_cast<size_t>(l)], m_);
      const auto Wq = mat_view(theta, lay_.w_q[static_cast<size_t>(l)], m_);
      Kt_[static_cast<size_t>(l)].noalias() = Wk.transpose() * (*Z);
      Qt_[static_cast<size_t>(l)].noalias() = Wq.transpose() * (*Z);
      if (gated) {
        const auto wg = vec_view(theta, lay_.w_g[static_cast<size_t>(l)], m_);
        gate_[static_cast<size_t>(l)].noalias() = Z->transpose() * wg;
        for (int c = 0; c < cols; ++c) {
          const double g = sigmoid(gate_[static_cast<size_t>(l)](c));
          gate_[static_cast<size_t>(l)](c) = g;
          gate_deriv_[static_cast<size_t>(l)](c) = g * (1.0 - g);
        }
      }
      const VectorXd& lam = labels_[static_cast<size_t>(l)];
      VectorXd& lam_next = labels_[static_cast<size_t>(l) + 1];
      const MatrixXd& K = Kt_[static_cast<size_t>(l)];
      const MatrixXd& Q = Qt_[static_cast<size_t>(l)];
      MatrixXd& S = St_[static_cast<size_t>(l)];
      const VectorXd& g = gate_[static_cast<size_t>(l)];
      for (int b = 0; b < B_; ++b) {
        s.setZero();
        const int base = b * N_;
        for (int t = 0; t < N_; ++t) {
          const int c = base + t;
          if (gated)
            s = g(c) * s + lam(c) * K.col(c);
          else
            s += lam(c) * K.col(c);
          S.col(c) = s;
          lam_next(c) = lam(c) + s.dot(Q.col(c));
        }
      }
    }

    double loss = 0.0;
    for (int b = 0; b < B_; ++b) {
      const int qc = b * N_ + N_ - 1;
      preds_(b) = labels_[static_cast<size_t>(L_)](qc);
      const double e = preds_(b) - yq_(b);
      loss += e * e;
    }
    loss /= B_;
    if (!grad) return loss;

    lam_hat_.setZero();
    for (int b = 0; b < B_; ++b)
      lam_hat_(b * N_ + N_ - 1) = 2.0 * (preds_(b) - yq_(b)) / B_;

    for (int l = L_ - 1; l >= 0; --l) {
      const VectorXd& lam = labels_[static_cast<size_t>(l)];
      const MatrixXd& K = Kt_[static_cast<size_t>(l)];
      const MatrixXd& Q = Qt_[static_cast<size_t>(l)];
      const MatrixXd& S = St_[static_cast<size_t>(l)];
      const VectorXd& g = gate_[static_cast<size_t>(l)];
      for (int b = 0; b < B_; ++b) {
        const int base = b * N_;
        for (int t = N_ - 1; t >= 0; --t) {
          const int c = base + t;
          const double ohat = lam_hat_(c);  // gradient wrt this token's layer output
          if (t == N_ - 1)
            shat.noalias() = ohat * Q.col(c);
          else if (gated)
            shat = ohat * Q.col(c) + g(c + 1) * shat;
          else
            shat.noalias() += ohat * Q.col(c);
          Qh_.col(c).noalias() = ohat * S.col(c);
          if (gated) gh_(c) = (t > 0) ? shat.dot(S.col(c - 1)) : 0.0;
          lam_hat_(c) += shat.dot(K.col(c));  // value-channel path
          Kh_.col(c).noalias() = lam(c) * shat;
        }
      }
      const MatrixXd* Z = layer_tokens(l);
      mat_view(*grad, lay_.w_k[static_cast<size_t>(l)], m_).noalias() += (*Z) * Kh_.transpose();
      mat_view(*grad, lay_.w_q[static_cast<size_t>(l)], m_).noalias() += (*Z) * Qh_.transpose();
      if (gated) {
        gh_.array() *= gate_deriv_[static_cast<size_t>(l)].array();
        vec_view(*grad, lay_.w_g[static_cast<size_t>(l)], m_).noalias() += (*Z) * gh_;
      }
      if (l > 0) {
        const auto Wk = mat_view(theta, lay_.w_k[static_cast<size_t>(l)], m_);
        const auto Wq = mat_view(theta, lay_.w_q[static_cast<size_t>(l)], m_);
        lam_hat_.noalias() += Kh_.transpose() * Wk.row(d).transpose();
        lam_hat_.noalias() += Qh_.transpose() * Wq.row(d).transpose();
        if (gated) {
          const auto wg = vec_view(theta, lay_.w_g[static_cast<size_t>(l)], m_);
          lam_hat_.noalias() += wg(d) * gh_;
        }
      }
    }
    return loss;
  }

  // Vector gating: every state row is an independent scalar-gated recurrence.
  double forward_vector(const VectorXd& theta, VectorXd* grad) {
    const int cols = B_ * N_;
    const int d = cfg_.d;
    const auto Wk = mat_view(theta, lay_.w_k[0], m_);
    const auto Wq = mat_view(theta, lay_.w_q[0], m_);
    const auto Wg = mat_view(theta, lay_.W_g, m_);
    const auto u = vec_view(theta, lay_.u, m_);
    const auto h = vec_view(theta, lay_.head, m_);

    Kt_[0].noalias() = Wk.transpose() * Z0_;
    Gt_.noalias() = Wg * Z0_;
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < m_; ++r) {
        const double gv = sigmoid(Gt_(r, c));
        Gt_(r, c) = gv;
        Gp_(r, c) = gv * (1.0 - gv);
      }
    for (int b = 0; b < B_; ++b) Zq_.col(b) = Z0_.col(b * N_ + N_ - 1);
    Qv_.noalias() = Wq.transpose() * Zq_;

    double loss = 0.0;
    if (grad) {
      Kh_.setZero();
      Gh_.setZero();
      Qvh_.setZero();
    }
    VectorXd o(m_);
    for (int b = 0; b < B_; ++b) {
      const int base = b * N_;
      Swork_.setZero();
      for (int t = 0; t < N_; ++t) {
        const int c = base + t;
        const double lam = Z0_(d, c);
        Swork_.array().colwise() *= Gt_.col(c).array();
        if (lam != 0.0) Swork_.noalias() += (lam * u) * Kt_[0].col(c).transpose();
        Sstack_.middleCols(static_cast<Eigen::Index>(t) * m_, m_) = Swork_;
      }
      o.noalias() = Swork_ * Qv_.col(b);
      const double f = h.dot(o);
      preds_(b) = f;
      const double e = f - yq_(b);
      loss += e * e;
      if (!grad) continue;

      const double df = 2.0 * e / B_;
      vec_view(*grad, lay_.head, m_).noalias() += df * o;
      Qvh_.col(b).noalias() = df * (Swork_.transpose() * h);
      Shat_.noalias() = (df * h) * Qv_.col(b).transpose();
      auto uh = vec_view(*grad, lay_.u, m_);
      for (int t = N_ - 1; t >= 0; --t) {
        const int c = base + t;
        const double lam = Z0_(d, c);
        if (t > 0) {
          const auto Sprev = Sstack_.middleCols(static_cast<Eigen::Index>(t - 1) * m_, m_);
          Gh_.col(c) = (Shat_.array() * Sprev.array()).rowwise().sum();
        }
        if (lam != 0.0) {
          Kh_.col(c).noalias() = lam * (Shat_.transpose() * u);
          uh.noalias() += lam * (Shat_ * Kt_[0].col(c));
        }
        Shat_.array().colwise() *= Gt_.col(c).array();
      }
    }
    loss /= B_;
    if (!grad) return loss;

    mat_view(*grad, lay_.w_k[0], m_).noalias() += Z0_ * Kh_.transpose();
    mat_view(*grad, lay_.w_q[0], m_).noalias() += Zq_ * Qvh_.transpose();
    Gh_.array() *= Gp_.array();
    mat_view(*grad, lay_.W_g, m_).noalias() += Gh_ * Z0_.transpose();
    return loss;
  }

  const TrainConfig cfg_;
  const ParamLayout lay_;
  const int B_, N_, m_, L_;
  MatrixXd Z0_, Zl_;
  std::vector<MatrixXd> Kt_, Qt_, St_;
  std::vector<VectorXd> gate_, gate_deriv_, labels_;
  MatrixXd Kh_, Qh_;
  VectorXd gh_, lam_hat_, yq_, preds_;
  MatrixXd beta_seg_;
  VectorXd beta_q_, x_;
  // vector gating
  MatrixXd Zq_, Qv_, Qvh_, Gt_, Gp_, Gh_, Sstack_, Swork_, Shat_;
};

struct Adam {
  explicit Adam(int size) : m(VectorXd::Zero(size)), v(VectorXd::Zero(size)) {}
  VectorXd m, v;
  int t = 0;
  void update(VectorXd& theta, const VectorXd& grad, double lr) {
    ++t;
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
};

void normalize_gate_blocks(VectorXd& grad, const ParamLayout& lay) {
  auto normalize = [&grad](int off, int len) {
    const double norm = grad.segment(off, len).norm();
    grad.segment(off, len) /= (norm + 1e-20);
  };
  for (size_t l = 0; l < lay.w_g.size(); ++l) normalize(lay.w_g[l], lay.m);
  if (lay.W_g >= 0) normalize(lay.W_g, lay.m * lay.m);
}

RiskEstimate mc_risk_impl(const VectorXd& theta, const TrainConfig& cfg,
                          const Eigen::MatrixXd& contextual, int n_samples, RngStream rng) {
  if (n_samples < 2) throw std::invalid_argument("need at least 2 samples");
  const int chunk = std::min(n_samples, 2048);
  BatchEngine engine(cfg, chunk);
  std::unique_ptr<BatchEngine> tail;
  double sum = 0.0, sumsq = 0.0;
  int done = 0;
  while (done < n_samples) {
    const int take = std::min(chunk, n_samples - done);
    BatchEngine* eng = &engine;
    if (take != chunk) {
      tail = std::make_unique<BatchEngine>(cfg, take);
      eng = tail.get();
    }
    eng->sample_batch(contextual, rng, static_cast<std::uint64_t>(done));
    eng->forward(theta);
    for (int b = 0; b < take; ++b) {
      const double e = eng->y_query()(b) - eng->predictions()(b);
      const double se = e * e;
      sum += se;
      sumsq += se * se;
    }
    done += take;
  }
  RiskEstimate est;
  est.mean = sum / n_samples;
  const double var =
      std::max(0.0, (sumsq - n_samples * est.mean * est.mean) / (n_samples - 1.0));
  est.stderr_ = std::sqrt(var / n_samples);
  return est;
}

}  // namespace

RiskEstimate estimate_risk_mc(const Eigen::VectorXd& params, const TrainConfig& cfg,
                              const Eigen::MatrixXd& contextual, int n_samples, RngStream rng) {
  return mc_risk_impl(params, cfg, contextual, n_samples, rng);
}

TrainResult train(const TrainConfig& cfg, std::uint64_t trial_index) {
  if (cfg.batch < 1 || cfg.iterations < 1) throw std::invalid_argument("bad config");
  RngStream master(cfg.seed, 0);
  RngStream trial = master.child(trial_index);
  RngStream init_rng = trial.child(0);
  RngStream ctx_rng = trial.child(1);
  RngStream data_root = trial.child(2);
  RngStream eval_root = trial.child(3);
  RngStream final_root = trial.child(4);

  TrainResult out;
  out.contextual = cfg.with_delimiters() ? sample_contextual_vectors(cfg.K(), cfg.p, ctx_rng)
                                         : Eigen::MatrixXd(0, 0);
  Eigen::VectorXd theta = init_params(cfg, init_rng);
  const ParamLayout lay = ParamLayout::make(cfg);

  BatchEngine engine(cfg, cfg.batch);
  Adam adam(lay.total);
  Eigen::VectorXd grad(lay.total);

  double initial_loss = 0.0;
  double ema = 0.0;
  constexpr double kEmaAlpha = 0.01;
  int blowups = 0;
  for (int it = 0; it < cfg.iterations; ++it) {
    engine.sample_batch(out.contextual, data_root.child(static_cast<std::uint64_t>(it)));
    const double loss = engine.forward_backward(theta, grad);
    if (it == 0) {
      initial_loss = loss;
      ema = loss;
    } else {
      ema = (1.0 - kEmaAlpha) * ema + kEmaAlpha * loss;
    }
    if (it == 100) out.smoothed_loss_at_100 = ema;
    if (!std::isfinite(loss) || loss > 1e3 * std::max(initial_loss, 1e-12)) {
      if (!std::isfinite(loss) || ++blowups >= 100) {
        out.diverged = true;
        break;
      }
    } else {
      blowups = 0;
    }
    if (cfg.gate_update == GateUpdate::Normalized) normalize_gate_blocks(grad, lay);
    adam.update(theta, grad, cfg.lr);
    if (cfg.eval_every > 0 && (it + 1) % cfg.eval_every == 0) {
      const RiskEstimate est = mc_risk_impl(theta, cfg, out.contextual, cfg.eval_samples,
                                            eval_root.child(static_cast<std::uint64_t>(it + 1)));
      out.risk_history.emplace_back(it + 1, est.mean);
    }
  }
  out.smoothed_loss_final = ema;
  out.params = theta;
  if (!out.diverged)
    out.final_risk = mc_risk_impl(theta, cfg, out.contextual, cfg.final_eval_samples, final_root);
  else
    out.final_risk = {std::numeric_limits<double>::infinity(), 0.0};
  return out;
}

TrainResult best_of_trials(const TrainConfig& cfg) {
  if (cfg.trials < 1) throw std::invalid_argument("trials must be >= 1");
  std::vector<TrainResult> results(static_cast<size_t>(cfg.trials));
  const int workers = std::max(1, std::min(cfg.threads, cfg.trials));
  if (workers == 1) {
    for (int t = 0; t < cfg.trials; ++t)
      results[static_cast<size_t>(t)] = train(cfg, static_cast<std::uint64_t>(t));
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        int t;
        while ((t = next.fetch_add(1)) < cfg.trials)
          results[static_cast<size_t>(t)] = train(cfg, static_cast<std::uint64_t>(t));
      });
    }
    for (auto& th : pool) th.join();
  }
  int best = -1;
  for (int t = 0; t < cfg.trials; ++t) {
    if (results[static_cast<size_t>(t)].diverged) continue;
    if (best < 0 || results[static_cast<size_t>(t)].final_risk.mean <
                        results[static_cast<size_t>(best)].final_risk.mean)
      best = t;
  }
  if (best < 0) {
    std::ostringstream msg;
    msg << "all " << cfg.trials << " trials diverged;";
    for (int t = 0; t < cfg.trials; ++t)
      msg << " trial " << t << " smoothed loss "
          << results[static_cast<size_t>(t)].smoothed_loss_final;
    throw std::runtime_error(msg.str());
  }
  TrainResult out = std::move(results[static_cast<size_t>(best)]);
  out.best_trial = best;
  return out;
}

double batch_loss_for_test(const TrainConfig& cfg, const Eigen::VectorXd& params,
                           const Eigen::MatrixXd& contextual, RngStream data_stream,
                           int batch_override) {
  const int batch = batch_override > 0 ? batch_override : cfg.batch;
  BatchEngine engine(cfg, batch);
  engine.sample_batch(contextual, data_stream);
  return engine.forward(params);
}

Eigen::VectorXd batch_gradient_for_test(const TrainConfig& cfg, const Eigen::VectorXd& params,
                                        const Eigen::MatrixXd& contextual, RngStream data_stream,
                                        int batch_override) {
  const int batch = batch_override > 0 ? batch_override : cfg.batch;
  BatchEngine engine(cfg, batch);
  engine.sample_batch(contextual, data_stream);
  Eigen::VectorXd grad;
  engine.forward_backward(params, grad);
  return grad;
}

double predict_tokens_for_test(const TrainConfig& cfg, const Eigen::VectorXd& params,
                               const Eigen::MatrixXd& tokens) {
  BatchEngine engine(cfg, 1);
  engine.inject_tokens(0, tokens);
  engine.forward(params);
  return engine.predictions()(0);
}

}  // namespace glalab
