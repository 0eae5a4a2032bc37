#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "glalab/landscape.hpp"
#include "glalab/multitask_data.hpp"
#include "glalab/rng.hpp"

namespace glalab {

enum class Variant { LinAtt, GlaScalar, GlaScalarNoDelim, GlaVector };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

enum class GateUpdate { Plain, Normalized };

struct TrainConfig {
  Variant variant = Variant::GlaScalar;
  int d = 5;
  int p = 5;
  std::vector<int> segment_lengths = {10, 10};
  std::vector<double> correlations = {0.2, 0.8};
  double sigma = 0.0;
  int layers = 1;
  int batch = 256;
  int iterations = 10000;
  int trials = 10;
  double lr = 1e-3;
  GateUpdate gate_update = GateUpdate::Plain;
  std::uint64_t seed = 0;
  int eval_every = 500;
  int eval_samples = 10000;
  int final_eval_samples = 100000;
  int threads = 1;  // worker threads across trials; results do not depend on it

  int K() const { return static_cast<int>(segment_lengths.size()); }
  int n() const;
  bool with_delimiters() const { return variant != Variant::GlaScalarNoDelim; }
  // GlaScalarNoDelim uses plain [x, y] tokens; the others carry contextual features.
  int width() const { return with_delimiters() ? d + 1 + p : d + 1; }
  int tokens() const { return n() + (with_delimiters() ? K() : 0) + 1; }
};

CorrelationStructure correlation_for(const TrainConfig& cfg);
RiskModel risk_model_for(const TrainConfig& cfg);  // Sigma = I instance

// Offsets into the flat parameter vector.
struct ParamLayout {
  Variant variant = Variant::GlaScalar;
  int m = 0;
  int layers = 1;
  std::vector<int> w_k, w_q, w_g;  // per layer; w_g empty entries when ungated
  int W_g = -1, u = -1, head = -1;
  int total = 0;

  static ParamLayout make(const TrainConfig& cfg);
};

Eigen::VectorXd init_params(const TrainConfig& cfg, RngStream& rng);

struct RiskEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};

// Monte Carlo ICL risk of the given parameters over fresh prompts; the
// contextual vectors are part of the data spec and must match training.
// Deterministic in (rng stream, n_samples); independent of chunking.
RiskEstimate estimate_risk_mc(const Eigen::VectorXd& params, const TrainConfig& cfg,
                              const Eigen::MatrixXd& contextual, int n_samples, RngStream rng);

struct TrainResult {
  RiskEstimate final_risk;
  int best_trial = 0;
  Eigen::VectorXd params;
  Eigen::MatrixXd contextual;  // delimiter/contextual vectors used by the trial
  std::vector<std::pair<int, double>> risk_history;  // (iteration, mc risk)
  double smoothed_loss_at_100 = 0.0;
  double smoothed_loss_final = 0.0;
  bool diverged = false;
};

// One trial: fresh initialization, fresh contextual vectors, minibatch Adam
// on the squared ICL loss. Reverse-mode gradients through the recurrence.
TrainResult train(const TrainConfig& cfg, std::uint64_t trial_index = 0);

// Independent trials with derived seeds; returns the trial with minimal
// final MC risk. Throws if every trial diverged.
TrainResult best_of_trials(const TrainConfig& cfg);

// Finite-difference gradient of the batch loss; test oracle for backprop.
double batch_loss_for_test(const TrainConfig& cfg, const Eigen::VectorXd& params,
                           const Eigen::MatrixXd& contextual, RngStream data_stream,
                           int batch_override = -1);
Eigen::VectorXd batch_gradient_for_test(const TrainConfig& cfg, const Eigen::VectorXd& params,
                                        const Eigen::MatrixXd& contextual, RngStream data_stream,
                                        int batch_override = -1);

// Prediction on an injected token matrix (rows = tokens); cross-checks the
// trainer's forward pass against the reference engine.
double predict_tokens_for_test(const TrainConfig& cfg, const Eigen::VectorXd& params,
                               const Eigen::MatrixXd& tokens);

}  // namespace glalab
