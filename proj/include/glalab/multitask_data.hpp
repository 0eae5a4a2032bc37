#pragma once

#include <optional>
#include <ostream>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "glalab/rng.hpp"

namespace glalab {

// One task segment of a multitask prompt: n_k context examples whose task
// vector has correlation r_k with the query task.
struct Segment {
  int length = 0;
  double query_corr = 0.0;
};

// Task-task correlation matrix R (n x n) and task-query correlation vector
// r (n), expanded from per-segment coefficients.
struct CorrelationStructure {
  std::vector<Segment> segments;
  Eigen::MatrixXd cross;       // K x K correlation between segment tasks
  Eigen::MatrixXd R;           // n x n
  Eigen::VectorXd r;           // n
  Eigen::MatrixXd joint_sqrt;  // (K+1) x (K+1) symmetric sqrt of the joint correlation
  bool orthogonal_cross = true;

  int num_segments() const { return static_cast<int>(segments.size()); }
  int n() const { return static_cast<int>(R.rows()); }
};

// Builds R and r from (n_k, r_k) segments. `cross` defaults to the identity
// (orthogonal context tasks). Throws std::invalid_argument if |r_k| > 1, if
// cross is not a unit-diagonal symmetric PSD matrix, or if the joint
// (K+1)x(K+1) correlation matrix fails PSD (no sampler could realize it).
CorrelationStructure build_correlation_structure(
    const std::vector<Segment>& segments,
    const std::optional<Eigen::MatrixXd>& cross = std::nullopt);

struct TaskEnsemble {
  Eigen::MatrixXd B;     // n x d, row i = task vector of example i
  Eigen::VectorXd beta;  // query task
  int d = 0;
};

TaskEnsemble sample_task_ensemble(const CorrelationStructure& corr, int d, RngStream& rng);

// Empirical (R, r) moments over many ensembles: ((1/d) mean B B^T, (1/d) mean B beta).
std::pair<Eigen::MatrixXd, Eigen::VectorXd> empirical_correlation(
    const std::vector<TaskEnsemble>& samples);

// Feature covariance with its symmetric square root cached for sampling.
// Rejects matrices that are not symmetric positive definite.
struct FeatureCovariance {
  Eigen::MatrixXd Sigma;
  Eigen::MatrixXd sqrt;  // Sigma^(1/2)
  bool is_identity = false;

  static FeatureCovariance identity(int d);
  static FeatureCovariance diagonal(const Eigen::VectorXd& spectrum);
  static FeatureCovariance general(const Eigen::MatrixXd& Sigma);

  int d() const { return static_cast<int>(Sigma.rows()); }
};

// Contextual feature vectors c_0..c_K (rows); c_0 is carried by data tokens,
// c_k marks the delimiter closing segment k.
Eigen::MatrixXd sample_contextual_vectors(int K, int p, RngStream& rng);

struct MultiTaskPrompt {
  Eigen::MatrixXd X;        // n x d concatenated context features
  Eigen::VectorXd y;        // n context labels
  Eigen::VectorXd x_query;  // d
  double y_query = 0.0;
  Eigen::MatrixXd Z;        // token matrix, width d+1 or d+p+1
  std::vector<int> delimiter_positions;  // row indices of delimiter tokens in Z
  std::vector<int> data_positions;       // row indices of data tokens in Z
  int d = 0;
  int p = 0;  // contextual feature dimension (0 for plain prompts)
  bool with_delimiters = false;
};

// Assembles the token matrix for one draw of the multitask distribution:
// x_i ~ N(0, Sigma), y_i = x_i' beta_i + sigma * noise, query likewise.
// With delimiters the layout is [Z_1' d_1 ... Z_K' d_K z_query']' and every
// data token carries c_0; `contextual` must then be (K+1) x p. Without
// delimiters and p = 0 the token width is d+1.
MultiTaskPrompt sample_multitask_prompt(const TaskEnsemble& ensemble,
                                        const CorrelationStructure& corr,
                                        const FeatureCovariance& cov, double sigma,
                                        bool with_delimiters,
                                        const Eigen::MatrixXd& contextual, RngStream& rng);

// Row-major CSV dump of the token matrix with a column-role header.
void dump_prompt_csv(const MultiTaskPrompt& prompt, std::ostream& os);

}  // namespace glalab
