#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "glalab/checkpoint.hpp"
#include "glalab/gla_engine.hpp"
#include "glalab/landscape.hpp"
#include "glalab/multitask_data.hpp"
#include "glalab/sweep.hpp"
#include "glalab/trainer.hpp"
#include "glalab/verify.hpp"
#include "glalab/wpgd_oracle.hpp"

namespace py = pybind11;
using namespace glalab;

namespace {

CorrelationStructure make_structure(const std::vector<std::pair<int, double>>& segments,
                                    std::optional<Eigen::MatrixXd> cross) {
  std::vector<Segment> segs;
  segs.reserve(segments.size());
  for (const auto& [len, corr] : segments) segs.push_back({len, corr});
  return build_correlation_structure(segs, cross);
}

TrainConfig make_train_config(const py::kwargs& kwargs) {
  TrainConfig cfg;
  for (auto item : kwargs) {
    const std::string key = py::str(item.first);
    if (key == "variant") cfg.variant = variant_from_name(py::cast<std::string>(item.second));
    else if (key == "d") cfg.d = py::cast<int>(item.second);
    else if (key == "p") cfg.p = py::cast<int>(item.second);
    else if (key == "segment_lengths") cfg.segment_lengths = py::cast<std::vector<int>>(item.second);
    else if (key == "correlations") cfg.correlations = py::cast<std::vector<double>>(item.second);
    else if (key == "sigma") cfg.sigma = py::cast<double>(item.second);
    else if (key == "layers") cfg.layers = py::cast<int>(item.second);
    else if (key == "batch") cfg.batch = py::cast<int>(item.second);
    else if (key == "iterations") cfg.iterations = py::cast<int>(item.second);
    else if (key == "trials") cfg.trials = py::cast<int>(item.second);
    else if (key == "lr") cfg.lr = py::cast<double>(item.second);
    else if (key == "normalized_gates")
      cfg.gate_update = py::cast<bool>(item.second) ? GateUpdate::Normalized : GateUpdate::Plain;
    else if (key == "seed") cfg.seed = py::cast<std::uint64_t>(item.second);
    else if (key == "eval_every") cfg.eval_every = py::cast<int>(item.second);
    else if (key == "eval_samples") cfg.eval_samples = py::cast<int>(item.second);
    else if (key == "final_eval_samples") cfg.final_eval_samples = py::cast<int>(item.second);
    else if (key == "threads") cfg.threads = py::cast<int>(item.second);
    else throw std::invalid_argument("unknown train config field: " + key);
  }
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Gated linear attention in-context learning laboratory";

  py::class_<RngStream>(m, "RngStream")
      .def(py::init<std::uint64_t, std::uint64_t>(), py::arg("seed") = 0, py::arg("stream") = 0)
      .def("child", &RngStream::child)
      .def("uniform", py::overload_cast<>(&RngStream::uniform))
      .def("normal", &RngStream::normal);

  py::class_<Segment>(m, "Segment")
      .def(py::init([](int length, double corr) { return Segment{length, corr}; }),
           py::arg("length"), py::arg("query_corr"))
      .def_readwrite("length", &Segment::length)
      .def_readwrite("query_corr", &Segment::query_corr);

  py::class_<CorrelationStructure>(m, "CorrelationStructure")
      .def_readonly("R", &CorrelationStructure::R)
      .def_readonly("r", &CorrelationStructure::r)
      .def_property_readonly("n", &CorrelationStructure::n)
      .def_property_readonly("K", &CorrelationStructure::num_segments);

  m.def("build_correlation_structure", &make_structure, py::arg("segments"),
        py::arg("cross") = std::nullopt,
        "Expand per-segment (length, query_corr) pairs into (R, r)");

  py::class_<TaskEnsemble>(m, "TaskEnsemble")
      .def_readonly("B", &TaskEnsemble::B)
      .def_readonly("beta", &TaskEnsemble::beta);

  m.def("sample_task_ensemble", &sample_task_ensemble);

  py::class_<FeatureCovariance>(m, "FeatureCovariance")
      .def_static("identity", &FeatureCovariance::identity)
      .def_static("diagonal", &FeatureCovariance::diagonal)
      .def_static("general", &FeatureCovariance::general)
      .def_readonly("Sigma", &FeatureCovariance::Sigma);

  py::class_<MultiTaskPrompt>(m, "MultiTaskPrompt")
      .def_readonly("X", &MultiTaskPrompt::X)
      .def_readonly("y", &MultiTaskPrompt::y)
      .def_readonly("x_query", &MultiTaskPrompt::x_query)
      .def_readonly("y_query", &MultiTaskPrompt::y_query)
      .def_readonly("Z", &MultiTaskPrompt::Z)
      .def_readonly("delimiter_positions", &MultiTaskPrompt::delimiter_positions)
      .def_readonly("data_positions", &MultiTaskPrompt::data_positions)
      .def("to_csv", [](const MultiTaskPrompt& prompt) {
        std::ostringstream os;
        dump_prompt_csv(prompt, os);
        return os.str();
      });

  m.def("sample_contextual_vectors", &sample_contextual_vectors);
  m.def("sample_multitask_prompt", &sample_multitask_prompt, py::arg("ensemble"), py::arg("corr"),
        py::arg("cov"), py::arg("sigma"), py::arg("with_delimiters"), py::arg("contextual"),
        py::arg("rng"));
  m.def("empirical_correlation", &empirical_correlation);

  py::class_<GatingSpec>(m, "GatingSpec")
      .def_static("all_ones", &GatingSpec::all_ones)
      .def_static("scalar_linear", &GatingSpec::scalar_linear)
      .def_static("vector_linear", &GatingSpec::vector_linear)
      .def_static("explicit_matrices", &GatingSpec::explicit_matrices);

  py::class_<AttentionModel>(m, "AttentionModel")
      .def_readwrite("W_k", &AttentionModel::W_k)
      .def_readwrite("W_q", &AttentionModel::W_q)
      .def_readwrite("W_v", &AttentionModel::W_v)
      .def_readwrite("gating", &AttentionModel::gating)
      .def_readwrite("head", &AttentionModel::head);

  m.def("build_restricted", &build_restricted);
  m.def("build_delimiter", &build_delimiter);
  m.def("build_value_vector", &build_value_vector);
  m.def("build_delimiter_value_vector", &build_delimiter_value_vector);

  py::class_<GlaTrace>(m, "GlaTrace")
      .def_readonly("states", &GlaTrace::states)
      .def_readonly("outputs", &GlaTrace::outputs)
      .def_readonly("gates", &GlaTrace::gates);

  m.def("gla_forward", &gla_forward);
  m.def("gla_predict", &gla_predict);
  m.def("causal_linear_attention", &causal_linear_attention);
  m.def("induced_weighting", &induced_weighting);
  m.def("induced_weighting_with_head", &induced_weighting_with_head);
  m.def("gla_multilayer_forward", &gla_multilayer_forward);

  m.def("wpgd_predict",
        py::overload_cast<const Eigen::VectorXd&, const Eigen::MatrixXd&, const Eigen::VectorXd&,
                          const Eigen::MatrixXd&, const Eigen::MatrixXd&, const Eigen::MatrixXd&>(
            &wpgd_predict),
        py::arg("x"), py::arg("X"), py::arg("y"), py::arg("P1"), py::arg("P2"), py::arg("Omega"));
  m.def("wpgd_predict_scalar",
        py::overload_cast<const Eigen::VectorXd&, const Eigen::MatrixXd&, const Eigen::VectorXd&,
                          const Eigen::MatrixXd&, const Eigen::VectorXd&>(&wpgd_predict),
        py::arg("x"), py::arg("X"), py::arg("y"), py::arg("P"), py::arg("omega"));

  py::class_<RiskModel>(m, "RiskModel")
      .def_static("isotropic", &RiskModel::isotropic)
      .def_static("general", &RiskModel::general)
      .def_readonly("Sigma", &RiskModel::Sigma)
      .def_readonly("sigma", &RiskModel::sigma)
      .def_readonly("d", &RiskModel::d)
      .def_property_readonly("M", &RiskModel::M);

  m.def("closed_form_risk", &closed_form_risk);
  m.def("risk_gradient", &risk_gradient);

  py::class_<LandscapeSolution>(m, "LandscapeSolution")
      .def_readonly("gamma", &LandscapeSolution::gamma)
      .def_readonly("P", &LandscapeSolution::P)
      .def_readonly("omega", &LandscapeSolution::omega)
      .def_readonly("rescale", &LandscapeSolution::rescale)
      .def_readonly("risk", &LandscapeSolution::risk)
      .def_readonly("converged", &LandscapeSolution::converged)
      .def_readonly("residual", &LandscapeSolution::residual);

  m.def("optimal_wpgd", &optimal_wpgd);
  m.def("optimal_wpgd_risk_isotropic", &optimal_wpgd_risk_isotropic);

  py::class_<AttRiskResult>(m, "AttRiskResult")
      .def_readonly("att_risk", &AttRiskResult::att_risk)
      .def_readonly("gap_formula", &AttRiskResult::gap_formula)
      .def_readonly("gap_direct", &AttRiskResult::gap_direct);
  m.def("optimal_att_risk", &optimal_att_risk);

  py::class_<ConstrainedResult>(m, "ConstrainedResult")
      .def_readonly("segment_weights", &ConstrainedResult::segment_weights)
      .def_readonly("omega", &ConstrainedResult::omega)
      .def_readonly("P", &ConstrainedResult::P)
      .def_readonly("risk", &ConstrainedResult::risk);
  m.def("constrained_optimum", &constrained_optimum, py::arg("model"), py::arg("tol") = 1e-12,
        py::arg("max_outer") = 200);

  py::class_<VectorGatingRealization>(m, "VectorGatingRealization")
      .def_readonly("gates", &VectorGatingRealization::gates)
      .def_readonly("u", &VectorGatingRealization::u)
      .def_readonly("head", &VectorGatingRealization::head)
      .def_readonly("data_positions", &VectorGatingRealization::data_positions);
  m.def("realize_vector_gating", &realize_vector_gating);

  py::class_<RiskEstimate>(m, "RiskEstimate")
      .def_readonly("mean", &RiskEstimate::mean)
      .def_readonly("stderr", &RiskEstimate::stderr_);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("final_risk", &TrainResult::final_risk)
      .def_readonly("best_trial", &TrainResult::best_trial)
      .def_readonly("params", &TrainResult::params)
      .def_readonly("risk_history", &TrainResult::risk_history)
      .def_readonly("diverged", &TrainResult::diverged);

  m.def(
      "train",
      [](const py::kwargs& kwargs) { return train(make_train_config(kwargs)); },
      "Single training trial; keyword arguments mirror the CLI flags");
  m.def(
      "best_of_trials",
      [](const py::kwargs& kwargs) { return best_of_trials(make_train_config(kwargs)); },
      "Best of several independent training trials");
  m.def(
      "estimate_risk_mc",
      [](const Eigen::VectorXd& params, const Eigen::MatrixXd& contextual, int n_samples,
         std::uint64_t seed, const py::kwargs& kwargs) {
        const TrainConfig cfg = make_train_config(kwargs);
        return estimate_risk_mc(params, cfg, contextual, n_samples, RngStream(seed, 1));
      },
      py::arg("params"), py::arg("contextual"), py::arg("n_samples"), py::arg("seed"));

  m.def("run_verify", &run_verify, py::arg("suite"), py::arg("seed") = 0);
  m.def("verify_suites", &verify_suites);

  py::class_<VerifyCheck>(m, "VerifyCheck")
      .def_readonly("name", &VerifyCheck::name)
      .def_readonly("max_deviation", &VerifyCheck::max_deviation)
      .def_readonly("tolerance", &VerifyCheck::tolerance)
      .def_readonly("passed", &VerifyCheck::passed);
  py::class_<VerifyReport>(m, "VerifyReport")
      .def_readonly("suite", &VerifyReport::suite)
      .def_readonly("checks", &VerifyReport::checks)
      .def("passed", &VerifyReport::passed);

  py::class_<SweepRow>(m, "SweepRow")
      .def_readonly("n_bar", &SweepRow::n_bar)
      .def_readonly("theory_wpgd", &SweepRow::theory_wpgd)
      .def_readonly("theory_att", &SweepRow::theory_att)
      .def_readonly("theory_constrained", &SweepRow::theory_constrained)
      .def_readonly("trained_linatt", &SweepRow::trained_linatt)
      .def_readonly("trained_gla_scalar", &SweepRow::trained_gla_scalar)
      .def_readonly("trained_gla_wo", &SweepRow::trained_gla_wo)
      .def_readonly("trained_gla_vector", &SweepRow::trained_gla_vector);

  m.def(
      "run_sweep",
      [](int d, int p, int K, const std::vector<double>& correlations, double sigma,
         const std::vector<int>& nbar_axis, const std::vector<std::string>& variants, int trials,
         int iterations, int batch, double lr, std::uint64_t seed) {
        SweepConfig cfg;
        cfg.d = d;
        cfg.p = p;
        cfg.K = K;
        cfg.correlations = correlations;
        cfg.sigma = sigma;
        cfg.nbar_axis = nbar_axis;
        for (const auto& v : variants) cfg.train_variants.push_back(variant_from_name(v));
        cfg.trials = trials;
        cfg.iterations = iterations;
        cfg.batch = batch;
        cfg.lr = lr;
        cfg.seed = seed;
        return run_sweep(cfg);
      },
      py::arg("d") = 5, py::arg("p") = 5, py::arg("K") = 2,
      py::arg("correlations") = std::vector<double>{0.2, 0.8}, py::arg("sigma") = 0.0,
      py::arg("nbar_axis") = std::vector<int>{1, 2, 5, 10}, py::arg("variants") = std::vector<std::string>{},
      py::arg("trials") = 10, py::arg("iterations") = 10000, py::arg("batch") = 256,
      py::arg("lr") = 1e-3, py::arg("seed") = 0);

  m.def("sweep_csv", [](const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    write_sweep_csv(rows, os);
    return os.str();
  });
}
