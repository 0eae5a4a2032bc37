#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "glalab/checkpoint.hpp"
#include "glalab/landscape.hpp"
#include "glalab/sweep.hpp"
#include "glalab/trainer.hpp"
#include "glalab/verify.hpp"

namespace {

struct CommonOpts {
  int d = 5;
  int p = 5;
  int k = 2;
  std::vector<int> seg_lens;
  std::vector<double> corr = {0.2, 0.8};
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--d", opts.d, "Feature dimension");
  cmd->add_option("--p", opts.p, "Contextual feature dimension");
  cmd->add_option("--k", opts.k, "Number of task segments");
  cmd->add_option("--seg-lens", opts.seg_lens, "Per-segment context lengths")->delimiter(',');
  cmd->add_option("--corr", opts.corr, "Per-segment task-query correlations")->delimiter(',');
  cmd->add_option("--sigma", opts.sigma, "Label noise level");
  cmd->add_option("--seed", opts.seed, "Base RNG seed")->envname("GLALAB_SEED");
}

std::vector<int> seg_lens_or_default(const CommonOpts& opts, int fallback) {
  if (!opts.seg_lens.empty()) return opts.seg_lens;
  return std::vector<int>(static_cast<size_t>(opts.k), fallback);
}

glalab::CorrelationStructure structure_from(const CommonOpts& opts, const std::vector<int>& lens) {
  std::vector<glalab::Segment> segs;
  for (size_t i = 0; i < lens.size(); ++i)
    segs.push_back({lens[i], opts.corr.at(i)});
  return glalab::build_correlation_structure(segs);
}

int run_verify_cmd(const std::string& suite, std::uint64_t seed) {
  std::vector<std::string> suites =
      suite == "all" ? glalab::verify_suites() : std::vector<std::string>{suite};
  bool ok = true;
  for (const auto& name : suites) {
    const glalab::VerifyReport report = glalab::run_verify(name, seed);
    for (const auto& c : report.checks) {
      std::printf("[%s] %s/%s: max deviation %.3e (tolerance %.3e)\n",
                  c.passed ? "PASS" : "FAIL", report.suite.c_str(), c.name.c_str(),
                  c.max_deviation, c.tolerance);
      ok = ok && c.passed;
    }
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gated linear attention in-context learning laboratory"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a key=value file with [section] headers");

  // verify
  auto* verify = app.add_subcommand("verify", "Run a randomized verification suite");
  std::string suite = "all";
  std::uint64_t verify_seed = 0;
  verify->add_option("--suite", suite, "equivalence|landscape|gradients|moments|all");
  verify->add_option("--seed", verify_seed, "Suite seed")->envname("GLALAB_SEED");

  // landscape
  auto* landscape = app.add_subcommand("landscape", "Solve the analytic risk landscape");
  CommonOpts lopts;
  add_common(landscape, lopts);
  int lnbar = 10;
  std::string lout;
  landscape->add_option("--nbar", lnbar, "Per-segment context length");
  landscape->add_option("--out", lout, "Also write the report to a file");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model, best of several trials");
  CommonOpts topts;
  add_common(train_cmd, topts);
  std::string variant = "gla_scalar";
  int trials = 10, iters = 10000, batch = 256, layers = 1, nbar = 10, threads = 1;
  double lr = 1e-3;
  bool normalized_gates = false;
  std::string ckpt_out;
  train_cmd->add_option("--variant", variant, "linatt|gla_scalar|gla_wo|gla_vector");
  train_cmd->add_option("--nbar", nbar, "Per-segment context length");
  train_cmd->add_option("--trials", trials, "Independent trials");
  train_cmd->add_option("--iters", iters, "Adam iterations");
  train_cmd->add_option("--batch", batch, "Minibatch size");
  train_cmd->add_option("--lr", lr, "Learning rate");
  train_cmd->add_option("--layers", layers, "GLA layers");
  train_cmd->add_option("--threads", threads, "Worker threads across trials");
  train_cmd->add_flag("--normalized-gates", normalized_gates,
                      "Normalize the gate-parameter gradient before each step");
  train_cmd->add_option("--out", ckpt_out, "Checkpoint output path");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Theory and training curves over context lengths");
  CommonOpts sopts;
  add_common(sweep_cmd, sopts);
  std::vector<int> nbar_axis;
  std::vector<std::string> sweep_variants;
  int s_trials = 10, s_iters = 10000, s_batch = 256, s_threads = 1;
  double s_lr = 1e-3;
  bool s_normalized = false;
  std::string sweep_out;
  sweep_cmd->add_option("--nbar-axis", nbar_axis, "Context lengths to sweep")->delimiter(',');
  sweep_cmd->add_option("--variant", sweep_variants,
                        "Variants to train (theory-only when omitted)")
      ->delimiter(',');
  sweep_cmd->add_option("--trials", s_trials, "Trials per trained point");
  sweep_cmd->add_option("--iters", s_iters, "Adam iterations");
  sweep_cmd->add_option("--batch", s_batch, "Minibatch size");
  sweep_cmd->add_option("--lr", s_lr, "Learning rate");
  sweep_cmd->add_option("--threads", s_threads, "Worker threads across trials");
  sweep_cmd->add_flag("--normalized-gates", s_normalized, "Normalized gate updates");
  sweep_cmd->add_option("--out", sweep_out, "CSV output path (stdout when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*verify) return run_verify_cmd(suite, verify_seed);

    if (*landscape) {
      const auto lens = seg_lens_or_default(lopts, lnbar);
      const auto corr = structure_from(lopts, lens);
      const glalab::RiskModel model = glalab::RiskModel::isotropic(lopts.d, lopts.sigma, corr);
      const glalab::LandscapeSolution sol = glalab::optimal_wpgd(model);
      const glalab::ConstrainedResult cons = glalab::constrained_optimum(model);
      const glalab::AttRiskResult att = glalab::optimal_att_risk(model);
      std::string report;
      char buf[256];
      auto emit = [&](const char* key, double value) {
        std::snprintf(buf, sizeof(buf), "%s=%.17g\n", key, value);
        report += buf;
      };
      emit("gamma_star", sol.gamma);
      emit("fixed_point_residual", sol.residual);
      emit("h2_at_gamma_star", sol.h2_at_gamma);
      emit("rescale", sol.rescale);
      emit("risk_wpgd", sol.risk);
      emit("risk_wpgd_fast_path", glalab::optimal_wpgd_risk_isotropic(model));
      emit("risk_constrained", cons.risk);
      emit("risk_att", att.att_risk);
      emit("gating_gap", att.gap_formula);
      for (int k = 0; k < cons.segment_weights.size(); ++k) {
        std::snprintf(buf, sizeof(buf), "constrained_weight_%d=%.17g\n", k,
                      cons.segment_weights(k));
        report += buf;
      }
      emit("normalized_risk_wpgd", sol.risk / lopts.d);
      emit("normalized_risk_constrained", cons.risk / lopts.d);
      emit("normalized_risk_att", att.att_risk / lopts.d);
      std::fputs(report.c_str(), stdout);
      if (!lout.empty()) {
        std::ofstream os(lout);
        os << report;
      }
      return 0;
    }

    if (*train_cmd) {
      glalab::TrainConfig cfg;
      cfg.variant = glalab::variant_from_name(variant);
      cfg.d = topts.d;
      cfg.p = topts.p;
      cfg.segment_lengths = seg_lens_or_default(topts, nbar);
      cfg.correlations = topts.corr;
      cfg.sigma = topts.sigma;
      cfg.layers = layers;
      cfg.batch = batch;
      cfg.iterations = iters;
      cfg.trials = trials;
      cfg.lr = lr;
      cfg.gate_update =
          normalized_gates ? glalab::GateUpdate::Normalized : glalab::GateUpdate::Plain;
      cfg.seed = topts.seed;
      cfg.threads = threads;
      const glalab::TrainResult result = glalab::best_of_trials(cfg);
      std::printf("best_trial=%d\n", result.best_trial);
      std::printf("final_risk=%.17g\n", result.final_risk.mean);
      std::printf("final_risk_stderr=%.17g\n", result.final_risk.stderr_);
      std::printf("final_risk_normalized=%.17g\n", result.final_risk.mean / cfg.d);
      for (const auto& [it, risk] : result.risk_history)
        std::printf("risk_at_%d=%.17g\n", it, risk);
      if (!ckpt_out.empty()) {
        glalab::save_checkpoint(ckpt_out, cfg, result.params);
        std::printf("checkpoint=%s\n", ckpt_out.c_str());
      }
      return 0;
    }

    if (*sweep_cmd) {
      glalab::SweepConfig cfg;
      cfg.d = sopts.d;
      cfg.p = sopts.p;
      cfg.K = sopts.k;
      cfg.correlations = sopts.corr;
      cfg.sigma = sopts.sigma;
      cfg.nbar_axis = nbar_axis.empty() ? std::vector<int>{1, 2, 5, 10, 20, 50} : nbar_axis;
      for (const auto& name : sweep_variants)
        cfg.train_variants.push_back(glalab::variant_from_name(name));
      cfg.trials = s_trials;
      cfg.iterations = s_iters;
      cfg.batch = s_batch;
      cfg.lr = s_lr;
      cfg.gate_update =
          s_normalized ? glalab::GateUpdate::Normalized : glalab::GateUpdate::Plain;
      cfg.seed = sopts.seed;
      cfg.threads = s_threads;
      const auto rows = glalab::run_sweep(cfg);
      if (sweep_out.empty()) {
        glalab::write_sweep_csv(rows, std::cout);
      } else {
        std::ofstream os(sweep_out, std::ios::binary);
        glalab::write_sweep_csv(rows, os);
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
