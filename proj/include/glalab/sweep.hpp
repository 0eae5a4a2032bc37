#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "glalab/trainer.hpp"

namespace glalab {

struct SweepConfig {
  int d = 5;
  int p = 5;
  int K = 2;
  std::vector<double> correlations = {0.2, 0.8};
  double sigma = 0.0;
  std::vector<int> nbar_axis;            // per-segment context lengths to sweep
  std::vector<Variant> train_variants;   // empty = theory only
  int trials = 10;
  int iterations = 10000;
  int batch = 256;
  double lr = 1e-3;
  GateUpdate gate_update = GateUpdate::Plain;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct SweepRow {
  int n_bar = 0;
  double theory_wpgd = 0.0;
  double theory_att = 0.0;
  double theory_constrained = 0.0;
  std::optional<double> trained_linatt;
  std::optional<double> trained_gla_scalar;
  std::optional<double> trained_gla_wo;
  std::optional<double> trained_gla_vector;
};

// One row per n_bar: theory risks always, trained best-of-trials risks for
// the requested variants. All risks are normalized by d.
std::vector<SweepRow> run_sweep(const SweepConfig& cfg);

// Header: n_bar,theory_wpgd,theory_att,theory_constrained,trained_linatt,
// trained_gla_scalar,trained_gla_wo,trained_gla_vector. Numbers carry 17
// significant digits so a rerun is byte-identical.
void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& os);

}  // namespace glalab
