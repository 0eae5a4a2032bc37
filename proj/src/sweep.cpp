#include "glalab/sweep.hpp"

#include <cstdio>
#include <stdexcept>

#include "glalab/landscape.hpp"

namespace glalab {

namespace {

TrainConfig train_config_for(const SweepConfig& cfg, Variant variant, int n_bar) {
  TrainConfig tc;
  tc.variant = variant;
  tc.d = cfg.d;
  tc.p = cfg.p;
  tc.segment_lengths.assign(static_cast<size_t>(cfg.K), n_bar);
  tc.correlations = cfg.correlations;
  tc.sigma = cfg.sigma;
  tc.batch = cfg.batch;
  tc.iterations = cfg.iterations;
  tc.trials = cfg.trials;
  tc.lr = cfg.lr;
  tc.gate_update = cfg.gate_update;
  tc.seed = cfg.seed;
  tc.threads = cfg.threads;
  return tc;
}

std::string format17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::vector<SweepRow> run_sweep(const SweepConfig& cfg) {
  if (cfg.nbar_axis.empty()) throw std::invalid_argument("empty sweep axis");
  if (static_cast<int>(cfg.correlations.size()) != cfg.K)
    throw std::invalid_argument("need one correlation per segment");
  std::vector<SweepRow> rows;
  rows.reserve(cfg.nbar_axis.size());
  for (int n_bar : cfg.nbar_axis) {
    if (n_bar < 0) throw std::invalid_argument("invalid axis value");
    SweepRow row;
    row.n_bar = n_bar;

    std::vector<Segment> segs;
    for (int k = 0; k < cfg.K; ++k)
      segs.push_back({n_bar, cfg.correlations[static_cast<size_t>(k)]});
    const CorrelationStructure corr = build_correlation_structure(segs);
    const RiskModel model = RiskModel::isotropic(cfg.d, cfg.sigma, corr);
    const double inv_d = 1.0 / cfg.d;
    row.theory_wpgd = optimal_wpgd_risk_isotropic(model) * inv_d;
    row.theory_att = optimal_att_risk(model).att_risk * inv_d;
    row.theory_constrained = constrained_optimum(model).risk * inv_d;

    for (Variant v : cfg.train_variants) {
      const TrainResult result = best_of_trials(train_config_for(cfg, v, n_bar));
      const double risk = result.final_risk.mean * inv_d;
      switch (v) {
        case Variant::LinAtt: row.trained_linatt = risk; break;
        case Variant::GlaScalar: row.trained_gla_scalar = risk; break;
        case Variant::GlaScalarNoDelim: row.trained_gla_wo = risk; break;
        case Variant::GlaVector: row.trained_gla_vector = risk; break;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& os) {
  os << "n_bar,theory_wpgd,theory_att,theory_constrained,trained_linatt,"
        "trained_gla_scalar,trained_gla_wo,trained_gla_vector\n";
  for (const auto& row : rows) {
    os << row.n_bar << ',' << format17(row.theory_wpgd) << ',' << format17(row.theory_att) << ','
       << format17(row.theory_constrained);
    for (const auto& maybe : {row.trained_linatt, row.trained_gla_scalar, row.trained_gla_wo,
                              row.trained_gla_vector}) {
      os << ',';
      if (maybe) os << format17(*maybe);
    }
    os << '\n';
  }
}

}  // namespace glalab
