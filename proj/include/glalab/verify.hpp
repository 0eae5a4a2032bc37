#pragma once

#include <string>
#include <vector>

#include "glalab/rng.hpp"

namespace glalab {

struct VerifyCheck {
  std::string name;
  double max_deviation = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct VerifyReport {
  std::string suite;
  std::vector<VerifyCheck> checks;
  bool passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }
};

// Randomized invariant suites: "equivalence" (GLA vs WPGD, single and multi
// layer), "landscape" (fixed point, closed forms, ordering), "gradients"
// (analytic vs central finite differences), "moments" (Gaussian quartic
// identity and sampler moments).
VerifyReport run_verify(const std::string& suite, std::uint64_t seed);

std::vector<std::string> verify_suites();

}  // namespace glalab
