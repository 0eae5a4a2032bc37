#pragma once

#include <string>

#include <Eigen/Core>

#include "glalab/trainer.hpp"

namespace glalab {

struct Checkpoint {
  Variant variant = Variant::GlaScalar;
  int layers = 1;
  int d = 0, p = 0, K = 0;
  Eigen::VectorXd params;
};

// Flat little-endian binary: 8-byte magic "GLALABCP", u32 version, u32
// variant tag, u32 layers/d/p/K, u64 count, then count doubles.
void save_checkpoint(const std::string& path, const TrainConfig& cfg,
                     const Eigen::VectorXd& params);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace glalab
