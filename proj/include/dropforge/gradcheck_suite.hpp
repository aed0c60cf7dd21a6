#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "dropforge/losses.hpp"
#include "dropforge/net.hpp"

namespace dropforge {

struct GradCheckRow {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
};

struct GradCheckSuiteOptions {
  ModelConfig network;  // end-to-end network; small c keeps the run short
  LossWeights weights;
  std::uint64_t seed = 0;
  std::size_t network_samples = 6;  // coordinates per parameter tensor
  bool include_network = true;
};

/// Default end-to-end network for the suite: 32x32, T=5, c=8.
ModelConfig gradcheck_network_config();

/// Finite-difference checks of every differentiable op, each network block,
/// the losses and the whole network under the weighted frame loss.
std::vector<GradCheckRow> run_gradcheck_suite(const GradCheckSuiteOptions& options);

void print_gradcheck_table(std::ostream& os, const std::vector<GradCheckRow>& rows, double threshold);

}  // namespace dropforge
