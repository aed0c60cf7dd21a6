#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "dropforge/tensor.hpp"

namespace dropforge {

struct GradCheckOptions {
  // Central-difference step ladder. Each coordinate reports its best agreement
  // over the ladder: large steps escape rounding noise on tiny derivatives,
  // small steps stay clear of relu kinks. An incorrect analytic gradient
  // disagrees at every step.
  std::vector<double> steps = {1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
  // Coordinates sampled per tensor; 0 checks every coordinate.
  std::size_t samples = 0;
  std::uint64_t seed = 0;
};

/// |analytic - fd| / max(|analytic|, |fd|, 1e-8)
double relative_error(double analytic, double numeric);

/// Max relative error between the analytic gradient of scalar f at x and a
/// central finite difference.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  const GradCheckOptions& options = {});

/// Same check for a closure over several leaf tensors, perturbed in place.
/// Returns the max relative error per tensor.
std::vector<double> grad_check_params(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                                      const GradCheckOptions& options = {});

}  // namespace dropforge
