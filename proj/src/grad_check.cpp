#include "dropforge/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dropforge/errors.hpp"
#include "dropforge/rng.hpp"

namespace dropforge {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

std::vector<std::size_t> pick_coordinates(std::size_t n, const GradCheckOptions& options, Rng& rng) {
  std::vector<std::size_t> coords;
  if (options.samples == 0 || options.samples >= n) {
    coords.resize(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    return coords;
  }
  for (std::size_t i = 0; i < options.samples; ++i) coords.push_back(rng.uniform_index(n));
  return coords;
}

}  // namespace

std::vector<double> grad_check_params(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                                      const GradCheckOptions& options) {
  if (options.steps.empty()) throw UsageError("grad_check: empty step ladder");
  for (auto& p : params) {
    if (!p.is_leaf()) throw UsageError("grad_check_params: parameters must be leaf tensors");
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    const Tensor l = loss();
    l.backward();
  }

  Rng rng(options.seed);
  std::vector<double> worst(params.size(), 0.0);
  NoGradGuard no_grad;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    const auto analytic = p.grad();
    auto values = p.mutable_data();
    for (auto i : pick_coordinates(values.size(), options, rng)) {
      const double saved = values[i];
      double best = std::numeric_limits<double>::infinity();
      for (double h : options.steps) {
        values[i] = saved + h;
        const double up = loss().item();
        values[i] = saved - h;
        const double down = loss().item();
        values[i] = saved;
        best = std::min(best, relative_error(analytic[i], (up - down) / (2.0 * h)));
      }
      worst[pi] = std::max(worst[pi], best);
    }
  }
  return worst;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  const GradCheckOptions& options) {
  Tensor leaf = x.detach();
  const auto errs = grad_check_params([&] { return f(leaf); }, {leaf}, options);
  return errs.front();
}

}  // namespace dropforge
