#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "elnet/tensor.hpp"

namespace elnet {

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
};

// Checks the recorded backward rule of a scalar-valued function against
// central differences at 64-bit precision. `fn` must rebuild the graph from
// the given leaf on every call; other inputs it closes over stay fixed.
//
// Error metric per coordinate: |analytic - numeric| / max(|analytic|,
// |numeric|, 1), i.e. relative for large values and absolute near zero.
inline GradCheckReport grad_check(
    const std::function<TensorD(const TensorD&)>& fn, const TensorD& input,
    double tolerance, double step = 1e-4) {
  TensorD leaf = input.clone_detached(/*requires_grad=*/true);
  TensorD loss = fn(leaf);
  if (loss.numel() != 1)
    throw std::invalid_argument("grad_check: fn must return a scalar");
  if (!all_finite(loss))
    throw std::runtime_error("grad_check: non-finite loss value");
  backward(loss);
  const std::vector<double> analytic = leaf.grad();
  for (double g : analytic)
    if (!std::isfinite(g))
      throw std::runtime_error("grad_check: non-finite analytic gradient");

  GradCheckReport report;
  for (size_t i = 0; i < analytic.size(); ++i) {
    TensorD probe = input.clone_detached(false);
    probe.values()[i] = input.values()[i] + step;
    const double up = fn(probe).scalar();
    probe.values()[i] = input.values()[i] - step;
    const double down = fn(probe).scalar();
    if (!std::isfinite(up) || !std::isfinite(down))
      throw std::runtime_error("grad_check: non-finite probe value");
    const double numeric = (up - down) / (2.0 * step);
    const double denom =
        std::max({std::fabs(analytic[i]), std::fabs(numeric), 1.0});
    const double rel = std::fabs(analytic[i] - numeric) / denom;
    if (rel > report.max_rel_err) report.max_rel_err = rel;
  }
  report.pass = report.max_rel_err < tolerance;
  return report;
}

}  // namespace elnet
