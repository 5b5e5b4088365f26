// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <functional>

#include "dptnet/numerics/tensor.h"

namespace dptnet {

using ScalarFn = std::function<Tensor<double>(const Tensor<double>&)>;

struct GradCheckOptions {
  double eps = 1e-5;
  // Check at most this many coordinates (chosen with `seed`); 0 checks all.
  Index max_coords = 0;
  std::uint64_t seed = 0;
  // Denominator floor, relative to max(1, |f(x)|). Central differences carry
  // round-off of order 1e-16 |f| / eps (more when f sums many terms), so
  // gradients that are exactly zero are compared in absolute terms.
  double floor = 1e-5;
  // Replays the ReLU activation pattern of the analytic pass during the
  // finite differences, so a step that would cross a kink stays on the
  // linear piece containing x (where the analytic gradient is defined).
  bool freeze_relu = false;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  Index checked = 0;
};

// Compares the tape gradient of the scalar f(x) w.r.t. x with central
// differences. The per-coordinate error is
//   |analytic - numeric| / max(|analytic|, |numeric|, floor * max(1, |f(x)|))
// and the report carries the worst coordinate.
//
// `x` is perturbed in place and restored; `f` may ignore its argument and
// read x through a captured handle (used for model parameters).
GradCheckReport grad_check_report(const ScalarFn& f, Tensor<double> x,
                                  const GradCheckOptions& options = {});

inline double grad_check(const ScalarFn& f, Tensor<double> x, double eps = 1e-5) {
  GradCheckOptions options;
  options.eps = eps;
  return grad_check_report(f, std::move(x), options).max_rel_error;
}

}  // namespace dptnet
