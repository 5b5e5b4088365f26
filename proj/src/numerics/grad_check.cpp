// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dptnet/numerics/grad_check.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "dptnet/numerics/ops.h"
#include "dptnet/numerics/tape.h"

namespace dptnet {

GradCheckReport grad_check_report(const ScalarFn& f, Tensor<double> x,
                                  const GradCheckOptions& options) {
  const bool had_grad_flag = x.requires_grad();
  x.set_requires_grad(true);
  x.release_grad();

  std::vector<double> analytic;
  ops::ReluPattern pattern;
  double value = 0.0;
  {
    Tape<double> tape;
    TapeScope<double> scope(&tape);
    ops::ReluPatternScope record(options.freeze_relu ? &pattern : nullptr,
                                 ops::ReluPatternScope::Mode::kRecord);
    const Tensor<double> loss = f(x);
    value = loss.item();
    tape.backward(loss);
    analytic.assign(x.grad().begin(), x.grad().end());
  }
  x.release_grad();
  x.set_requires_grad(had_grad_flag);

  std::vector<Index> coords(static_cast<std::size_t>(x.size()));
  std::iota(coords.begin(), coords.end(), Index{0});
  if (options.max_coords > 0 && options.max_coords < x.size()) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(static_cast<std::size_t>(options.max_coords));
    std::sort(coords.begin(), coords.end());
  }

  const double floor = options.floor * std::max(1.0, std::abs(value));
  GradCheckReport report;
  NoGradScope<double> no_grad;
  auto values = x.mutable_data();
  auto eval = [&]() {
    ops::ReluPatternScope replay(options.freeze_relu ? &pattern : nullptr,
                                 ops::ReluPatternScope::Mode::kReplay);
    return f(x).item();
  };
  for (Index i : coords) {
    const double saved = values[i];
    values[i] = saved + options.eps;
    const double up = eval();
    values[i] = saved - options.eps;
    const double down = eval();
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * options.eps);
    const double a = analytic[static_cast<std::size_t>(i)];
    const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
    ++report.checked;
    if (err > report.max_rel_error || report.worst_index < 0) {
      report.max_rel_error = err;
      report.worst_index = i;
      report.analytic = a;
      report.numeric = numeric;
    }
  }
  return report;
}

}  // namespace dptnet
