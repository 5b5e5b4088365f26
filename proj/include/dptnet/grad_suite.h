// Copyright 2026 The dptnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dptnet/dual_path.h"
#include "dptnet/numerics/grad_check.h"

namespace dptnet {

// Registry of finite-difference checks over every differentiable op and the
// full separate -> uPIT composition. Shared by the command-line tool and the
// acceptance suite. All checks run in double precision.

// N=8, L=2, B=1, h=2, K=4, S=2.
SeparatorConfig toy_grad_config();

struct GradSuiteOptions {
  int seeds = 10;
  std::uint64_t first_seed = 0;
  double eps = 1e-5;
  double tolerance = 1e-4;
  // See GradCheckOptions::freeze_relu. The standalone relu case always runs
  // unfrozen on inputs away from zero.
  bool freeze_relu = true;
  // Architecture and input length of the end-to-end case.
  SeparatorConfig model = toy_grad_config();
  Index samples = 32;
  // Coordinates sampled per parameter tensor in the end-to-end case.
  Index coords_per_tensor = 6;
  // Adds a case whose backward is deliberately wrong (negative control).
  bool inject_bug = false;
};

struct GradCaseResult {
  std::string name;
  std::uint64_t seed = 0;
  GradCheckReport report;
  bool passed = false;
};

struct GradSuiteReport {
  std::vector<GradCaseResult> results;
  double worst_error = 0.0;
  Index checked = 0;
  std::string worst_case;
  bool passed = true;
};

std::vector<std::string> gradient_case_names(bool inject_bug = false);

using GradCaseCallback = std::function<void(const GradCaseResult&)>;

GradSuiteReport run_gradient_suite(const GradSuiteOptions& options,
                                   const GradCaseCallback& on_result = {});

}  // namespace dptnet
