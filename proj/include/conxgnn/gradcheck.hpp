#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "conxgnn/model.hpp"

namespace conxgnn {

struct GradCheckConfig {
  int instances = 20;
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  /// Random single-entry probes per parameter, on top of one random
  /// directional probe.
  int entries_per_parameter = 2;
  std::uint64_t seed = 2024;
};

struct GradCheckFailure {
  int instance = 0;
  std::string parameter;
  std::string probe;  // "direction" or "entry(r,c)"
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct GradCheckReport {
  std::size_t probes = 0;
  std::size_t parameters_checked = 0;
  double max_relative_error = 0.0;
  std::vector<GradCheckFailure> failures;

  bool passed() const { return failures.empty() && probes > 0; }
};

/// |a - n| / max(|a|, |n|, 1e-6)
double gradient_relative_error(double analytic, double numeric);

/// Central differences of `f` around `x` along `direction`.
double directional_difference(const std::function<double()>& f, Matrix& x, const Matrix& direction, double epsilon);

/// Checks every trainable parameter of small random models against central
/// differences of the full training loss (CBCE + mu * CBFC). Graph edge
/// weights are data, so graphs are built once per instance and then frozen.
GradCheckReport run_gradient_suite(const GradCheckConfig& config = {});

}  // namespace conxgnn
