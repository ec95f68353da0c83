#pragma once

// Central finite-difference verification of analytic gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stance/tensor.hpp"

namespace stance {

struct FiniteDiffOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-5;
  // Coordinates sampled per parameter; all of them when the tensor is small.
  std::size_t max_coords = 64;
  std::uint64_t seed = 0;
  // Denominator floor of the relative error, so gradients that are zero up to
  // rounding are compared absolutely.
  double abs_floor = 1e-4;
  // Expected ratio analytic / numeric per parameter (1 when empty). A
  // gradient reversal path expects -lambda for parameters upstream of it.
  std::vector<double> expected_scale;
  // Optional fingerprint of the piecewise-linear regime (ReLU masks, pooling
  // argmaxes). Coordinates whose perturbation changes it sit on a kink and
  // are skipped.
  std::function<std::uint64_t()> activation_pattern;
};

struct ParameterCheck {
  std::string name;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool passed = true;
};

struct FiniteDiffReport {
  std::vector<ParameterCheck> parameters;

  bool passed() const {
    return std::all_of(parameters.begin(), parameters.end(),
                       [](const ParameterCheck& p) { return p.passed; });
  }
  double max_rel_error() const {
    double m = 0.0;
    for (const auto& p : parameters) m = std::max(m, p.max_rel_error);
    return m;
  }
  std::vector<std::string> failures() const {
    std::vector<std::string> out;
    for (const auto& p : parameters) {
      if (!p.passed) out.push_back(p.name);
    }
    return out;
  }
};

inline double relative_error(double analytic, double numeric, double floor) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

// `loss` must be deterministic and read parameter values in place. Analytic
// gradients are read from Parameter::grad, which must already be populated.
inline FiniteDiffReport finite_diff_check(const std::function<double()>& loss,
                                          std::span<Parameter* const> params,
                                          const FiniteDiffOptions& opts = {}) {
  FiniteDiffReport report;
  Rng rng(opts.seed);
  std::uint64_t base_pattern = 0;
  if (opts.activation_pattern) {
    loss();
    base_pattern = opts.activation_pattern();
  }
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    const double scale =
        opts.expected_scale.empty() ? 1.0 : opts.expected_scale.at(pi);
    ParameterCheck check;
    check.name = p.name;

    std::vector<std::size_t> coords(p.value.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (coords.size() > opts.max_coords) {
      rng.shuffle(coords);
      coords.resize(opts.max_coords);
      std::sort(coords.begin(), coords.end());
    }

    for (std::size_t idx : coords) {
      double& theta = p.value.data[idx];
      const double saved = theta;
      theta = saved + opts.epsilon;
      const double up = loss();
      const bool kink_up = opts.activation_pattern &&
                           opts.activation_pattern() != base_pattern;
      theta = saved - opts.epsilon;
      const double down = loss();
      const bool kink_down = opts.activation_pattern &&
                             opts.activation_pattern() != base_pattern;
      theta = saved;
      if (kink_up || kink_down) {
        ++check.skipped_kinks;
        continue;
      }
      const double numeric = scale * (up - down) / (2.0 * opts.epsilon);
      const double analytic = p.grad.data[idx];
      const double rel = relative_error(analytic, numeric, opts.abs_floor);
      check.max_rel_error = std::max(check.max_rel_error, rel);
      check.max_abs_error =
          std::max(check.max_abs_error, std::abs(analytic - numeric));
      ++check.checked;
      if (!(rel < opts.tolerance)) check.passed = false;
    }
    report.parameters.push_back(std::move(check));
  }
  return report;
}

}  // namespace stance
