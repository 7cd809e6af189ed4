#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "noisegeom/config.hpp"

namespace noisegeom {

struct VerifySettings {
  std::string theorem;
  Index d = 50;
  Index n = 500;
  Index thetas = 20;
  /// Nominal epsilon; 0 picks the documented default (0.2 when n >= 40 d, else 0.5).
  double epsilon = 0.0;
  std::string model;  // empty picks the theorem's family
  Index m = 10;
  double slope = 0.1;
  Index directions = 10;  // random unit directions per theta
  Index k = 5;            // top-k eigen-directions per theta
  // Escape theorems.
  Index escape_d = 1000;
  Index escape_n = 10000;
  double srk_sq = 5.0;
  double beta = 1.2;
  Index reps = 50;
  Index steps = 50;
  Index t_from = 20;
  double escape_slack = 0.25;
  std::uint64_t seed = 0;
};

struct VerificationReport {
  std::string theorem;
  std::string metric;
  Json settings = Json::object();
  double epsilon = 0.0;
  std::optional<double> lower;
  std::optional<double> upper;
  double observed_min = 0.0;
  double observed_max = 0.0;
  double observed_mean = 0.0;
  std::vector<double> values;
  bool pass = false;

  Json to_json() const;
};

std::vector<std::string> theorem_ids();
double default_epsilon(Index n, Index d);

/// Runs the desk-scale check for one theorem. Failures are reported, not thrown.
VerificationReport verify_theorem(const VerifySettings& settings);

/// Pass rule used by every report: (lower absent or min >= lower) and (upper absent or max <= upper).
bool evaluate_pass(const Json& report);

}  // namespace noisegeom
