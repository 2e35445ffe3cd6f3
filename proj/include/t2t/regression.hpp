// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace t2t {

// A pinned model/problem pair that must reach a quality bar.
struct RegressionSpec {
  std::string problem;
  std::string model = "transformer";
  std::string hparams_set;
  int steps = 0;
  std::string metric = "token_accuracy";
  double threshold = 0.0;
};

struct RegressionResult {
  RegressionSpec spec;
  double value = 0.0;
  bool pass = false;
  std::string error;  // set when the run itself failed
};

// The built-in gates: copy and reverse on transformer_tiny.
std::vector<RegressionSpec> default_regression_specs();

std::vector<RegressionSpec> regression_specs_from_json(const nlohmann::json& j);

// Generates data (if absent) and trains each spec under work_dir, then
// compares the final dev metric against the threshold.
std::vector<RegressionResult> run_regression(const std::vector<RegressionSpec>& specs,
                                             const std::filesystem::path& work_dir,
                                             std::uint64_t seed);

bool all_passed(const std::vector<RegressionResult>& results);
// [{spec, metric, threshold, value, pass}, ...]
nlohmann::json regression_report(const std::vector<RegressionResult>& results);

}  // namespace t2t
