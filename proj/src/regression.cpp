// SPDX-License-Identifier: Apache-2.0
#include "t2t/regression.hpp"

#include <stdexcept>

#include "t2t/problem.hpp"
#include "t2t/training.hpp"

namespace t2t {
namespace {

std::string spec_name(const RegressionSpec& s) {
  return s.problem + "/" + s.model + "/" + s.hparams_set + "@" + std::to_string(s.steps);
}

}  // namespace

std::vector<RegressionSpec> default_regression_specs() {
  return {
      {"translate_copy", "transformer", "transformer_tiny", 2000, "token_accuracy", 0.99},
      {"translate_reverse", "transformer", "transformer_tiny", 5000, "token_accuracy", 0.95},
  };
}

std::vector<RegressionSpec> regression_specs_from_json(const nlohmann::json& j) {
  std::vector<RegressionSpec> specs;
  for (const auto& item : j) {
    RegressionSpec s;
    s.problem = item.at("problem").get<std::string>();
    s.model = item.value("model", std::string("transformer"));
    s.hparams_set = item.at("hparams_set").get<std::string>();
    s.steps = item.at("steps").get<int>();
    s.metric = item.value("metric", std::string("token_accuracy"));
    s.threshold = item.at("threshold").get<double>();
    specs.push_back(std::move(s));
  }
  return specs;
}

std::vector<RegressionResult> run_regression(const std::vector<RegressionSpec>& specs,
                                             const std::filesystem::path& work_dir,
                                             std::uint64_t seed) {
  std::vector<RegressionResult> results;
  for (const RegressionSpec& spec : specs) {
    RegressionResult r{spec, 0.0, false, {}};
    try {
      if (spec.metric != "token_accuracy") {
        throw std::invalid_argument("unsupported metric '" + spec.metric + "'");
      }
      const auto problem = find_problem(spec.problem);
      HParams hp = hparams_registry().get(spec.hparams_set);
      hp.train_steps = spec.steps;
      const auto data_dir = work_dir / "data";
      if (!std::filesystem::exists(problem->directory(data_dir) / "vocab.txt")) {
        problem->generate(data_dir, seed, hp);
      }
      RunConfig config;
      config.seed = seed;
      config.checkpoint_every = std::max(1, spec.steps);
      config.keep_last = 1;
      const TrainResult tr = train(*problem, spec.model, hp, data_dir,
                                   work_dir / (spec.problem + "-" + spec.hparams_set), config);
      r.value = tr.final_eval.token_accuracy();
      r.pass = r.value >= spec.threshold;
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    results.push_back(std::move(r));
  }
  return results;
}

bool all_passed(const std::vector<RegressionResult>& results) {
  for (const auto& r : results) {
    if (!r.pass) return false;
  }
  return true;
}

nlohmann::json regression_report(const std::vector<RegressionResult>& results) {
  nlohmann::json report = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json j = {{"spec", spec_name(r.spec)},
                        {"metric", r.spec.metric},
                        {"threshold", r.spec.threshold},
                        {"value", r.value},
                        {"pass", r.pass}};
    if (!r.error.empty()) j["error"] = r.error;
    report.push_back(std::move(j));
  }
  return report;
}

}  // namespace t2t
