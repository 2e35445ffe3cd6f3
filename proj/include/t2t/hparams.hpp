// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

namespace t2t {

// Every knob of a run: model shape, data generation and batching,
// optimizer, training cadence and decoding defaults.
struct HParams {
  std::string set_name;
  int version = 1;

  // model
  int num_layers = 2;
  int d_model = 64;
  int num_heads = 4;
  int d_ff = 256;
  double dropout = 0.1;
  bool share_embeddings = true;
  bool pre_norm = false;
  double layer_norm_epsilon = 1e-6;

  // data generation and input pipeline
  int num_train_examples = 4000;
  int num_dev_examples = 200;
  int min_source_words = 1;
  int max_source_words = 7;
  int bpe_merges = 8000;
  int batch_size = 256;  // tokens per batch, padding included
  int min_length = 8;
  int max_length = 256;

  // optimizer
  double learning_rate = 1.0;  // multiplier on the warmup schedule
  int warmup_steps = 400;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.997;
  double adam_epsilon = 1e-9;

  // training loop
  int train_steps = 2000;
  int eval_every = 500;

  // decoding
  int beam_size = 4;
  double alpha = 0.6;
  int extra_length = 50;
};

using HParamValue = std::variant<int HParams::*, double HParams::*, bool HParams::*>;

struct HParamField {
  std::string_view name;
  HParamValue member;
};

const std::vector<HParamField>& hparam_fields();

void set_hparam(HParams& hp, std::string_view key, std::string_view value);
// "key=value,key=value"; unknown keys are errors.
void apply_overrides(HParams& hp, std::string_view overrides);
// Compares every knob, ignoring set_name and version.
bool same_values(const HParams& a, const HParams& b);

nlohmann::json to_json(const HParams& hp);
HParams hparams_from_json(const nlohmann::json& j);

// Named, versioned hparams sets. A registered (name, version) is frozen:
// registering it again with different values throws.
class HParamsRegistry {
 public:
  void add(const std::string& name, int version, HParams hp);
  // Latest version when version < 0.
  HParams get(const std::string& name, int version = -1) const;
  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::pair<std::string, int>, HParams> sets_;
};

// Process-wide registry holding the built-in sets.
HParamsRegistry& hparams_registry();

}  // namespace t2t
