// SPDX-License-Identifier: Apache-2.0
#include "t2t/hparams.hpp"

#include <charconv>
#include <iterator>
#include <limits>
#include <stdexcept>

namespace t2t {
namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument("hparams: bad value '" + std::string(text) + "' for " +
                                std::string(key));
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw std::invalid_argument("hparams: bad boolean '" + std::string(text) + "' for " +
                              std::string(key));
}

HParams tiny() {
  HParams hp;
  hp.set_name = "transformer_tiny";
  return hp;
}

HParams base_toy() {
  HParams hp;
  hp.set_name = "transformer_base_toy";
  hp.num_layers = 4;
  hp.d_model = 128;
  hp.num_heads = 8;
  hp.d_ff = 512;
  hp.batch_size = 1024;
  hp.num_train_examples = 20000;
  hp.max_source_words = 15;
  hp.warmup_steps = 1000;
  hp.train_steps = 20000;
  hp.eval_every = 1000;
  return hp;
}

// Small enough for finite-difference checks and fast unit tests.
HParams test_set() {
  HParams hp;
  hp.set_name = "transformer_test";
  hp.num_layers = 2;
  hp.d_model = 8;
  hp.num_heads = 2;
  hp.d_ff = 16;
  hp.dropout = 0.0;
  hp.num_train_examples = 200;
  hp.num_dev_examples = 20;
  hp.max_source_words = 5;
  hp.batch_size = 64;
  hp.warmup_steps = 20;
  hp.train_steps = 20;
  hp.eval_every = 10;
  return hp;
}

}  // namespace

const std::vector<HParamField>& hparam_fields() {
  static const std::vector<HParamField> fields = {
      {"num_layers", &HParams::num_layers},
      {"d_model", &HParams::d_model},
      {"num_heads", &HParams::num_heads},
      {"d_ff", &HParams::d_ff},
      {"dropout", &HParams::dropout},
      {"share_embeddings", &HParams::share_embeddings},
      {"pre_norm", &HParams::pre_norm},
      {"layer_norm_epsilon", &HParams::layer_norm_epsilon},
      {"num_train_examples", &HParams::num_train_examples},
      {"num_dev_examples", &HParams::num_dev_examples},
      {"min_source_words", &HParams::min_source_words},
      {"max_source_words", &HParams::max_source_words},
      {"bpe_merges", &HParams::bpe_merges},
      {"batch_size", &HParams::batch_size},
      {"min_length", &HParams::min_length},
      {"max_length", &HParams::max_length},
      {"learning_rate", &HParams::learning_rate},
      {"warmup_steps", &HParams::warmup_steps},
      {"adam_beta1", &HParams::adam_beta1},
      {"adam_beta2", &HParams::adam_beta2},
      {"adam_epsilon", &HParams::adam_epsilon},
      {"train_steps", &HParams::train_steps},
      {"eval_every", &HParams::eval_every},
      {"beam_size", &HParams::beam_size},
      {"alpha", &HParams::alpha},
      {"extra_length", &HParams::extra_length},
  };
  return fields;
}

void set_hparam(HParams& hp, std::string_view key, std::string_view value) {
  for (const HParamField& f : hparam_fields()) {
    if (f.name != key) continue;
    std::visit(
        [&](auto member) {
          using T = std::remove_reference_t<decltype(hp.*member)>;
          if constexpr (std::is_same_v<T, bool>) {
            hp.*member = parse_bool(key, value);
          } else {
            hp.*member = parse_number<T>(key, value);
          }
        },
        f.member);
    return;
  }
  throw std::invalid_argument("hparams: unknown key '" + std::string(key) + "'");
}

void apply_overrides(HParams& hp, std::string_view overrides) {
  while (!overrides.empty()) {
    const std::size_t comma = overrides.find(',');
    const std::string_view item = overrides.substr(0, comma);
    overrides = comma == std::string_view::npos ? std::string_view{} : overrides.substr(comma + 1);
    if (item.empty()) continue;
    const std::size_t eq = item.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("hparams: override '" + std::string(item) + "' lacks '='");
    }
    set_hparam(hp, item.substr(0, eq), item.substr(eq + 1));
  }
}

bool same_values(const HParams& a, const HParams& b) {
  for (const HParamField& f : hparam_fields()) {
    const bool equal = std::visit([&](auto member) { return a.*member == b.*member; }, f.member);
    if (!equal) return false;
  }
  return true;
}

nlohmann::json to_json(const HParams& hp) {
  nlohmann::json j;
  j["set_name"] = hp.set_name;
  j["version"] = hp.version;
  for (const HParamField& f : hparam_fields()) {
    std::visit([&](auto member) { j[std::string(f.name)] = hp.*member; }, f.member);
  }
  return j;
}

HParams hparams_from_json(const nlohmann::json& j) {
  HParams hp;
  hp.set_name = j.at("set_name").get<std::string>();
  hp.version = j.at("version").get<int>();
  for (const HParamField& f : hparam_fields()) {
    std::visit(
        [&](auto member) {
          using T = std::remove_reference_t<decltype(hp.*member)>;
          hp.*member = j.at(std::string(f.name)).get<T>();
        },
        f.member);
  }
  return hp;
}

void HParamsRegistry::add(const std::string& name, int version, HParams hp) {
  hp.set_name = name;
  hp.version = version;
  auto [it, inserted] = sets_.emplace(std::make_pair(name, version), hp);
  if (!inserted && !same_values(it->second, hp)) {
    throw std::logic_error("hparams: " + name + " v" + std::to_string(version) +
                           " is already registered with different values");
  }
}

HParams HParamsRegistry::get(const std::string& name, int version) const {
  if (version >= 0) {
    auto it = sets_.find({name, version});
    if (it == sets_.end()) {
      throw std::out_of_range("hparams: unknown set " + name + " v" + std::to_string(version));
    }
    return it->second;
  }
  auto it = sets_.upper_bound({name, std::numeric_limits<int>::max()});
  if (it == sets_.begin() || std::prev(it)->first.first != name) {
    throw std::out_of_range("hparams: unknown set " + name);
  }
  return std::prev(it)->second;
}

bool HParamsRegistry::contains(const std::string& name) const {
  auto it = sets_.lower_bound({name, std::numeric_limits<int>::min()});
  return it != sets_.end() && it->first.first == name;
}

std::vector<std::string> HParamsRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [key, hp] : sets_) {
    if (out.empty() || out.back() != key.first) out.push_back(key.first);
  }
  return out;
}

HParamsRegistry& hparams_registry() {
  static HParamsRegistry registry = [] {
    HParamsRegistry r;
    r.add("transformer_tiny", 1, tiny());
    r.add("transformer_base_toy", 1, base_toy());
    r.add("transformer_test", 1, test_set());
    return r;
  }();
  return registry;
}

}  // namespace t2t
