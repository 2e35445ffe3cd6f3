// SPDX-License-Identifier: Apache-2.0
#include "t2t/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "t2t/bench.hpp"
#include "t2t/checkpoint.hpp"
#include "t2t/problem.hpp"
#include "t2t/regression.hpp"
#include "t2t/training.hpp"

namespace t2t {
namespace {

void add_triple(CLI::App* cmd, Invocation& inv) {
  cmd->add_option("--problem", inv.problem, "Registered problem name");
  cmd->add_option("--model", inv.model, "Registered model name");
  cmd->add_option("--hparams_set", inv.hparams_set, "Registered hparams set");
  cmd->add_option("--hparams", inv.hparams_overrides, "Comma-separated key=value overrides");
  cmd->add_option("--seed", inv.seed, "Root random seed");
}

void require_value(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string(flag) + " is required");
}

std::filesystem::path resolve_checkpoint(const Invocation& inv) {
  if (!inv.checkpoint.empty()) return inv.checkpoint;
  require_value(inv.output_dir, "--output_dir or --checkpoint");
  const auto all = list_checkpoints(inv.output_dir);
  if (all.empty()) throw std::runtime_error("no checkpoints in " + inv.output_dir);
  return all.back();
}

Checkpoint load_for_decode(const Invocation& inv) {
  if (inv.average_last > 0) {
    require_value(inv.output_dir, "--output_dir");
    auto all = list_checkpoints(inv.output_dir);
    if (all.empty()) throw std::runtime_error("no checkpoints in " + inv.output_dir);
    const std::size_t n = std::min(all.size(), static_cast<std::size_t>(inv.average_last));
    const std::vector<std::filesystem::path> last(all.end() - static_cast<long>(n), all.end());
    return average_checkpoints(std::span<const std::filesystem::path>(last));
  }
  return load_checkpoint(resolve_checkpoint(inv));
}

int run_datagen(const Invocation& inv, std::ostream& out) {
  require_value(inv.data_dir, "--data_dir");
  const auto problem = find_problem(inv.problem);
  problem->generate(inv.data_dir, inv.seed, inv.hparams);
  out << "wrote " << problem->directory(inv.data_dir).string() << '\n';
  return 0;
}

int run_train(const Invocation& inv, std::ostream& out) {
  require_value(inv.data_dir, "--data_dir");
  require_value(inv.output_dir, "--output_dir");
  const auto problem = find_problem(inv.problem);
  RunConfig config;
  config.num_replicas = inv.num_replicas;
  config.seed = inv.seed;
  config.checkpoint_every = inv.checkpoint_every;
  config.keep_last = inv.keep_last;
  const TrainResult r = train(*problem, inv.model, inv.hparams, inv.data_dir, inv.output_dir, config);
  out << "step=" << r.final_step << " dev_loss=" << r.final_eval.loss
      << " dev_token_accuracy=" << r.final_eval.token_accuracy()
      << " checkpoint=" << r.final_checkpoint.string() << '\n';
  return 0;
}

int run_decode(const Invocation& inv, std::ostream& out) {
  require_value(inv.data_dir, "--data_dir");
  require_value(inv.decode_from_file, "--decode_from_file");
  require_value(inv.decode_to_file, "--decode_to_file");
  const auto problem = find_problem(inv.problem);
  const SubwordVocab vocab = problem->vocabulary(inv.data_dir);
  const Checkpoint ckpt = load_for_decode(inv);
  const Transformer model = model_for_checkpoint(inv.model, inv.hparams, vocab.size(), ckpt);
  const std::size_t lines = decode_file(model, ckpt.params, vocab, inv.decode_from_file,
                                        inv.decode_to_file, inv.decode, inv.decode_workers);
  out << "decoded " << lines << " lines from step " << ckpt.step << '\n';
  return 0;
}

int run_avg(const Invocation& inv, std::ostream& out) {
  require_value(inv.output_dir, "--output_dir");
  auto all = list_checkpoints(inv.output_dir);
  if (all.empty()) throw std::runtime_error("no checkpoints in " + inv.output_dir);
  const std::size_t n = std::min(all.size(), static_cast<std::size_t>(inv.average_last));
  const std::vector<std::filesystem::path> last(all.end() - static_cast<long>(n), all.end());
  const Checkpoint avg = average_checkpoints(std::span<const std::filesystem::path>(last));
  const std::filesystem::path target =
      inv.out_path.empty() ? std::filesystem::path(inv.output_dir) / "averaged.t2ck"
                           : std::filesystem::path(inv.out_path);
  save_checkpoint(target, avg);
  out << "averaged " << n << " checkpoints (step " << avg.step << ") into " << target.string()
      << '\n';
  return 0;
}

int run_bench_cmd(const Invocation& inv, std::ostream& out) {
  const bench::BenchReport report = bench::run_bench();
  out << report.text();
  if (!inv.out_path.empty()) {
    std::ofstream csv(inv.out_path);
    if (!csv) throw std::runtime_error("cannot write " + inv.out_path);
    csv << report.csv();
  }
  return report.all_pass() ? 0 : 2;
}

int run_regress(const Invocation& inv, std::ostream& out) {
  require_value(inv.output_dir, "--output_dir");
  std::vector<RegressionSpec> specs = default_regression_specs();
  if (!inv.specs_path.empty()) {
    std::ifstream f(inv.specs_path);
    if (!f) throw std::runtime_error("cannot read " + inv.specs_path);
    specs = regression_specs_from_json(nlohmann::json::parse(f));
  }
  const auto results = run_regression(specs, inv.output_dir, inv.seed);
  const auto report = regression_report(results);
  out << report.dump(2) << '\n';
  if (!inv.out_path.empty()) {
    std::ofstream f(inv.out_path);
    if (!f) throw std::runtime_error("cannot write " + inv.out_path);
    f << report.dump(2) << '\n';
  }
  return all_passed(results) ? 0 : 2;
}

int run_registry(const Invocation& inv, std::ostream& out) {
  std::vector<std::string> names;
  if (inv.registry_kind == "problems") {
    names = problem_names();
  } else if (inv.registry_kind == "models") {
    names = model_names();
  } else if (inv.registry_kind == "hparams_sets") {
    names = hparams_registry().names();
  }
  std::sort(names.begin(), names.end());
  for (const auto& n : names) out << n << '\n';
  return 0;
}

}  // namespace

std::string Invocation::header() const {
  std::string h = "problem=" + problem + " model=" + model + " hparams_set=" + hparams_set +
                  " seed=" + std::to_string(seed);
  if (!hparams_overrides.empty()) h += " hparams=" + hparams_overrides;
  return h;
}

Invocation parse_invocation(const std::vector<std::string>& args) {
  Invocation inv;
  CLI::App app{"Sequence-to-sequence toolkit", "t2t"};
  app.require_subcommand(1, 1);

  int train_steps = -1;
  CLI::App* datagen = app.add_subcommand("datagen", "Generate vocabulary and record files");
  add_triple(datagen, inv);
  datagen->add_option("--data_dir", inv.data_dir, "Dataset root");

  CLI::App* train_cmd = app.add_subcommand("train", "Train a model");
  add_triple(train_cmd, inv);
  train_cmd->add_option("--data_dir", inv.data_dir, "Dataset root");
  train_cmd->add_option("--output_dir", inv.output_dir, "Checkpoint and log directory");
  train_cmd->add_option("--train_steps", train_steps, "Override the set's train_steps");
  train_cmd->add_option("--num_replicas", inv.num_replicas, "Synchronous data-parallel replicas");
  train_cmd->add_option("--checkpoint_every", inv.checkpoint_every, "Steps between checkpoints");
  train_cmd->add_option("--keep_last", inv.keep_last, "Checkpoints to keep");

  CLI::App* decode = app.add_subcommand("decode", "Translate a file line by line");
  add_triple(decode, inv);
  decode->add_option("--data_dir", inv.data_dir, "Dataset root (for the vocabulary)");
  decode->add_option("--output_dir", inv.output_dir, "Training directory holding checkpoints");
  decode->add_option("--checkpoint", inv.checkpoint, "Explicit checkpoint file");
  decode->add_option("--average_last", inv.average_last, "Average the newest N checkpoints");
  decode->add_option("--decode_from_file", inv.decode_from_file, "Input, one sentence per line");
  decode->add_option("--decode_to_file", inv.decode_to_file, "Output path");
  auto* beam_opt = decode->add_option("--beam_size", inv.decode.beam_size, "Beam width");
  auto* alpha_opt = decode->add_option("--alpha", inv.decode.alpha, "Length penalty exponent");
  auto* extra_opt = decode->add_option("--extra_length", inv.decode.extra_length,
                                       "Output cap beyond the source length");
  decode->add_flag("--dump_attention", inv.decode.dump_attention, "Write attention JSON per line");
  decode->add_option("--decode_workers", inv.decode_workers, "Parallel decoding threads");

  CLI::App* avg = app.add_subcommand("avg-ckpt", "Average the newest checkpoints");
  add_triple(avg, inv);
  avg->add_option("--output_dir", inv.output_dir, "Training directory holding checkpoints");
  inv.average_last = 5;
  avg->add_option("--average_last", inv.average_last, "Number of checkpoints");
  avg->add_option("--out", inv.out_path, "Output checkpoint path");

  CLI::App* bench_cmd = app.add_subcommand("bench", "Layer complexity bench");
  add_triple(bench_cmd, inv);
  bench_cmd->add_option("--csv", inv.out_path, "Also write the report as CSV");

  CLI::App* regress = app.add_subcommand("regress", "Run pinned end-to-end regressions");
  add_triple(regress, inv);
  regress->add_option("--output_dir", inv.output_dir, "Work directory");
  regress->add_option("--specs", inv.specs_path, "JSON list of regression specs");
  regress->add_option("--report", inv.out_path, "Write the JSON report here");

  CLI::App* registry = app.add_subcommand("registry", "List registered components");
  add_triple(registry, inv);
  registry->add_option("--kind", inv.registry_kind, "problems | models | hparams_sets")
      ->required()
      ->check(CLI::IsMember({"problems", "models", "hparams_sets"}));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    throw UsageError(app.help());
  } catch (const CLI::ParseError& e) {
    throw UsageError(std::string(e.what()) + "\n" + app.help());
  }

  inv.subcommand = app.get_subcommands().front()->get_name();
  if (inv.subcommand != "avg-ckpt" && inv.subcommand != "decode") inv.average_last = 0;
  if (inv.subcommand == "decode" && decode->count("--average_last") == 0) inv.average_last = 0;

  try {
    inv.hparams = hparams_registry().get(inv.hparams_set);
    apply_overrides(inv.hparams, inv.hparams_overrides);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (train_steps >= 0) inv.hparams.train_steps = train_steps;
  const auto models = model_names();
  if (std::find(models.begin(), models.end(), inv.model) == models.end()) {
    throw UsageError("unknown model '" + inv.model + "'");
  }
  const auto problems = problem_names();
  if (std::find(problems.begin(), problems.end(), inv.problem) == problems.end()) {
    throw UsageError("unknown problem '" + inv.problem + "'");
  }

  // Decoding flags default to the hparams set's values.
  const DecodeParams from_set = DecodeParams::from(inv.hparams);
  if (beam_opt->count() == 0) inv.decode.beam_size = from_set.beam_size;
  if (alpha_opt->count() == 0) inv.decode.alpha = from_set.alpha;
  if (extra_opt->count() == 0) inv.decode.extra_length = from_set.extra_length;
  try {
    inv.decode.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (inv.num_replicas < 1) throw UsageError("--num_replicas must be >= 1");
  if (inv.subcommand == "avg-ckpt" && inv.average_last < 1) throw UsageError("--average_last must be >= 1");
  return inv;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Invocation inv;
  try {
    inv = parse_invocation(args);
  } catch (const UsageError& e) {
    err << e.what() << '\n';
    return 1;
  }
  out << inv.header() << '\n';
  try {
    if (inv.subcommand == "datagen") return run_datagen(inv, out);
    if (inv.subcommand == "train") return run_train(inv, out);
    if (inv.subcommand == "decode") return run_decode(inv, out);
    if (inv.subcommand == "avg-ckpt") return run_avg(inv, out);
    if (inv.subcommand == "bench") return run_bench_cmd(inv, out);
    if (inv.subcommand == "regress") return run_regress(inv, out);
    if (inv.subcommand == "registry") return run_registry(inv, out);
  } catch (const UsageError& e) {
    err << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace t2t
