// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "t2t/checkpoint.hpp"
#include "t2t/hparams.hpp"
#include "t2t/pipeline.hpp"
#include "t2t/problem.hpp"
#include "t2t/transformer.hpp"

namespace t2t {

using GradMap = std::map<std::string, Tensor>;

struct AdamState {
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  std::uint64_t step = 0;
};

// One bias-corrected Adam update of every parameter that has a gradient.
// Throws std::domain_error naming the parameter if a gradient is not
// finite; params and state are left untouched in that case.
void adam_step(ParamMap& params, const GradMap& grads, AdamState& state, double lr,
               double beta1, double beta2, double epsilon);

// d^-0.5 * min(step^-0.5, step * warmup^-1.5).
double lr_schedule(std::uint64_t step, std::size_t d, std::uint64_t warmup);

// Element-wise mean over replicas, accumulated in replica order.
GradMap sync_parallel_gradients(std::span<const GradMap> replica_grads);

// Registered model names; only the Transformer is built in.
std::vector<std::string> model_names();
Transformer make_model(const std::string& name, const HParams& hp, std::size_t vocab_size);

struct StepResult {
  double loss = 0.0;
  TokenCounts counts;
  GradMap grads;
};

// Forward and backward on one batch. dropout_rng may be null when the
// hparams disable dropout or training is false.
StepResult compute_gradients(const Transformer& model, const ParamMap& params, const Batch& batch,
                             bool training, Rng* dropout_rng);

struct EvalResult {
  double loss = 0.0;  // mean over non-pad target tokens
  TokenCounts counts;
  double token_accuracy() const { return counts.accuracy(); }
};

// Teacher-forced loss and per-token accuracy over one pass of the stream.
EvalResult evaluate(const Transformer& model, const ParamMap& params, BatchStream& stream);
EvalResult evaluate(const Transformer& model, const ParamMap& params, const Problem& problem,
                    const std::filesystem::path& data_dir, const HParams& hp);

struct RunConfig {
  int num_replicas = 1;
  std::uint64_t seed = 1;
  int checkpoint_every = 500;
  int keep_last = 5;
};

struct TrainResult {
  std::uint64_t final_step = 0;
  std::filesystem::path final_checkpoint;
  EvalResult final_eval;
};

// Runs hp.train_steps synchronous steps of num_replicas replicas. Writes
// into output_dir:
//   hparams.json       resolved hparams, model and problem
//   metrics.jsonl      {step, loss, token_accuracy, lr, wall_ms} per step
//   eval.jsonl         {step, loss, token_accuracy} every eval_every steps
//   ckpt-<step>.t2ck   every checkpoint_every steps and at the end
// Only the keep_last newest checkpoints are kept. A non-finite loss or
// gradient aborts with std::runtime_error; checkpoints already written stay.
TrainResult train(const Problem& problem, const std::string& model_name, const HParams& hp,
                  const std::filesystem::path& data_dir, const std::filesystem::path& output_dir,
                  const RunConfig& config);

// Rebuilds the model a checkpoint belongs to, checking compatibility.
Transformer model_for_checkpoint(const std::string& model_name, const HParams& hp,
                                 std::size_t vocab_size, const Checkpoint& ckpt);

}  // namespace t2t
