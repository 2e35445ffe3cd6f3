// SPDX-License-Identifier: Apache-2.0
#include "t2t/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace t2t {
namespace {

void append_json_line(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("train: cannot append to " + path.string());
  out << j.dump() << '\n';
}

std::uint64_t dropout_seed(std::uint64_t base, std::uint64_t step, std::uint64_t replica) {
  return splitmix64(splitmix64(base ^ step) + replica);
}

}  // namespace

void adam_step(ParamMap& params, const GradMap& grads, AdamState& state, double lr,
               double beta1, double beta2, double epsilon) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument("adam: gradient for unknown parameter " + name);
    if (g.shape() != it->second.shape()) {
      throw std::invalid_argument("adam: gradient shape " + shape_string(g.shape()) +
                                  " does not match parameter " + name + " " +
                                  shape_string(it->second.shape()));
    }
    for (double x : g.data()) {
      if (!std::isfinite(x)) throw std::domain_error("adam: non-finite gradient for " + name);
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(beta1, t);
  const double correction2 = 1.0 - std::pow(beta2, t);
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) {
      m.assign(g.size(), 0.0);
      v.assign(g.size(), 0.0);
    }
    const auto gd = g.data();
    const auto pd = p.data();
    std::vector<double> updated(pd.begin(), pd.end());
    for (std::size_t i = 0; i < updated.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * gd[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * gd[i] * gd[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      updated[i] -= lr * m_hat / (std::sqrt(v_hat) + epsilon);
    }
    p = Tensor(p.shape(), std::move(updated));
  }
}

double lr_schedule(std::uint64_t step, std::size_t d, std::uint64_t warmup) {
  if (warmup < 1) throw std::invalid_argument("lr_schedule: warmup must be >= 1");
  if (step < 1) throw std::invalid_argument("lr_schedule: step must be >= 1");
  if (d == 0) throw std::invalid_argument("lr_schedule: d must be positive");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return std::pow(static_cast<double>(d), -0.5) * std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

GradMap sync_parallel_gradients(std::span<const GradMap> replica_grads) {
  if (replica_grads.empty()) throw std::invalid_argument("sync: no replicas");
  const GradMap& first = replica_grads.front();
  for (std::size_t r = 1; r < replica_grads.size(); ++r) {
    const GradMap& other = replica_grads[r];
    if (other.size() != first.size()) {
      throw std::invalid_argument("sync: replica " + std::to_string(r) + " has " +
                                  std::to_string(other.size()) + " gradients, replica 0 has " +
                                  std::to_string(first.size()));
    }
    for (const auto& [name, g] : first) {
      auto it = other.find(name);
      if (it == other.end()) {
        throw std::invalid_argument("sync: replica " + std::to_string(r) + " lacks " + name);
      }
      if (it->second.shape() != g.shape()) {
        throw std::invalid_argument("sync: shape mismatch for " + name);
      }
    }
  }
  const double n = static_cast<double>(replica_grads.size());
  GradMap mean;
  for (const auto& [name, g] : first) {
    std::vector<double> acc(g.data().begin(), g.data().end());
    for (std::size_t r = 1; r < replica_grads.size(); ++r) {
      const auto d = replica_grads[r].at(name).data();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += d[i];
    }
    for (double& x : acc) x /= n;
    mean.emplace(name, Tensor(g.shape(), std::move(acc)));
  }
  return mean;
}

std::vector<std::string> model_names() { return {"transformer"}; }

Transformer make_model(const std::string& name, const HParams& hp, std::size_t vocab_size) {
  if (name != "transformer") throw std::out_of_range("unknown model '" + name + "'");
  return Transformer(TransformerHParams::from(hp, vocab_size));
}

StepResult compute_gradients(const Transformer& model, const ParamMap& params, const Batch& batch,
                             bool training, Rng* dropout_rng) {
  Tape tape;
  const ParamMap watched = watch_all(&tape, params);
  ForwardContext ctx;
  ctx.training = training;
  ctx.dropout_rng = dropout_rng;
  const Tensor encoded = model.encode(watched, batch.source, ctx);
  const Tensor logits = model.decode_train(watched, batch.target, encoded, batch.source, ctx);
  const Tensor loss = token_loss(logits, batch.target);

  StepResult result;
  result.loss = loss.item();
  result.counts = token_accuracy(logits, batch.target);
  const Gradients grads = tape.backward(loss);
  for (const auto& [name, t] : watched) result.grads.emplace(name, grads.of(t));
  return result;
}

EvalResult evaluate(const Transformer& model, const ParamMap& params, BatchStream& stream) {
  EvalResult result;
  double loss_sum = 0.0;
  ForwardContext ctx;
  while (auto batch = stream.next()) {
    const Tensor encoded = model.encode(params, batch->source, ctx);
    const Tensor logits = model.decode_train(params, batch->target, encoded, batch->source, ctx);
    const double tokens = static_cast<double>(batch->target.non_pad());
    loss_sum += token_loss(logits, batch->target).item() * tokens;
    const TokenCounts c = token_accuracy(logits, batch->target);
    result.counts.correct += c.correct;
    result.counts.total += c.total;
  }
  if (result.counts.total > 0) result.loss = loss_sum / static_cast<double>(result.counts.total);
  return result;
}

EvalResult evaluate(const Transformer& model, const ParamMap& params, const Problem& problem,
                    const std::filesystem::path& data_dir, const HParams& hp) {
  BatchStream stream = problem.input_pipeline(data_dir, Mode::kEval, hp, 0);
  return evaluate(model, params, stream);
}

Transformer model_for_checkpoint(const std::string& model_name, const HParams& hp,
                                 std::size_t vocab_size, const Checkpoint& ckpt) {
  Transformer model = make_model(model_name, hp, vocab_size);
  model.check_compatible(ckpt.params);
  return model;
}

TrainResult train(const Problem& problem, const std::string& model_name, const HParams& hp,
                  const std::filesystem::path& data_dir, const std::filesystem::path& output_dir,
                  const RunConfig& config) {
  if (config.num_replicas < 1) throw std::invalid_argument("train: num_replicas must be >= 1");
  if (config.checkpoint_every < 1) throw std::invalid_argument("train: checkpoint_every must be >= 1");
  if (config.keep_last < 1) throw std::invalid_argument("train: keep_last must be >= 1");
  if (hp.train_steps < 0) throw std::invalid_argument("train: train_steps must be >= 0");
  if (!std::filesystem::exists(problem.directory(data_dir) / "vocab.txt")) {
    throw std::runtime_error("train: no data for " + problem.name() + " in " + data_dir.string() +
                             "; run datagen first");
  }

  const SubwordVocab vocab = problem.vocabulary(data_dir);
  const Transformer model = make_model(model_name, hp, vocab.size());
  const SeedStreams seeds = set_seeds(config.seed);
  ParamMap params = model.init_parameters(seeds.init);
  BatchStream stream = problem.input_pipeline(data_dir, Mode::kTrain, hp, seeds.data);

  std::filesystem::create_directories(output_dir);
  const auto metrics_path = output_dir / "metrics.jsonl";
  const auto eval_path = output_dir / "eval.jsonl";
  std::filesystem::remove(metrics_path);
  std::filesystem::remove(eval_path);
  for (const auto& old : list_checkpoints(output_dir)) std::filesystem::remove(old);
  {
    nlohmann::json j = to_json(hp);
    j["model"] = model_name;
    j["problem"] = problem.name();
    j["seed"] = config.seed;
    j["num_replicas"] = config.num_replicas;
    std::ofstream out(output_dir / "hparams.json");
    out << j.dump(2) << '\n';
  }

  TrainResult result;
  auto write_checkpoint = [&](std::uint64_t step) {
    Checkpoint ckpt{step, hp.set_name, params};
    const auto path = output_dir / checkpoint_filename(step);
    save_checkpoint(path, ckpt);
    result.final_checkpoint = path;
    auto existing = list_checkpoints(output_dir);
    while (existing.size() > static_cast<std::size_t>(config.keep_last)) {
      std::filesystem::remove(existing.front());
      existing.erase(existing.begin());
    }
  };
  auto run_eval = [&](std::uint64_t step) {
    result.final_eval = evaluate(model, params, problem, data_dir, hp);
    append_json_line(eval_path, {{"step", step},
                                 {"loss", result.final_eval.loss},
                                 {"token_accuracy", result.final_eval.token_accuracy()}});
  };

  const std::size_t replicas = static_cast<std::size_t>(config.num_replicas);
  const std::uint64_t total = static_cast<std::uint64_t>(hp.train_steps);
  AdamState adam;
  const auto start = std::chrono::steady_clock::now();
  for (std::uint64_t step = 1; step <= total; ++step) {
    std::vector<Batch> batches;
    for (std::size_t r = 0; r < replicas; ++r) batches.push_back(*stream.next());

    std::vector<StepResult> results(replicas);
    std::vector<std::exception_ptr> errors(replicas);
    auto work = [&](std::size_t r) {
      try {
        Rng rng(dropout_seed(seeds.dropout, step, r));
        results[r] = compute_gradients(model, params, batches[r], true, &rng);
      } catch (...) {
        errors[r] = std::current_exception();
      }
    };
    if (replicas == 1) {
      work(0);
    } else {
      std::vector<std::thread> threads;
      for (std::size_t r = 0; r < replicas; ++r) threads.emplace_back(work, r);
      for (auto& t : threads) t.join();
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }

    double loss = 0.0;
    TokenCounts counts;
    std::vector<GradMap> grads;
    for (auto& r : results) {
      loss += r.loss;
      counts.correct += r.counts.correct;
      counts.total += r.counts.total;
      grads.push_back(std::move(r.grads));
    }
    loss /= static_cast<double>(replicas);
    if (!std::isfinite(loss)) {
      throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
    }

    const double lr = hp.learning_rate *
                      lr_schedule(step, static_cast<std::size_t>(hp.d_model),
                                  static_cast<std::uint64_t>(hp.warmup_steps));
    adam_step(params, sync_parallel_gradients(grads), adam, lr, hp.adam_beta1, hp.adam_beta2,
              hp.adam_epsilon);

    const auto now = std::chrono::steady_clock::now();
    const auto wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(now - start).count();
    append_json_line(metrics_path, {{"step", step},
                                    {"loss", loss},
                                    {"token_accuracy", counts.accuracy()},
                                    {"lr", lr},
                                    {"wall_ms", wall_ms}});

    if (step % static_cast<std::uint64_t>(config.checkpoint_every) == 0 || step == total) {
      write_checkpoint(step);
    }
    if ((hp.eval_every > 0 && step % static_cast<std::uint64_t>(hp.eval_every) == 0) ||
        step == total) {
      run_eval(step);
    }
  }
  if (total == 0) {
    write_checkpoint(0);
    run_eval(0);
  }
  result.final_step = total;
  return result;
}

}  // namespace t2t
