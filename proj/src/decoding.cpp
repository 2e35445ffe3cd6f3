// SPDX-License-Identifier: Apache-2.0
#include "t2t/decoding.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "t2t/ops.hpp"

namespace t2t {
namespace {

struct Candidate {
  std::size_t parent;
  int token;
  double sum_logprob;
};

IdMatrix single_row(std::span<const int> ids) {
  IdMatrix m(1, ids.size());
  std::copy(ids.begin(), ids.end(), m.ids.begin());
  return m;
}

std::vector<int> with_eos(std::span<const int> ids) {
  std::vector<int> out(ids.begin(), ids.end());
  out.push_back(kEosId);
  return out;
}

std::vector<int> shifted_input(std::span<const int> prefix) {
  std::vector<int> input{kEosId};
  input.insert(input.end(), prefix.begin(), prefix.end());
  return input;
}

}  // namespace

DecodeParams DecodeParams::from(const HParams& hp) {
  DecodeParams dp;
  dp.beam_size = hp.beam_size;
  dp.alpha = hp.alpha;
  dp.extra_length = hp.extra_length;
  return dp;
}

void DecodeParams::validate() const {
  if (beam_size < 1) throw std::invalid_argument("decode: beam_size must be >= 1");
  if (!(alpha >= 0.0)) throw std::invalid_argument("decode: alpha must be >= 0");
  if (extra_length < 0) throw std::invalid_argument("decode: extra_length must be >= 0");
}

double length_penalty(std::size_t length, double alpha) {
  return std::pow((5.0 + static_cast<double>(length)) / 6.0, alpha);
}

std::vector<int> greedy_search(SequenceScorer& scorer, std::size_t cap) {
  std::vector<int> out;
  while (out.size() < cap) {
    const std::vector<double> lp = scorer.next_log_probs(out);
    const int best = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    out.push_back(best);
    if (best == kEosId) break;
  }
  return out;
}

std::vector<BeamHypothesis> beam_search(SequenceScorer& scorer, std::size_t beam_size,
                                        double alpha, std::size_t cap, bool early_exit) {
  if (beam_size == 0) throw std::invalid_argument("beam_search: beam_size must be >= 1");
  std::vector<BeamHypothesis> finished;
  if (cap == 0) return finished;

  std::vector<BeamHypothesis> live(1);
  const double cap_penalty = length_penalty(cap, alpha);
  for (std::size_t len = 1; len <= cap && !live.empty(); ++len) {
    std::vector<Candidate> candidates;
    for (std::size_t p = 0; p < live.size(); ++p) {
      const std::vector<double> lp = scorer.next_log_probs(live[p].tokens);
      for (std::size_t t = 0; t < lp.size(); ++t) {
        candidates.push_back({p, static_cast<int>(t), live[p].sum_logprob + lp[t]});
      }
    }
    const std::size_t keep = std::min(beam_size, candidates.size());
    // Candidates are generated in (parent, token) order, so a stable sort
    // breaks sum_logprob ties by parent rank and then token id.
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.sum_logprob > b.sum_logprob; });

    std::vector<BeamHypothesis> next_live;
    for (std::size_t i = 0; i < keep; ++i) {
      const Candidate& c = candidates[i];
      BeamHypothesis h;
      h.tokens = live[c.parent].tokens;
      h.tokens.push_back(c.token);
      h.sum_logprob = c.sum_logprob;
      h.score = c.sum_logprob / length_penalty(h.tokens.size(), alpha);
      if (c.token == kEosId || h.tokens.size() == cap) {
        // Insert after equal scores so earlier hypotheses keep priority.
        auto pos = std::upper_bound(finished.begin(), finished.end(), h.score,
                                    [](double s, const BeamHypothesis& f) { return s > f.score; });
        finished.insert(pos, std::move(h));
        if (finished.size() > beam_size) finished.pop_back();
      } else {
        next_live.push_back(std::move(h));
      }
    }
    live = std::move(next_live);

    if (early_exit && finished.size() == beam_size && !live.empty()) {
      // Log-probs only decrease with length and lp grows with it, so
      // sum / lp(cap) bounds every descendant's score from above.
      const double bound = live.front().sum_logprob / cap_penalty;
      if (bound <= finished.back().score) break;
    }
  }
  return finished;
}

TransformerScorer::TransformerScorer(const Transformer& model, const ParamMap& params,
                                     std::span<const int> source)
    : model_(model), params_(params), source_(single_row(with_eos(source))) {
  ForwardContext ctx;
  encoded_ = model_.encode(params_, source_, ctx);
}

std::size_t TransformerScorer::vocab_size() const { return model_.hparams().vocab_size; }

std::vector<double> TransformerScorer::next_log_probs(std::span<const int> prefix) {
  ForwardContext ctx;
  const IdMatrix input = single_row(shifted_input(prefix));
  const Tensor logits = model_.top(params_, model_.decode(params_, input, encoded_, source_, ctx));
  const std::size_t v = logits.dim(2);
  const Tensor last({v}, std::vector<double>(logits.data().end() - static_cast<long>(v),
                                             logits.data().end()));
  const Tensor lp = ops::log_softmax(last, 0);
  return {lp.data().begin(), lp.data().end()};
}

std::vector<AttentionRecord> TransformerScorer::attention_for(std::span<const int> target) const {
  std::vector<AttentionRecord> records;
  ForwardContext ctx;
  ctx.attention = &records;
  const Tensor encoded = model_.encode(params_, source_, ctx);
  const std::span<const int> prefix = target.empty() ? target : target.first(target.size() - 1);
  model_.decode(params_, single_row(shifted_input(prefix)), encoded, source_, ctx);
  return records;
}

std::size_t output_cap(std::span<const int> source, const DecodeParams& params) {
  return source.size() + 1 + static_cast<std::size_t>(params.extra_length);
}

std::vector<int> greedy_decode(const Transformer& model, const ParamMap& params,
                               std::span<const int> source, const DecodeParams& dp) {
  dp.validate();
  model.check_compatible(params);
  TransformerScorer scorer(model, params, source);
  return greedy_search(scorer, output_cap(source, dp));
}

std::vector<BeamHypothesis> beam_decode(const Transformer& model, const ParamMap& params,
                                        std::span<const int> source, const DecodeParams& dp) {
  dp.validate();
  model.check_compatible(params);
  TransformerScorer scorer(model, params, source);
  return beam_search(scorer, static_cast<std::size_t>(dp.beam_size), dp.alpha,
                     output_cap(source, dp));
}

std::vector<int> decode_best(const Transformer& model, const ParamMap& params,
                             std::span<const int> source, const DecodeParams& dp) {
  if (dp.beam_size == 1) return greedy_decode(model, params, source, dp);
  const auto hyps = beam_decode(model, params, source, dp);
  return hyps.empty() ? std::vector<int>{} : hyps.front().tokens;
}

nlohmann::json attention_json(const std::vector<AttentionRecord>& records,
                              const SubwordVocab& vocab, std::span<const int> source_ids,
                              std::span<const int> decoder_input_ids) {
  auto names = [&](std::span<const int> ids) {
    std::vector<std::string> out;
    for (int id : ids) out.push_back(vocab.token(id));
    return out;
  };
  const auto source_names = names(source_ids);
  const auto target_names = names(decoder_input_ids);
  nlohmann::json arr = nlohmann::json::array();
  for (const AttentionRecord& r : records) {
    const bool encoder_side = r.kind == AttentionKind::kSelf;
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t q = 0; q < r.query_len; ++q) {
      rows.push_back(std::vector<double>(r.weights.begin() + static_cast<long>(q * r.key_len),
                                         r.weights.begin() + static_cast<long>((q + 1) * r.key_len)));
    }
    arr.push_back({{"layer", r.layer},
                   {"head", r.head},
                   {"kind", attention_kind_name(r.kind)},
                   {"query_tokens", encoder_side ? source_names : target_names},
                   {"key_tokens", r.kind == AttentionKind::kCausalSelf ? target_names : source_names},
                   {"weights", std::move(rows)}});
  }
  return arr;
}

std::size_t decode_file(const Transformer& model, const ParamMap& params, const SubwordVocab& vocab,
                        const std::filesystem::path& in, const std::filesystem::path& out,
                        const DecodeParams& dp, int workers) {
  dp.validate();
  model.check_compatible(params);
  std::ifstream input(in);
  if (!input) throw std::runtime_error("decode: cannot read " + in.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(input, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }

  std::vector<std::string> outputs(lines.size());
  std::vector<std::exception_ptr> errors(lines.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < lines.size(); i = next++) {
      try {
        const std::vector<int> source = vocab.encode(lines[i]);
        const std::vector<int> best = decode_best(model, params, source, dp);
        outputs[i] = vocab.decode(best);
        if (dp.dump_attention) {
          TransformerScorer scorer(model, params, source);
          const auto records = scorer.attention_for(best);
          const std::span<const int> prefix =
              best.empty() ? std::span<const int>{} : std::span<const int>(best).first(best.size() - 1);
          const auto j = attention_json(records, vocab, scorer.source().ids, shifted_input(prefix));
          std::filesystem::path dump = out;
          dump += ".attn." + std::to_string(i) + ".json";
          std::ofstream f(dump);
          if (!f) throw std::runtime_error("decode: cannot write " + dump.string());
          f << j.dump() << '\n';
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(lines.size())));
  if (n == 1) {
    work();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < n; ++t) threads.emplace_back(work);
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::ofstream output(out, std::ios::trunc);
  if (!output) throw std::runtime_error("decode: cannot write " + out.string());
  for (const auto& o : outputs) output << o << '\n';
  return lines.size();
}

}  // namespace t2t
