// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "t2t/bpe.hpp"
#include "t2t/hparams.hpp"
#include "t2t/transformer.hpp"

namespace t2t {

struct DecodeParams {
  int beam_size = 4;
  double alpha = 0.6;
  int extra_length = 50;
  bool dump_attention = false;

  static DecodeParams from(const HParams& hp);
  // Throws unless beam_size >= 1, alpha >= 0, extra_length >= 0.
  void validate() const;
};

struct BeamHypothesis {
  std::vector<int> tokens;  // ends in EOS unless the length cap was hit
  double sum_logprob = 0.0;
  double score = 0.0;       // sum_logprob / length_penalty(tokens.size())
};

// ((5 + length) / 6)^alpha
double length_penalty(std::size_t length, double alpha);

// Anything that yields next-token log-probabilities for a prefix.
class SequenceScorer {
 public:
  virtual ~SequenceScorer() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual std::vector<double> next_log_probs(std::span<const int> prefix) = 0;
};

// Argmax each step (lowest id on ties) until EOS or `cap` tokens.
std::vector<int> greedy_search(SequenceScorer& scorer, std::size_t cap);

// Length-normalized beam search. Each step ranks every one-token extension
// of the live beam by sum_logprob (ties: parent rank, then token id) and
// keeps the best beam_size; those ending in EOS or reaching `cap` move to
// the finished set, which keeps its beam_size best by score. With
// early_exit the search stops once no live hypothesis, even at the cap
// length, could outscore the worst kept finished one. Returns finished
// hypotheses, best first.
std::vector<BeamHypothesis> beam_search(SequenceScorer& scorer, std::size_t beam_size,
                                        double alpha, std::size_t cap, bool early_exit = true);

// Scores target prefixes for one source sentence; the encoder runs once.
class TransformerScorer : public SequenceScorer {
 public:
  TransformerScorer(const Transformer& model, const ParamMap& params, std::span<const int> source);
  std::size_t vocab_size() const override;
  std::vector<double> next_log_probs(std::span<const int> prefix) override;

  // Source ids as fed to the encoder, EOS included.
  const IdMatrix& source() const { return source_; }

  // Attention of every layer and head for a full forward pass whose
  // decoder input is EOS followed by target minus its last token.
  std::vector<AttentionRecord> attention_for(std::span<const int> target) const;

 private:
  const Transformer& model_;
  const ParamMap& params_;
  IdMatrix source_;
  Tensor encoded_;
};

// Output cap: encoder input length (EOS included) plus extra_length.
std::size_t output_cap(std::span<const int> source, const DecodeParams& params);

std::vector<int> greedy_decode(const Transformer& model, const ParamMap& params,
                               std::span<const int> source, const DecodeParams& dp);
std::vector<BeamHypothesis> beam_decode(const Transformer& model, const ParamMap& params,
                                        std::span<const int> source, const DecodeParams& dp);

// Best output ids for one sentence: greedy when beam_size == 1.
std::vector<int> decode_best(const Transformer& model, const ParamMap& params,
                             std::span<const int> source, const DecodeParams& dp);

// [{layer, head, kind, query_tokens, key_tokens, weights}, ...] with
// weights as rows over keys.
nlohmann::json attention_json(const std::vector<AttentionRecord>& records,
                              const SubwordVocab& vocab, std::span<const int> source_ids,
                              std::span<const int> decoder_input_ids);

// Decodes one sentence per line, writing outputs in input order. With
// dump_attention also writes <out>.attn.<line>.json per line.
std::size_t decode_file(const Transformer& model, const ParamMap& params, const SubwordVocab& vocab,
                        const std::filesystem::path& in, const std::filesystem::path& out,
                        const DecodeParams& dp, int workers = 1);

}  // namespace t2t
