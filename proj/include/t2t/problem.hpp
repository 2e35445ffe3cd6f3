// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "t2t/bpe.hpp"
#include "t2t/hparams.hpp"
#include "t2t/pipeline.hpp"
#include "t2t/rng.hpp"

namespace t2t {

struct TextPair {
  std::string source;
  std::string target;
};

struct FeatureInfo {
  std::string type;
  std::size_t vocab_size = 0;
};

// A registered dataset: sentence generator, translation rule, vocabulary
// and input pipeline. Files live in <data_dir>/<name>/.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual std::string name() const = 0;
  // Word-level reference translation of a source sentence.
  virtual std::vector<std::string> translate(std::span<const std::string> source) const = 0;
  virtual std::vector<std::string> sample_source(Rng& rng, const HParams& hp) const = 0;

  std::vector<TextPair> sample_pairs(std::size_t count, Rng& rng, const HParams& hp) const;

  // Writes vocab.txt, train.rec and dev.rec. The same seed and hparams
  // produce byte-identical files.
  void generate(const std::filesystem::path& data_dir, std::uint64_t seed,
                const HParams& hp) const;

  std::filesystem::path directory(const std::filesystem::path& data_dir) const;
  SubwordVocab vocabulary(const std::filesystem::path& data_dir) const;
  std::map<std::string, FeatureInfo> feature_info(const std::filesystem::path& data_dir) const;
  std::vector<Example> examples(const std::filesystem::path& data_dir, Mode mode) const;
  BatchStream input_pipeline(const std::filesystem::path& data_dir, Mode mode, const HParams& hp,
                             std::uint64_t seed) const;
};

// target = source
class CopyProblem : public Problem {
 public:
  std::string name() const override { return "translate_copy"; }
  std::vector<std::string> translate(std::span<const std::string> source) const override;
  std::vector<std::string> sample_source(Rng& rng, const HParams& hp) const override;
};

// target = source reversed
class ReverseProblem : public CopyProblem {
 public:
  std::string name() const override { return "translate_reverse"; }
  std::vector<std::string> translate(std::span<const std::string> source) const override;
};

// Artificial two-language lexicon of 64 words each. Words map through a
// fixed bijection, and an adjective directly followed by a noun swaps
// order in the target.
class ToyGrammarProblem : public Problem {
 public:
  ToyGrammarProblem();
  std::string name() const override { return "translate_toy_grammar"; }
  std::vector<std::string> translate(std::span<const std::string> source) const override;
  std::vector<std::string> sample_source(Rng& rng, const HParams& hp) const override;

  const std::vector<std::string>& source_lexicon() const { return source_words_; }

 private:
  std::vector<std::string> source_words_;
  std::vector<std::string> target_words_;
  std::map<std::string, std::size_t> source_index_;
};

void register_problem(std::shared_ptr<const Problem> problem);
// Throws std::out_of_range for unknown names.
std::shared_ptr<const Problem> find_problem(const std::string& name);
std::vector<std::string> problem_names();

}  // namespace t2t
