// SPDX-License-Identifier: Apache-2.0
#include "t2t/problem.hpp"

#include <algorithm>
#include <mutex>
#include <stdexcept>

namespace t2t {
namespace {

constexpr std::string_view kSymbols = "abcdefghijkl";
constexpr std::size_t kLexiconSize = 64;
constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";

std::string join(std::span<const std::string> words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

std::size_t sentence_length(Rng& rng, const HParams& hp) {
  if (hp.min_source_words < 1 || hp.max_source_words < hp.min_source_words) {
    throw std::invalid_argument("problem: invalid sentence length range");
  }
  const auto span = static_cast<std::size_t>(hp.max_source_words - hp.min_source_words + 1);
  return static_cast<std::size_t>(hp.min_source_words) + uniform_index(rng, span);
}

// Lexical category used by the reordering rule.
bool is_adjective(std::size_t i) { return i % 4 == 0; }
bool is_noun(std::size_t i) { return i % 4 == 1; }

struct ProblemRegistry {
  std::mutex mu;
  std::map<std::string, std::shared_ptr<const Problem>> problems;
};

ProblemRegistry& registry() {
  static ProblemRegistry* r = [] {
    auto* reg = new ProblemRegistry;
    for (std::shared_ptr<const Problem> p :
         {std::shared_ptr<const Problem>(std::make_shared<CopyProblem>()),
          std::shared_ptr<const Problem>(std::make_shared<ReverseProblem>()),
          std::shared_ptr<const Problem>(std::make_shared<ToyGrammarProblem>())}) {
      reg->problems.emplace(p->name(), p);
    }
    return reg;
  }();
  return *r;
}

}  // namespace

std::vector<TextPair> Problem::sample_pairs(std::size_t count, Rng& rng, const HParams& hp) const {
  std::vector<TextPair> pairs;
  pairs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto words = sample_source(rng, hp);
    pairs.push_back({join(words), join(translate(words))});
  }
  return pairs;
}

std::filesystem::path Problem::directory(const std::filesystem::path& data_dir) const {
  return data_dir / name();
}

void Problem::generate(const std::filesystem::path& data_dir, std::uint64_t seed,
                       const HParams& hp) const {
  const auto dir = directory(data_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("datagen: cannot create " + dir.string() + ": " + ec.message());

  Rng rng(seed);
  const auto train = sample_pairs(static_cast<std::size_t>(hp.num_train_examples), rng, hp);
  const auto dev = sample_pairs(static_cast<std::size_t>(hp.num_dev_examples), rng, hp);

  std::vector<std::string> corpus;
  corpus.reserve(2 * train.size());
  for (const auto& p : train) {
    corpus.push_back(p.source);
    corpus.push_back(p.target);
  }
  const SubwordVocab vocab = SubwordVocab::learn(corpus, static_cast<std::size_t>(hp.bpe_merges));

  auto encode_all = [&](const std::vector<TextPair>& pairs) {
    std::vector<Example> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back({vocab.encode(p.source), vocab.encode(p.target)});
    return out;
  };
  vocab.save(dir / "vocab.txt");
  write_records(dir / "train.rec", encode_all(train));
  write_records(dir / "dev.rec", encode_all(dev));
}

SubwordVocab Problem::vocabulary(const std::filesystem::path& data_dir) const {
  return SubwordVocab::load(directory(data_dir) / "vocab.txt");
}

std::map<std::string, FeatureInfo> Problem::feature_info(const std::filesystem::path& data_dir) const {
  const std::size_t v = vocabulary(data_dir).size();
  return {{"inputs", {"symbol", v}}, {"targets", {"symbol", v}}};
}

std::vector<Example> Problem::examples(const std::filesystem::path& data_dir, Mode mode) const {
  return read_records(directory(data_dir) / (mode == Mode::kTrain ? "train.rec" : "dev.rec"));
}

BatchStream Problem::input_pipeline(const std::filesystem::path& data_dir, Mode mode,
                                    const HParams& hp, std::uint64_t seed) const {
  PipelineOptions opts;
  opts.batch_size = static_cast<std::size_t>(hp.batch_size);
  opts.min_length = static_cast<std::size_t>(hp.min_length);
  opts.max_length = static_cast<std::size_t>(hp.max_length);
  return BatchStream(examples(data_dir, mode), mode, opts, seed);
}

std::vector<std::string> CopyProblem::translate(std::span<const std::string> source) const {
  return {source.begin(), source.end()};
}

std::vector<std::string> CopyProblem::sample_source(Rng& rng, const HParams& hp) const {
  std::vector<std::string> words(sentence_length(rng, hp));
  for (auto& w : words) w = std::string(1, kSymbols[uniform_index(rng, kSymbols.size())]);
  return words;
}

std::vector<std::string> ReverseProblem::translate(std::span<const std::string> source) const {
  return {source.rbegin(), source.rend()};
}

ToyGrammarProblem::ToyGrammarProblem() {
  const std::size_t nc = kConsonants.size();
  const std::size_t nv = kVowels.size();
  // (i mod 14, i mod 5) is unique for i < 70, so the leading two letters
  // already distinguish the words.
  for (std::size_t i = 0; i < kLexiconSize; ++i) {
    std::string src{kConsonants[i % nc], kVowels[i % nv], kConsonants[(3 * i + 1) % nc]};
    std::string tgt{kVowels[i % nv], kConsonants[i % nc], kVowels[(i / 3) % nv], 'x'};
    source_index_.emplace(src, i);
    source_words_.push_back(std::move(src));
    target_words_.push_back(std::move(tgt));
  }
}

std::vector<std::string> ToyGrammarProblem::translate(std::span<const std::string> source) const {
  std::vector<std::size_t> idx;
  idx.reserve(source.size());
  for (const auto& w : source) {
    auto it = source_index_.find(w);
    if (it == source_index_.end()) throw std::invalid_argument("toy grammar: unknown word " + w);
    idx.push_back(it->second);
  }
  for (std::size_t i = 0; i + 1 < idx.size(); ++i) {
    if (is_adjective(idx[i]) && is_noun(idx[i + 1])) {
      std::swap(idx[i], idx[i + 1]);
      ++i;
    }
  }
  std::vector<std::string> out;
  out.reserve(idx.size());
  // 37 is odd, so i -> 37i + 11 (mod 64) is a bijection.
  for (std::size_t i : idx) out.push_back(target_words_[(37 * i + 11) % kLexiconSize]);
  return out;
}

std::vector<std::string> ToyGrammarProblem::sample_source(Rng& rng, const HParams& hp) const {
  std::vector<std::string> words(sentence_length(rng, hp));
  for (auto& w : words) w = source_words_[uniform_index(rng, source_words_.size())];
  return words;
}

void register_problem(std::shared_ptr<const Problem> problem) {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  const std::string name = problem->name();
  if (!r.problems.emplace(name, std::move(problem)).second) {
    throw std::logic_error("problem already registered: " + name);
  }
}

std::shared_ptr<const Problem> find_problem(const std::string& name) {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  auto it = r.problems.find(name);
  if (it == r.problems.end()) throw std::out_of_range("unknown problem: " + name);
  return it->second;
}

std::vector<std::string> problem_names() {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  std::vector<std::string> names;
  for (const auto& [name, p] : r.problems) names.push_back(name);
  return names;
}

}  // namespace t2t
