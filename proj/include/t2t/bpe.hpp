// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace t2t {

inline constexpr int kPadId = 0;
inline constexpr int kEosId = 1;
inline constexpr int kUnkId = 2;

// Appended to every space-delimited word before merging so that decoding
// can restore the spaces. Text containing this character encodes it as UNK.
inline constexpr std::string_view kEndOfWord = "\xe2\x96\x81";  // U+2581

// Splits UTF-8 text into code points; malformed bytes become one symbol each.
std::vector<std::string> split_chars(std::string_view text);

// Byte-pair subword vocabulary. Ids are dense: the reserved tokens, then
// every corpus character (plus the end-of-word marker) in byte order, then
// merge products in the order they were learned.
class SubwordVocab {
 public:
  // Frequency-greedy merges; ties go to the lexicographically smallest
  // pair. Stops early once no pair occurs at least twice.
  static SubwordVocab learn(std::span<const std::string> corpus, std::size_t num_merges);

  // Vocabulary file: one token per line, line number == id.
  static SubwordVocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // Applies merges in learned order; PAD/EOS are never produced.
  std::vector<int> encode(std::string_view text) const;
  // Stops at the first EOS and skips PAD.
  std::string decode(std::span<const int> ids) const;

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  // -1 when absent.
  int id(const std::string& token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Learned pairs, in order. Empty for a vocabulary read from disk; the
  // token order alone determines encoding.
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }

 private:
  explicit SubwordVocab(std::vector<std::string> tokens);
  void encode_word(std::string_view word, std::vector<int>& out) const;

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::pair<std::string, std::string>> merges_;
};

inline SubwordVocab learn_bpe(std::span<const std::string> corpus, std::size_t num_merges) {
  return SubwordVocab::learn(corpus, num_merges);
}

}  // namespace t2t
