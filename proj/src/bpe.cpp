// SPDX-License-Identifier: Apache-2.0
#include "t2t/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

namespace t2t {
namespace {

const std::vector<std::string> kReserved = {"<pad>", "<eos>", "<unk>"};

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = text.find(' ', start);
    if (pos == std::string_view::npos) {
      words.push_back(text.substr(start));
      return words;
    }
    words.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

bool is_reserved(const std::string& token) {
  return std::find(kReserved.begin(), kReserved.end(), token) != kReserved.end();
}

}  // namespace

std::vector<std::string> split_chars(std::string_view text) {
  std::vector<std::string> chars;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t len = utf8_length(static_cast<unsigned char>(text[i]));
    if (i + len > text.size()) len = 1;
    for (std::size_t j = 1; j < len; ++j) {
      if ((static_cast<unsigned char>(text[i + j]) & 0xC0) != 0x80) {
        len = 1;
        break;
      }
    }
    chars.emplace_back(text.substr(i, len));
    i += len;
  }
  return chars;
}

SubwordVocab::SubwordVocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!token_to_id_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("vocab: duplicate token '" + tokens_[i] + "'");
    }
  }
}

SubwordVocab SubwordVocab::learn(std::span<const std::string> corpus, std::size_t num_merges) {
  if (corpus.empty()) throw std::invalid_argument("learn_bpe: empty corpus");

  const std::string marker(kEndOfWord);
  std::map<std::string, long> word_freq;
  std::set<std::string> charset;
  for (const std::string& line : corpus) {
    if (line.empty()) continue;
    for (std::string_view word : split_words(line)) {
      ++word_freq[std::string(word)];
      for (std::string& c : split_chars(word)) {
        if (c != marker) charset.insert(std::move(c));
      }
    }
  }
  charset.insert(marker);

  std::vector<std::string> tokens = kReserved;
  tokens.insert(tokens.end(), charset.begin(), charset.end());
  std::set<std::string> known(tokens.begin(), tokens.end());

  struct Word {
    std::vector<std::string> symbols;
    long freq;
  };
  std::vector<Word> words;
  for (const auto& [text, freq] : word_freq) {
    auto symbols = split_chars(text);
    symbols.push_back(marker);
    words.push_back({std::move(symbols), freq});
  }

  std::vector<std::pair<std::string, std::string>> merges;
  while (merges.size() < num_merges) {
    std::map<std::pair<std::string, std::string>, long> counts;
    for (const Word& w : words) {
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
        counts[{w.symbols[i], w.symbols[i + 1]}] += w.freq;
      }
    }
    // std::map iterates pairs in lexicographic order, so the first maximum
    // wins ties.
    const std::pair<std::string, std::string>* best = nullptr;
    long best_count = 1;
    for (const auto& [pair, count] : counts) {
      if (count > best_count && !is_reserved(pair.first + pair.second)) {
        best = &pair;
        best_count = count;
      }
    }
    if (!best) break;
    const auto [left, right] = *best;
    const std::string product = left + right;
    for (Word& w : words) {
      std::vector<std::string> merged;
      merged.reserve(w.symbols.size());
      for (std::size_t i = 0; i < w.symbols.size(); ++i) {
        if (i + 1 < w.symbols.size() && w.symbols[i] == left && w.symbols[i + 1] == right) {
          merged.push_back(product);
          ++i;
        } else {
          merged.push_back(w.symbols[i]);
        }
      }
      w.symbols = std::move(merged);
    }
    merges.emplace_back(left, right);
    if (known.insert(product).second) tokens.push_back(product);
  }

  SubwordVocab vocab(std::move(tokens));
  vocab.merges_ = std::move(merges);
  return vocab;
}

SubwordVocab SubwordVocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("vocab: cannot read " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  if (tokens.size() < kReserved.size() ||
      !std::equal(kReserved.begin(), kReserved.end(), tokens.begin())) {
    throw std::runtime_error("vocab: " + path.string() + " does not start with reserved tokens");
  }
  return SubwordVocab(std::move(tokens));
}

void SubwordVocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("vocab: cannot write " + path.string());
  for (const std::string& t : tokens_) out << t << '\n';
  if (!out) throw std::runtime_error("vocab: write failed for " + path.string());
}

int SubwordVocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? -1 : it->second;
}

void SubwordVocab::encode_word(std::string_view word, std::vector<int>& out) const {
  const std::string marker(kEndOfWord);
  std::vector<int> symbols;
  for (const std::string& c : split_chars(word)) {
    const int i = c == marker ? -1 : id(c);
    symbols.push_back(i < 0 ? kUnkId : i);
  }
  symbols.push_back(id(marker));

  // Merge products rank by id, which is their learned order. Repeatedly
  // merge the adjacent pair with the earliest product, leftmost first.
  for (;;) {
    int best_rank = -1;
    std::size_t best_pos = 0;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      if (symbols[i] == kUnkId || symbols[i + 1] == kUnkId) continue;
      const int rank = id(tokens_[symbols[i]] + tokens_[symbols[i + 1]]);
      if (rank > kUnkId && (best_rank < 0 || rank < best_rank)) {
        best_rank = rank;
        best_pos = i;
      }
    }
    if (best_rank < 0) break;
    symbols[best_pos] = best_rank;
    symbols.erase(symbols.begin() + static_cast<long>(best_pos) + 1);
  }
  out.insert(out.end(), symbols.begin(), symbols.end());
}

std::vector<int> SubwordVocab::encode(std::string_view text) const {
  std::vector<int> ids;
  if (text.empty()) return ids;
  for (std::string_view word : split_words(text)) encode_word(word, ids);
  return ids;
}

std::string SubwordVocab::decode(std::span<const int> ids) const {
  std::string out;
  bool ends_with_marker = false;
  for (int i : ids) {
    if (i == kEosId) break;
    if (i == kPadId) continue;
    const std::string& t = token(i);
    std::string_view piece = t;
    ends_with_marker = false;
    while (!piece.empty()) {
      const std::size_t pos = piece.find(kEndOfWord);
      if (pos == std::string_view::npos) {
        out.append(piece);
        break;
      }
      out.append(piece.substr(0, pos));
      out.push_back(' ');
      piece.remove_prefix(pos + kEndOfWord.size());
      ends_with_marker = piece.empty();
    }
  }
  if (ends_with_marker) out.pop_back();
  return out;
}

}  // namespace t2t
