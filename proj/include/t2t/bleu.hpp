// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace t2t {

using TokenSeq = std::vector<std::string>;

TokenSeq whitespace_tokens(std::string_view text);

// Corpus BLEU in [0, 100]: uniform weights over 1..4-gram clipped
// precisions and a brevity penalty, no smoothing. Any zero precision gives
// 0. Throws on an empty corpus or mismatched list lengths.
double corpus_bleu(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references);

}  // namespace t2t
