#pragma once

// Word-level analyzer: merges subword tokens into words. A token opens a new
// word iff its first character is a boundary character (whitespace or
// sentence punctuation); otherwise it continues the preceding word.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tcprobe/error.hpp"
#include "tcprobe/types.hpp"

namespace tcprobe {

struct BoundaryRule {
  std::string boundary_prefixes = " \n.,:;";

  bool is_boundary(char c) const { return boundary_prefixes.find(c) != std::string::npos; }

  bool starts_word(std::string_view token_text) const {
    return !token_text.empty() && is_boundary(token_text.front());
  }

  void validate() const { require(!boundary_prefixes.empty(), "boundary rule has no boundary characters"); }

  friend bool operator==(const BoundaryRule&, const BoundaryRule&) = default;
};

inline std::vector<WordSpan> segment(std::span<const TokenRef> tokens, const BoundaryRule& rule = {}) {
  require(!tokens.empty(), "nothing to segment");
  rule.validate();
  std::vector<WordSpan> words;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    if (words.empty() || rule.starts_word(t.text)) words.push_back(WordSpan{{}, {}, i});
    words.back().text += t.text;
    words.back().token_ids.push_back(t.id);
  }
  return words;
}

/// True iff `next` would open a new word, i.e. the word formed by `emitted`
/// is finished. The boundary token itself is not part of the word.
inline bool word_complete(std::span<const TokenRef> emitted, const TokenRef& next, const BoundaryRule& rule = {}) {
  require(!emitted.empty(), "word_complete needs at least one emitted token");
  return rule.starts_word(next.text);
}

/// Character-level split of raw text with the same rule: every boundary
/// character begins a new piece.
inline std::vector<std::string> split_words(std::string_view text, const BoundaryRule& rule = {}) {
  std::vector<std::string> out;
  for (char c : text) {
    if (out.empty() || rule.is_boundary(c)) out.emplace_back();
    out.back() += c;
  }
  return out;
}

}  // namespace tcprobe
