#pragma once

// Shared value types: tokens, words, T/C labels, labeled sequences and
// next-token distributions. Every type serializes to a single JSON object so
// it can be written as one line of a line-delimited file.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "tcprobe/error.hpp"

namespace tcprobe {

using json = nlohmann::json;
using TokenId = std::int64_t;

inline constexpr double kMassTolerance = 1e-9;

struct TokenRef {
  TokenId id = 0;
  std::string text;

  friend bool operator==(const TokenRef&, const TokenRef&) = default;
};

struct WordSpan {
  std::string text;
  std::vector<TokenId> token_ids;
  std::size_t start_index = 0;

  friend bool operator==(const WordSpan&, const WordSpan&) = default;
};

/// Level of a word in an n-level template hierarchy. With n = 2, level 1 is
/// template and level 2 is content.
struct TCLabel {
  static constexpr int kTemplate = 1;
  static constexpr int kContent = 2;

  int level = kTemplate;

  bool is_template() const { return level == kTemplate; }

  friend bool operator==(const TCLabel&, const TCLabel&) = default;
};

inline constexpr TCLabel kTemplateLabel{TCLabel::kTemplate};
inline constexpr TCLabel kContentLabel{TCLabel::kContent};

struct LabeledSequence {
  std::vector<WordSpan> words;
  std::vector<TCLabel> labels;
  std::size_t prompt_len = 0;
  std::size_t question_len = 0;
  int n_levels = 2;

  std::size_t size() const { return words.size(); }
  std::size_t answer_begin() const { return prompt_len + question_len; }

  std::string text(std::size_t begin = 0, std::size_t end = std::string::npos) const {
    std::string out;
    end = std::min(end, words.size());
    for (std::size_t i = begin; i < end; ++i) out += words[i].text;
    return out;
  }

  std::vector<std::string> word_texts() const {
    std::vector<std::string> out;
    out.reserve(words.size());
    for (const auto& w : words) out.push_back(w.text);
    return out;
  }

  friend bool operator==(const LabeledSequence&, const LabeledSequence&) = default;
};

struct Violation {
  std::optional<std::size_t> word_index;
  std::string message;
};

/// Returns every invariant violation of `seq`; an empty result means the
/// sequence is well formed.
inline std::vector<Violation> validate_labeled_sequence(const LabeledSequence& seq) {
  std::vector<Violation> out;
  if (seq.words.empty()) {
    out.push_back({std::nullopt, "empty sequence"});
    return out;
  }
  if (seq.n_levels < 2) out.push_back({std::nullopt, "n_levels must be at least 2"});
  if (seq.labels.size() != seq.words.size()) {
    out.push_back({std::nullopt, "labels and words differ in length"});
    return out;
  }
  if (seq.answer_begin() > seq.words.size()) {
    out.push_back({std::nullopt, "prompt and question extend past the sequence"});
  }
  std::size_t expected_start = seq.words.front().start_index;
  for (std::size_t i = 0; i < seq.words.size(); ++i) {
    const auto& w = seq.words[i];
    const int level = seq.labels[i].level;
    if (w.text.empty()) out.push_back({i, "empty word text"});
    if (w.token_ids.empty()) out.push_back({i, "word has no tokens"});
    if (std::any_of(w.token_ids.begin(), w.token_ids.end(), [](TokenId id) { return id < 0; })) {
      out.push_back({i, "negative token id"});
    }
    if (w.start_index != expected_start) out.push_back({i, "words are not contiguous"});
    expected_start = w.start_index + w.token_ids.size();
    if (level < 1 || level > seq.n_levels) {
      out.push_back({i, "label level out of range"});
      continue;
    }
    if (i < seq.prompt_len && level != TCLabel::kTemplate) {
      out.push_back({i, "prompt must be template"});
    } else if (i >= seq.prompt_len && i < seq.answer_begin() && level == TCLabel::kTemplate) {
      out.push_back({i, "question must be content"});
    }
  }
  return out;
}

struct TokenProb {
  TokenId id = 0;
  std::string text;
  double p = 0.0;

  friend bool operator==(const TokenProb&, const TokenProb&) = default;
};

/// Next-token distribution over an explicit support plus one bucket holding
/// the mass of every token outside it.
struct Distribution {
  std::vector<TokenProb> support;
  double other_mass = 0.0;

  static Distribution one_hot(const TokenRef& t) { return Distribution{{{t.id, t.text, 1.0}}, 0.0}; }

  double total() const {
    double s = other_mass;
    for (const auto& e : support) s += e.p;
    return s;
  }

  const TokenProb* argmax() const {
    const TokenProb* best = nullptr;
    for (const auto& e : support) {
      if (!best || e.p > best->p || (e.p == best->p && e.id < best->id)) best = &e;
    }
    return best;
  }

  double prob(TokenId id) const {
    for (const auto& e : support)
      if (e.id == id) return e.p;
    return 0.0;
  }

  /// Sorts by descending probability (ties by id) and keeps at most `top_k`
  /// entries; truncated mass moves into `other_mass`.
  void truncate(std::size_t top_k) {
    std::sort(support.begin(), support.end(), [](const TokenProb& a, const TokenProb& b) {
      return a.p != b.p ? a.p > b.p : a.id < b.id;
    });
    if (support.size() > top_k) support.resize(top_k);
    double kept = 0.0;
    for (const auto& e : support) kept += e.p;
    other_mass = std::max(0.0, 1.0 - kept);
    if (other_mass < kMassTolerance * 1e-3) other_mass = 0.0;
  }

  void validate() const {
    std::unordered_set<TokenId> seen;
    for (const auto& e : support) {
      require(e.p >= 0.0 && std::isfinite(e.p), "negative or non-finite probability", Errc::protocol_violation);
      require(seen.insert(e.id).second, "duplicate token id in support", Errc::protocol_violation);
    }
    require(other_mass >= 0.0 && std::isfinite(other_mass), "negative other_mass", Errc::protocol_violation);
    require(std::abs(total() - 1.0) <= kMassTolerance, "distribution mass is not 1", Errc::protocol_violation);
  }

  friend bool operator==(const Distribution&, const Distribution&) = default;
};

struct ProbeRecord {
  std::size_t position = 0;
  std::string word;
  std::vector<Distribution> distributions;
  double variance_raw = 0.0;
  double variance_norm = 0.0;
  std::optional<TCLabel> truth_label;
};

// JSON serialization (field names follow the type definitions above).

inline void to_json(json& j, const TokenRef& t) { j = json{{"id", t.id}, {"text", t.text}}; }
inline void from_json(const json& j, TokenRef& t) {
  j.at("id").get_to(t.id);
  j.at("text").get_to(t.text);
}

inline void to_json(json& j, const WordSpan& w) {
  j = json{{"text", w.text}, {"token_ids", w.token_ids}, {"start_index", w.start_index}};
}
inline void from_json(const json& j, WordSpan& w) {
  j.at("text").get_to(w.text);
  j.at("token_ids").get_to(w.token_ids);
  j.at("start_index").get_to(w.start_index);
}

inline void to_json(json& j, const TCLabel& l) { j = l.level; }
inline void from_json(const json& j, TCLabel& l) { j.get_to(l.level); }

inline void to_json(json& j, const LabeledSequence& s) {
  j = json{{"words", s.words},
           {"labels", s.labels},
           {"prompt_len", s.prompt_len},
           {"question_len", s.question_len},
           {"n_levels", s.n_levels}};
}
inline void from_json(const json& j, LabeledSequence& s) {
  j.at("words").get_to(s.words);
  j.at("labels").get_to(s.labels);
  j.at("prompt_len").get_to(s.prompt_len);
  j.at("question_len").get_to(s.question_len);
  j.at("n_levels").get_to(s.n_levels);
}

inline void to_json(json& j, const TokenProb& e) { j = json{{"id", e.id}, {"text", e.text}, {"p", e.p}}; }
inline void from_json(const json& j, TokenProb& e) {
  j.at("id").get_to(e.id);
  e.text = j.value("text", std::string{});
  j.at("p").get_to(e.p);
}

inline void to_json(json& j, const Distribution& d) { j = json{{"support", d.support}, {"other_mass", d.other_mass}}; }
inline void from_json(const json& j, Distribution& d) {
  j.at("support").get_to(d.support);
  j.at("other_mass").get_to(d.other_mass);
}

inline void to_json(json& j, const ProbeRecord& r) {
  j = json{{"position", r.position},
           {"word", r.word},
           {"distributions", r.distributions},
           {"variance_raw", r.variance_raw},
           {"variance_norm", r.variance_norm},
           {"truth_label", r.truth_label ? json(*r.truth_label) : json(nullptr)}};
}
inline void from_json(const json& j, ProbeRecord& r) {
  j.at("position").get_to(r.position);
  j.at("word").get_to(r.word);
  r.distributions = j.value("distributions", std::vector<Distribution>{});
  j.at("variance_raw").get_to(r.variance_raw);
  j.at("variance_norm").get_to(r.variance_norm);
  if (j.contains("truth_label") && !j.at("truth_label").is_null()) r.truth_label = j.at("truth_label").get<TCLabel>();
}

}  // namespace tcprobe
