#pragma once

// Executable ideal template-content model. Next-token distributions are read
// off the grammar: template words and computed content are forced (one-hot);
// free question slots are uniform over their domain.

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tcprobe/error.hpp"
#include "tcprobe/grammar.hpp"
#include "tcprobe/hash.hpp"
#include "tcprobe/types.hpp"
#include "tcprobe/wordseg.hpp"

namespace tcprobe {

inline constexpr std::string_view kEndOfText = "<|endoftext|>";

/// Token ids for an oracle. Surfaces known from the grammar get small dense
/// ids; strings produced by computed slots get ids derived from their hash so
/// that separate processes serving the same grammar agree on them.
class Vocabulary {
 public:
  static constexpr TokenId kDynamicBase = TokenId{1} << 32;

  explicit Vocabulary(const std::set<std::string>& base) {
    add(std::string(kEndOfText), 0);
    for (const auto& s : base)
      if (!ids_.count(s)) add(s, static_cast<TokenId>(ids_.size()));
    base_size_ = ids_.size();
  }

  TokenRef token(const std::string& text) const {
    std::lock_guard lock(mu_);
    if (auto it = ids_.find(text); it != ids_.end()) return {it->second, text};
    const TokenId id = kDynamicBase + static_cast<TokenId>(fnv1a64(text) & ((std::uint64_t{1} << 40) - 1));
    auto [it, inserted] = texts_.emplace(id, text);
    if (!inserted && it->second != text) fail(Errc::internal, "token id collision for '" + text + "'");
    ids_.emplace(text, id);
    return {id, text};
  }

  std::optional<std::string> text_of(TokenId id) const {
    std::lock_guard lock(mu_);
    auto it = texts_.find(id);
    if (it == texts_.end()) return std::nullopt;
    return it->second;
  }

  TokenRef eos() const { return {0, std::string(kEndOfText)}; }
  std::size_t base_size() const { return base_size_; }

 private:
  void add(const std::string& s, TokenId id) {
    ids_.emplace(s, id);
    texts_.emplace(id, s);
  }

  mutable std::mutex mu_;
  mutable std::unordered_map<std::string, TokenId> ids_;
  mutable std::unordered_map<TokenId, std::string> texts_;
  std::size_t base_size_ = 0;
};

struct OracleOptions {
  double epsilon = 0.0;
  std::vector<std::string> distractors;
};

/// A reading of a prefix: the element being generated, its full surface,
/// how many characters of it are already present, and the roles bound so
/// far. `element == size()` means the answer is complete.
struct Hypothesis {
  std::size_t element = 0;
  std::string surface;
  std::size_t consumed = 0;
  Bindings bindings;
  double weight = 1.0;
};

using QuestionValues = std::map<std::string, std::string>;

class Oracle {
 public:
  explicit Oracle(TaskGrammar grammar, OracleOptions options = {})
      : g_(std::move(grammar)), opt_(std::move(options)) {
    g_.finalize();
    require(opt_.epsilon >= 0.0 && opt_.epsilon < 1.0, "epsilon must be in [0, 1)");
    require(opt_.epsilon == 0.0 || !opt_.distractors.empty(), "epsilon > 0 needs a distractor set");
    std::set<std::string> base;
    auto add_word = [&](const std::string& w) {
      auto it = g_.token_splits.find(w);
      if (it == g_.token_splits.end()) base.insert(w);
      else base.insert(it->second.begin(), it->second.end());
    };
    for (const auto& e : g_.elements) {
      if (e.is_fixed()) {
        add_word(e.text);
        continue;
      }
      for (const auto& v : g_.content_roles.at(e.role).values) add_word(e.text + v);
    }
    for (const auto& d : opt_.distractors) add_word(d);
    vocab_ = std::make_shared<Vocabulary>(base);
  }

  const TaskGrammar& grammar() const { return g_; }
  const Vocabulary& vocabulary() const { return *vocab_; }
  const OracleOptions& options() const { return opt_; }
  TokenRef eos() const { return vocab_->eos(); }

  std::vector<TokenRef> word_tokens(const std::string& word) const {
    std::vector<TokenRef> out;
    if (auto it = g_.token_splits.find(word); it != g_.token_splits.end()) {
      for (const auto& p : it->second) out.push_back(vocab_->token(p));
    } else {
      out.push_back(vocab_->token(word));
    }
    return out;
  }

  std::vector<TokenRef> tokenize(std::string_view text) const {
    require(!text.empty(), "cannot tokenize empty text");
    std::vector<TokenRef> out;
    for (const auto& w : split_words(text, g_.boundary)) {
      auto t = word_tokens(w);
      out.insert(out.end(), t.begin(), t.end());
    }
    return out;
  }

  /// Every reading of `text` as a prefix of some grammar sequence.
  std::vector<Hypothesis> locate(std::string_view text) const {
    const auto& els = g_.elements;
    Bindings b;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < els.size(); ++i) {
      const auto& e = els[i];
      if (pos == text.size()) return expand(i, b, 1.0);
      const std::string_view rest = text.substr(pos);
      if (!e.is_input()) {
        std::string surface = e.text;
        std::optional<BoundValue> bv;
        if (e.is_computed()) {
          bv = evaluate(e, b);
          surface += checked_value(bv->value);
        }
        if (rest.size() < surface.size()) {
          if (!std::string_view(surface).starts_with(rest)) off_template(i);
          if (bv) b[e.role] = *bv;
          return {Hypothesis{i, surface, rest.size(), b, 1.0}};
        }
        if (!rest.starts_with(surface)) off_template(i);
        if (bv) b[e.role] = *bv;
        pos += surface.size();
        continue;
      }
      const auto& role = g_.content_roles.at(e.role);
      if (rest.size() <= e.text.size() || !rest.starts_with(e.text)) {
        if (!std::string_view(e.text).starts_with(rest)) off_template(i);
        return partial_input(i, rest, b);
      }
      std::size_t end = e.text.size();
      while (end < rest.size() && !g_.boundary.is_boundary(rest[end])) ++end;
      if (end == rest.size()) return partial_input(i, rest, b);
      const std::string value(rest.substr(e.text.size(), end - e.text.size()));
      if (!role.contains(value)) off_template(i);
      b[e.role] = BoundValue{value, role.tag_of(value)};
      pos += end;
    }
    if (pos != text.size()) fail(Errc::off_template, "off-template prefix: text continues past the answer");
    return {Hypothesis{els.size(), {}, 0, b, 1.0}};
  }

  Distribution next(std::span<const TokenRef> prefix) const {
    std::string text;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
      if (prefix[i].id == eos().id) fail(Errc::off_template, "off-template prefix: generation already ended");
      text += prefix[i].text;
    }
    std::map<TokenId, std::pair<std::string, double>> mass;
    double total = 0.0;
    for (const auto& h : locate(text)) {
      TokenRef t;
      if (h.element == g_.elements.size()) {
        t = eos();
      } else {
        auto piece = piece_at(h.surface, h.consumed);
        if (!piece) continue;
        t = *piece;
      }
      auto& slot = mass[t.id];
      slot.first = t.text;
      slot.second += h.weight;
      total += h.weight;
    }
    if (total <= 0.0) fail(Errc::off_template, "off-template prefix: prefix splits a token");
    if (opt_.epsilon > 0.0) {
      for (auto& [id, m] : mass) m.second *= (1.0 - opt_.epsilon) / total;
      total = 1.0;
      const double share = opt_.epsilon / static_cast<double>(opt_.distractors.size());
      for (const auto& d : opt_.distractors) {
        const TokenRef t = word_tokens(d).front();
        auto& slot = mass[t.id];
        slot.first = t.text;
        slot.second += share;
      }
    }
    Distribution out;
    for (const auto& [id, m] : mass) out.support.push_back({id, m.first, m.second / total});
    out.truncate(out.support.size());
    return out;
  }

  /// Tokens of the prompt and question for the given input values.
  std::vector<TokenRef> prompt_tokens(const QuestionValues& values) const {
    Bindings b = bind_inputs(values);
    std::vector<TokenRef> out;
    for (const auto& e : g_.elements) {
      if (e.section == Section::answer) break;
      auto t = word_tokens(surface_of(e, b));
      out.insert(out.end(), t.begin(), t.end());
    }
    return out;
  }

  /// Autoregressive greedy generation from the prompt and question.
  LabeledSequence generate(const QuestionValues& values) const { return complete(prompt_tokens(values)); }

  /// Greedy continuation of `prefix` until the end-of-text token.
  LabeledSequence complete(std::vector<TokenRef> tokens) const {
    require(!tokens.empty(), "prefix must be non-empty");
    const std::size_t guard = tokens.size() + 64 * (g_.elements.size() + 1);
    while (true) {
      const auto d = next(tokens);
      const TokenProb* best = d.argmax();
      if (best->id == eos().id) break;
      tokens.push_back({best->id, best->text});
      if (tokens.size() > guard) fail(Errc::internal, "generation did not terminate");
    }
    return label(tokens);
  }

  /// Direct template filling, without querying the next-token model.
  LabeledSequence instantiate(const QuestionValues& values) const {
    Bindings b = bind_inputs(values);
    std::vector<TokenRef> tokens;
    for (const auto& e : g_.elements) {
      auto t = word_tokens(surface_of(e, b));
      tokens.insert(tokens.end(), t.begin(), t.end());
    }
    return label(tokens);
  }

  /// Attaches grammar labels to a complete tokenized sequence.
  LabeledSequence label(std::span<const TokenRef> tokens) const {
    LabeledSequence seq;
    seq.words = segment(tokens, g_.boundary);
    require(seq.words.size() == g_.elements.size(), "sequence does not align with the grammar", Errc::off_template);
    seq.n_levels = g_.n_levels;
    seq.prompt_len = g_.count(Section::prompt);
    seq.question_len = g_.count(Section::question);
    for (const auto& e : g_.elements) seq.labels.push_back(TCLabel{e.level});
    return seq;
  }

  /// Input values that produced `seq`, read from its prompt and question.
  QuestionValues question_values(const LabeledSequence& seq) const {
    QuestionValues out;
    for (const auto& [role, bv] : bindings_of(seq))
      if (is_input_role(role)) out[role] = bv.value;
    return out;
  }

  /// Per-word role tags: fixed words carry their text (or declared tag);
  /// slots carry "role=tag". Throws if `seq` is not a grammar sequence.
  std::vector<std::string> word_tags(const LabeledSequence& seq) const {
    std::vector<std::string> tags;
    walk(seq, [&](const GrammarElement& e, const BoundValue* bv) {
      tags.push_back(e.is_fixed() ? e.fixed_tag() : e.role + "=" + bv->tag);
    });
    return tags;
  }

  Bindings bindings_of(const LabeledSequence& seq) const {
    Bindings b;
    walk(seq, [&](const GrammarElement& e, const BoundValue* bv) {
      if (bv) b[e.role] = *bv;
    });
    return b;
  }

  /// True iff greedy generation from the sample's prompt and question
  /// reproduces the whole sample.
  bool reproduces(const LabeledSequence& sample) const {
    try {
      const auto got = complete(tokenize(sample.text(0, sample.answer_begin())));
      return got.word_texts() == sample.word_texts() && got.labels == sample.labels &&
             got.prompt_len == sample.prompt_len && got.question_len == sample.question_len;
    } catch (const Error&) {
      return false;
    }
  }

  void remember(const LabeledSequence& sample) {
    require(reproduces(sample), "sample is not reproducible by this grammar");
    remembered_.push_back(sample);
  }

  const std::vector<LabeledSequence>& remembered() const { return remembered_; }

 private:
  [[noreturn]] static void off_template(std::size_t element) {
    fail(Errc::off_template, "off-template prefix at element " + std::to_string(element));
  }

  bool is_input_role(const std::string& role) const {
    for (const auto& e : g_.elements)
      if (e.is_input() && e.role == role) return true;
    return false;
  }

  const std::string& checked_value(const std::string& v) const {
    require(!v.empty(), "computed slot produced an empty value");
    for (char c : v) require(!g_.boundary.is_boundary(c), "computed value '" + v + "' contains a word boundary");
    return v;
  }

  std::string surface_of(const GrammarElement& e, Bindings& b) const {
    if (e.is_fixed()) return e.text;
    if (e.is_computed()) {
      auto bv = evaluate(e, b);
      checked_value(bv.value);
      b[e.role] = bv;
    }
    return e.text + b.at(e.role).value;
  }

  Bindings bind_inputs(const QuestionValues& values) const {
    Bindings b;
    for (const auto& [role, v] : values) {
      require(is_input_role(role), "unknown input role '" + role + "'");
      const auto& r = g_.content_roles.at(role);
      require(r.contains(v), "value '" + v + "' is not in the domain of role '" + role + "'");
      b[role] = BoundValue{v, r.tag_of(v)};
    }
    for (const auto& role : g_.input_roles()) {
      if (!b.count(role)) fail(Errc::unbound_role, "role '" + role + "' is not bound");
    }
    return b;
  }

  std::vector<Hypothesis> expand(std::size_t i, const Bindings& b, double weight) const {
    if (i == g_.elements.size()) return {Hypothesis{i, {}, 0, b, weight}};
    const auto& e = g_.elements[i];
    if (e.is_fixed()) return {Hypothesis{i, e.text, 0, b, weight}};
    if (e.is_computed()) {
      Bindings nb = b;
      auto bv = evaluate(e, nb);
      std::string surface = e.text + checked_value(bv.value);
      nb[e.role] = std::move(bv);
      return {Hypothesis{i, std::move(surface), 0, std::move(nb), weight}};
    }
    const auto& role = g_.content_roles.at(e.role);
    std::vector<Hypothesis> out;
    const double w = weight / static_cast<double>(role.values.size());
    for (const auto& v : role.values) {
      Bindings nb = b;
      nb[e.role] = BoundValue{v, role.tag_of(v)};
      out.push_back(Hypothesis{i, e.text + v, 0, std::move(nb), w});
    }
    return out;
  }

  std::vector<Hypothesis> partial_input(std::size_t i, std::string_view rest, const Bindings& b) const {
    const auto& e = g_.elements[i];
    const auto& role = g_.content_roles.at(e.role);
    std::vector<const std::string*> matching;
    for (const auto& v : role.values)
      if (rest.size() <= e.text.size() + v.size() && std::string_view(e.text + v).starts_with(rest))
        matching.push_back(&v);
    if (matching.empty()) off_template(i);
    const double w = 1.0 / static_cast<double>(matching.size());
    std::vector<Hypothesis> out;
    for (const auto* v : matching) {
      Bindings nb = b;
      nb[e.role] = BoundValue{*v, role.tag_of(*v)};
      std::string surface = e.text + *v;
      if (rest.size() < surface.size()) {
        out.push_back(Hypothesis{i, std::move(surface), rest.size(), std::move(nb), w});
      } else {
        auto more = expand(i + 1, nb, w);
        out.insert(out.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
      }
    }
    return out;
  }

  /// The token of `surface` starting at character `consumed`, if that is a
  /// token boundary.
  std::optional<TokenRef> piece_at(const std::string& surface, std::size_t consumed) const {
    std::size_t at = 0;
    for (auto& t : word_tokens(surface)) {
      if (at == consumed) return t;
      at += t.text.size();
      if (at > consumed) break;
    }
    return std::nullopt;
  }

  template <typename F>
  void walk(const LabeledSequence& seq, F&& visit) const {
    require(seq.words.size() == g_.elements.size(), "sample does not align with grammar '" + g_.name + "'",
            Errc::off_template);
    Bindings b;
    for (std::size_t i = 0; i < seq.words.size(); ++i) {
      const auto& e = g_.elements[i];
      const auto& w = seq.words[i].text;
      auto mismatch = [&] { off_template(i); };
      if (e.is_fixed()) {
        if (w != e.text) mismatch();
        visit(e, nullptr);
        continue;
      }
      if (!std::string_view(w).starts_with(e.text)) mismatch();
      const std::string value = w.substr(e.text.size());
      BoundValue bv;
      if (e.is_input()) {
        const auto& role = g_.content_roles.at(e.role);
        if (!role.contains(value)) mismatch();
        bv = BoundValue{value, role.tag_of(value)};
      } else {
        bv = evaluate(e, b);
        if (bv.value != value) mismatch();
      }
      b[e.role] = bv;
      visit(e, &bv);
    }
  }

  TaskGrammar g_;
  OracleOptions opt_;
  std::shared_ptr<Vocabulary> vocab_;
  std::vector<LabeledSequence> remembered_;
};

}  // namespace tcprobe
