#pragma once

// Word-level template/content classification by thresholding the variance
// across N perturbed prompts, decoding each replacement's own content words.

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tcprobe/backend.hpp"
#include "tcprobe/datasets.hpp"
#include "tcprobe/error.hpp"
#include "tcprobe/metrics.hpp"
#include "tcprobe/types.hpp"
#include "tcprobe/wordseg.hpp"

namespace tcprobe {

enum class FilterMethod { renormalize, skip_redistribute };

inline std::string to_string(FilterMethod m) {
  return m == FilterMethod::renormalize ? "renormalize" : "skip-redistribute";
}

inline FilterMethod filter_method_from_string(std::string_view s) {
  if (s == "renormalize") return FilterMethod::renormalize;
  if (s == "skip-redistribute") return FilterMethod::skip_redistribute;
  fail(Errc::invalid_input, "unknown filter method: " + std::string(s));
}

struct ClassifierConfig {
  double threshold = 0.4;
  std::vector<std::string> filter_tokens{" ", "\n", " “", " \""};
  FilterMethod filter_method = FilterMethod::renormalize;
  double redistribute_min_p = 0.01;
  std::size_t max_content_tokens = 16;
  BoundaryRule boundary;

  void validate() const {
    require(threshold > 0.0 && threshold < 1.0, "threshold must be in (0, 1)");
    require(redistribute_min_p > 0.0 && redistribute_min_p < 1.0, "redistribution threshold must be in (0, 1)");
    require(max_content_tokens >= 1, "max_content_tokens must be at least 1");
    boundary.validate();
  }

  bool filtered(std::string_view text) const {
    return std::find(filter_tokens.begin(), filter_tokens.end(), text) != filter_tokens.end();
  }

  /// "concat": the letter-concatenation setup. "singleeq": word problems,
  /// where " $" also precedes content and mass is folded forward instead.
  static ClassifierConfig profile(std::string_view name) {
    ClassifierConfig c;
    if (name == "concat") return c;
    if (name == "singleeq") {
      c.threshold = 0.35;
      c.filter_tokens.push_back(" $");
      c.filter_method = FilterMethod::skip_redistribute;
      return c;
    }
    fail(Errc::invalid_input, "unknown classifier profile: " + std::string(name));
  }
};

inline void to_json(json& j, const ClassifierConfig& c) {
  j = json{{"threshold", c.threshold},
           {"filter_tokens", c.filter_tokens},
           {"filter_method", to_string(c.filter_method)},
           {"redistribute_min_p", c.redistribute_min_p},
           {"max_content_tokens", c.max_content_tokens},
           {"boundary", c.boundary.boundary_prefixes}};
}

inline void from_json(const json& j, ClassifierConfig& c) {
  c = ClassifierConfig::profile(j.value("profile", std::string("concat")));
  c.threshold = j.value("threshold", c.threshold);
  c.filter_tokens = j.value("filter_tokens", c.filter_tokens);
  if (j.contains("filter_method")) c.filter_method = filter_method_from_string(j.at("filter_method").get<std::string>());
  c.redistribute_min_p = j.value("redistribute_min_p", c.redistribute_min_p);
  c.max_content_tokens = j.value("max_content_tokens", c.max_content_tokens);
  c.boundary.boundary_prefixes = j.value("boundary", c.boundary.boundary_prefixes);
  c.validate();
}

/// Distribution after the prefix extended by `extra` tokens.
using NextLookup = std::function<Distribution(std::span<const TokenRef> extra)>;

namespace detail {

inline constexpr int kMaxSkipDepth = 2;  // the top level plus one recursion

inline Distribution finish_filtered(std::map<TokenId, TokenProb> acc, double other, double mass) {
  if (!(mass > 0.0)) fail(Errc::degenerate_distribution, "degenerate distribution");
  Distribution out;
  for (auto& [id, e] : acc) {
    e.p /= mass;
    out.support.push_back(std::move(e));
  }
  out.other_mass = other / mass;
  std::sort(out.support.begin(), out.support.end(), [](const TokenProb& a, const TokenProb& b) {
    return a.p != b.p ? a.p > b.p : a.id < b.id;
  });
  return out;
}

inline Distribution filter_impl(const Distribution& d, const NextLookup& lookup, const ClassifierConfig& c,
                                std::vector<TokenRef>& extra, int depth) {
  std::map<TokenId, TokenProb> acc;
  double other = d.other_mass;
  double mass = d.other_mass;
  std::vector<const TokenProb*> removed;
  for (const auto& e : d.support) {
    if (c.filtered(e.text)) {
      removed.push_back(&e);
      continue;
    }
    acc[e.id] = e;
    mass += e.p;
  }
  if (removed.empty()) return d;
  const bool skip = c.filter_method == FilterMethod::skip_redistribute && lookup && depth < kMaxSkipDepth;
  if (skip) {
    for (const auto* f : removed) {
      if (f->p <= c.redistribute_min_p) continue;
      extra.push_back({f->id, f->text});
      Distribution next;
      try {
        next = filter_impl(lookup(extra), lookup, c, extra, depth + 1);
      } catch (const Error& e) {
        extra.pop_back();
        if (e.code() != Errc::degenerate_distribution) throw;
        continue;
      }
      extra.pop_back();
      for (const auto& e : next.support) {
        auto [it, fresh] = acc.try_emplace(e.id, TokenProb{e.id, e.text, 0.0});
        it->second.p += f->p * e.p;
      }
      other += f->p * next.other_mass;
      mass += f->p * next.total();
    }
  }
  return finish_filtered(std::move(acc), other, mass);
}

}  // namespace detail

/// Removes filter tokens from `d`. renormalize rescales the remaining mass;
/// skip-redistribute folds each removed token's continuation (scaled by its
/// probability) into the result when that probability exceeds
/// redistribute_min_p, renormalizing away the rest.
inline Distribution filter_distribution(const Distribution& d, const NextLookup& lookup, const ClassifierConfig& c) {
  std::vector<TokenRef> extra;
  return detail::filter_impl(d, lookup, c, extra, 0);
}

struct DecodedWord {
  std::string text;
  std::vector<TokenRef> tokens;
};

/// Greedy decoding of one word after `prefix`, starting from the (already
/// filtered) first-token distribution. Stops before a token that opens a new
/// word or at end of text.
inline DecodedWord decode_word(const Backend& backend, std::span<const TokenRef> prefix, const Distribution& first,
                               const ClassifierConfig& c, std::optional<TokenId> eos) {
  DecodedWord w;
  const auto* top = first.argmax();
  require(top != nullptr, "empty distribution", Errc::degenerate_distribution);
  if (eos && top->id == *eos) return w;
  w.tokens.push_back({top->id, top->text});
  std::vector<TokenRef> ctx(prefix.begin(), prefix.end());
  ctx.push_back(w.tokens.back());
  while (true) {
    const auto d = backend.next_distribution(ctx);
    const auto* best = d.argmax();
    if (best == nullptr || (eos && best->id == *eos)) break;
    const TokenRef next{best->id, best->text};
    if (word_complete(w.tokens, next, c.boundary)) break;
    w.tokens.push_back(next);
    ctx.push_back(next);
    if (w.tokens.size() > c.max_content_tokens) fail(Errc::runaway_content, "runaway content");
  }
  for (const auto& t : w.tokens) w.text += t.text;
  return w;
}

/// Filters the next-token distribution after `prefix` and decodes the argmax word.
inline std::string decode_content_word(const Backend& backend, std::span<const TokenRef> prefix,
                                       const ClassifierConfig& c) {
  c.validate();
  const std::vector<TokenRef> base(prefix.begin(), prefix.end());
  NextLookup lookup = [&backend, &base](std::span<const TokenRef> extra) {
    std::vector<TokenRef> ctx(base);
    ctx.insert(ctx.end(), extra.begin(), extra.end());
    return backend.next_distribution(ctx);
  };
  const auto first = filter_distribution(backend.next_distribution(prefix), lookup, c);
  return decode_word(backend, prefix, first, c, backend.info().eos_id).text;
}

/// The prompt as written plus N perturbed prompts with other content.
struct PromptSpec {
  std::string reference;
  std::vector<std::string> replacements;
};

inline void to_json(json& j, const PromptSpec& p) {
  j = json{{"reference", p.reference}, {"replacements", p.replacements}};
}

/// Accepts either {reference, replacements} or a template with {name}
/// placeholders plus, per slot, a reference value and N replacement values.
inline void from_json(const json& j, PromptSpec& p) {
  if (j.contains("reference")) {
    j.at("reference").get_to(p.reference);
    j.at("replacements").get_to(p.replacements);
    return;
  }
  const auto tmpl = j.at("template").get<std::string>();
  const auto& slots = j.at("slots");
  require(slots.is_object() && !slots.empty(), "prompt template needs slots");
  std::size_t n = 0;
  for (const auto& [name, s] : slots.items()) {
    const auto k = s.at("replacements").size();
    require(n == 0 || k == n, "slot " + name + " has a different number of replacements");
    n = k;
  }
  auto render = [&](std::optional<std::size_t> variant) {
    std::string out = tmpl;
    for (const auto& [name, s] : slots.items()) {
      const std::string key = "{" + name + "}";
      const auto value = variant ? s.at("replacements").at(*variant).get<std::string>() : s.at("value").get<std::string>();
      const auto at = out.find(key);
      require(at != std::string::npos, "template has no placeholder " + key);
      for (auto pos = at; pos != std::string::npos; pos = out.find(key, pos + value.size())) out.replace(pos, key.size(), value);
    }
    return out;
  };
  p.reference = render(std::nullopt);
  p.replacements.clear();
  for (std::size_t i = 0; i < n; ++i) p.replacements.push_back(render(i));
}

struct ClassifiedWord {
  std::string text;
  TCLabel label;
  double variance_norm = 0.0;
  std::vector<std::string> fills;          // content: each replacement's decoded word
  std::vector<std::string> disagreements;  // template: replacement argmax words that differ
};

struct ClassifiedSentence {
  std::vector<ClassifiedWord> words;
  double threshold = 0.0;

  std::vector<TCLabel> labels() const {
    std::vector<TCLabel> out;
    for (const auto& w : words) out.push_back(w.label);
    return out;
  }
};

inline void to_json(json& j, const ClassifiedWord& w) {
  j = json{{"text", w.text}, {"label", w.label}, {"variance_norm", w.variance_norm}};
  if (!w.fills.empty()) j["fills"] = w.fills;
  if (!w.disagreements.empty()) j["disagreements"] = w.disagreements;
}

inline void to_json(json& j, const ClassifiedSentence& s) { j = json{{"threshold", s.threshold}, {"words", s.words}}; }

/// Walks the sentence word by word with N perturbed prefixes. A word whose
/// first-token variance exceeds the threshold is content: every prefix then
/// continues with its own greedy word. Otherwise the word is template and the
/// reference word is appended to every prefix.
inline ClassifiedSentence classify(const Backend& backend, const PromptSpec& prompt, std::string_view sentence,
                                   const ClassifierConfig& c) {
  c.validate();
  const std::size_t n = prompt.replacements.size();
  require(n >= 2, "need replacements");
  require(!sentence.empty(), "empty sentence");
  const auto sent_tokens = backend.tokenize(sentence);
  const auto words = segment(sent_tokens, c.boundary);
  const auto eos = backend.info().eos_id;

  std::vector<std::vector<TokenRef>> prefixes;
  for (const auto& p : prompt.replacements) {
    prefixes.push_back(backend.tokenize(p));
    require(!prefixes.back().empty(), "empty prompt");
  }
  // Words appended to each prefix, for the integrity check.
  std::vector<std::vector<std::string>> appended(n);

  ClassifiedSentence out;
  out.threshold = c.threshold;
  for (const auto& w : words) {
    const auto dists = backend.batch_next(prefixes);
    require(dists.size() == n, "batch result count differs from request", Errc::protocol_violation);
    std::vector<Distribution> filtered;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& base = prefixes[i];
      NextLookup lookup = [&backend, &base](std::span<const TokenRef> extra) {
        std::vector<TokenRef> ctx(base);
        ctx.insert(ctx.end(), extra.begin(), extra.end());
        return backend.next_distribution(ctx);
      };
      filtered.push_back(filter_distribution(dists[i], lookup, c));
    }
    ClassifiedWord cw;
    cw.text = w.text;
    cw.variance_norm = position_variance(filtered).norm;
    std::vector<TokenRef> ref_tokens;
    for (std::size_t k = 0; k < w.token_ids.size(); ++k) ref_tokens.push_back(sent_tokens[w.start_index + k]);

    if (cw.variance_norm > c.threshold) {
      cw.label = TCLabel{TCLabel::kContent};
      for (std::size_t i = 0; i < n; ++i) {
        auto fill = decode_word(backend, prefixes[i], filtered[i], c, eos);
        prefixes[i].insert(prefixes[i].end(), fill.tokens.begin(), fill.tokens.end());
        appended[i].push_back(fill.text);
        cw.fills.push_back(std::move(fill.text));
      }
    } else {
      cw.label = TCLabel{TCLabel::kTemplate};
      for (std::size_t i = 0; i < n; ++i) {
        const auto own = decode_word(backend, prefixes[i], filtered[i], c, eos);
        if (own.text != w.text) cw.disagreements.push_back(own.text);
        prefixes[i].insert(prefixes[i].end(), ref_tokens.begin(), ref_tokens.end());
        appended[i].push_back(w.text);
      }
    }
    for (std::size_t i = 1; i < n; ++i) {
      require(appended[i].size() == appended[0].size(), "prefix integrity: word counts diverged", Errc::internal);
    }
    for (std::size_t t = 0; t < out.words.size() + 1; ++t) {
      const bool tmpl = t < out.words.size() ? out.words[t].label.is_template() : cw.label.is_template();
      if (!tmpl) continue;
      for (std::size_t i = 1; i < n; ++i)
        require(appended[i][t] == appended[0][t], "prefix integrity: template words diverged", Errc::internal);
    }
    out.words.push_back(std::move(cw));
  }
  return out;
}

/// Prompt spec and answer sentence of a generated dataset: the reference
/// answer is classified against the replacements' prompts and questions.
inline std::pair<PromptSpec, std::string> classification_input(const ProbeDataset& d) {
  PromptSpec p;
  const auto& ref = d.reference.seq;
  p.reference = ref.text(0, ref.answer_begin());
  for (const auto& r : d.replacements) p.replacements.push_back(r.seq.text(0, r.seq.answer_begin()));
  return {std::move(p), ref.text(ref.answer_begin())};
}

/// Inline markup: content words in [brackets], template words bare.
inline std::string annotate(const ClassifiedSentence& s) {
  std::string out;
  for (const auto& w : s.words) {
    if (w.label.is_template()) {
      out += w.text;
      continue;
    }
    std::size_t lead = 0;
    while (lead < w.text.size() && (w.text[lead] == ' ' || w.text[lead] == '\n')) ++lead;
    out += w.text.substr(0, lead) + "[" + w.text.substr(lead) + "]";
  }
  return out;
}

}  // namespace tcprobe
