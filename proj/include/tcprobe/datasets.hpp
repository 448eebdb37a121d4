#pragma once

// Probe datasets (a reference sequence plus N content-replaced variants that
// share its template) and the augmentation corpora built from them.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcprobe/error.hpp"
#include "tcprobe/grammars.hpp"
#include "tcprobe/hash.hpp"
#include "tcprobe/oracle.hpp"
#include "tcprobe/rng.hpp"
#include "tcprobe/types.hpp"

namespace tcprobe {

struct Sample {
  LabeledSequence seq;
  QuestionValues values;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct ProbeDataset {
  std::string grammar_name;
  std::uint64_t seed = 0;
  std::size_t index = 0;
  Sample reference;
  std::vector<Sample> replacements;
  std::vector<std::size_t> content_slots;

  std::string group_id() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%05zu", index);
    return grammar_name + "-" + buf;
  }

  friend bool operator==(const ProbeDataset&, const ProbeDataset&) = default;
};

/// Word positions filled by a content slot (as opposed to fixed content
/// words such as commas inside the question).
inline std::vector<std::size_t> content_slot_positions(const TaskGrammar& g) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < g.elements.size(); ++i) {
    const auto& e = g.elements[i];
    if (e.is_slot() && e.level != TCLabel::kTemplate) out.push_back(i);
  }
  return out;
}

/// Alignment invariants: equal word counts and labels, identical template
/// words, and every content slot differs from the reference in at least one
/// replacement.
inline std::vector<Violation> check_dataset(const ProbeDataset& d) {
  std::vector<Violation> out;
  const auto& ref = d.reference.seq;
  for (const auto& v : validate_labeled_sequence(ref)) out.push_back({v.word_index, "reference: " + v.message});
  if (d.replacements.size() < 2) out.push_back({std::nullopt, "need at least 2 replacements"});
  for (std::size_t r = 0; r < d.replacements.size(); ++r) {
    const auto& s = d.replacements[r].seq;
    const std::string who = "replacement " + std::to_string(r) + ": ";
    for (const auto& v : validate_labeled_sequence(s)) out.push_back({v.word_index, who + v.message});
    if (s.size() != ref.size() || s.labels != ref.labels) {
      out.push_back({std::nullopt, who + "word count or labels differ from the reference"});
      continue;
    }
    for (std::size_t t = 0; t < s.size(); ++t) {
      if (ref.labels[t].is_template() && s.words[t].text != ref.words[t].text)
        out.push_back({t, who + "template word differs from the reference"});
    }
  }
  for (std::size_t t : d.content_slots) {
    if (t >= ref.size()) {
      out.push_back({t, "content slot out of range"});
      continue;
    }
    const bool differs = std::any_of(d.replacements.begin(), d.replacements.end(), [&](const Sample& s) {
      return t < s.seq.size() && s.seq.words[t].text != ref.words[t].text;
    });
    if (!differs) out.push_back({t, "content word never replaced"});
  }
  return out;
}

/// Independent answer check: recomputes the task's answer from the question
/// by brute force rather than through the grammar's functions.
inline bool verify_answer(const Oracle& oracle, const LabeledSequence& seq) {
  Bindings b;
  try {
    b = oracle.bindings_of(seq);
  } catch (const Error&) {
    return false;
  }
  auto has = [&](std::initializer_list<const char*> roles) {
    return std::all_of(roles.begin(), roles.end(), [&](const char* r) { return b.count(r) > 0; });
  };
  if (has({"heads", "legs", "x", "y"})) {
    const long long heads = std::stoll(b.at("heads").value), legs = std::stoll(b.at("legs").value);
    std::optional<std::pair<long long, long long>> found;
    for (long long x = 0; x <= heads; ++x)
      if (2 * x + 4 * (heads - x) == legs) found = std::pair{x, heads - x};
    if (!found) return false;
    return std::to_string(found->first) == b.at("x").value && std::to_string(found->second) == b.at("y").value;
  }
  if (has({"w1", "w2", "w3", "w4", "ans"})) {
    std::string expected;
    for (const char* w : {"w1", "w2", "w3", "w4"}) expected += b.at(w).value.back();
    return expected == b.at("ans").value;
  }
  return oracle.reproduces(seq);
}

namespace detail {

inline constexpr std::size_t kMaxRetries = 1000;

/// Uniform values for every input role, resampled until the grammar can
/// generate from them (e.g. the linear system has a non-negative solution).
inline Sample sample_generable(const Oracle& o, Rng& rng) {
  for (std::size_t attempt = 0; attempt < kMaxRetries; ++attempt) {
    QuestionValues v;
    for (const auto& role : o.grammar().input_roles()) v[role] = rng.pick(o.grammar().role(role).values);
    try {
      auto seq = o.generate(v);
      return Sample{std::move(seq), std::move(v)};
    } catch (const Error& e) {
      if (e.code() != Errc::invalid_input) throw;
    }
  }
  fail(Errc::invalid_input, "no solvable question within " + std::to_string(kMaxRetries) + " retries");
}

inline ProbeDataset assemble(const Oracle& o, std::uint64_t seed, std::size_t index, std::vector<QuestionValues> vs) {
  ProbeDataset d;
  d.grammar_name = o.grammar().name;
  d.seed = seed;
  d.index = index;
  d.content_slots = content_slot_positions(o.grammar());
  d.reference = Sample{o.generate(vs[0]), vs[0]};
  for (std::size_t i = 1; i < vs.size(); ++i) d.replacements.push_back(Sample{o.generate(vs[i]), vs[i]});
  return d;
}

inline void check_counts(std::size_t n_samples, std::size_t n_replacements) {
  require(n_samples >= 1, "need at least one sample");
  require(n_replacements >= 2, "need at least 2 replacements");
}

/// For each of the four word slots, draws N+1 words whose last letters are
/// pairwise distinct, so every letter and answer slot differs across all
/// variants and the per-position variance is exactly maximal.
inline std::vector<QuestionValues> distinct_letter_variants(const std::vector<std::vector<std::string>>& by_letter,
                                                            std::size_t variants, Rng& rng) {
  std::vector<QuestionValues> out(variants);
  std::vector<std::size_t> letters(by_letter.size());
  for (std::size_t i = 0; i < letters.size(); ++i) letters[i] = i;
  for (int slot = 1; slot <= 4; ++slot) {
    for (std::size_t v = 0; v < variants; ++v) {
      const std::size_t j = v + rng.index(letters.size() - v);
      std::swap(letters[v], letters[j]);
      out[v]["w" + std::to_string(slot)] = rng.pick(by_letter[letters[v]]);
    }
  }
  return out;
}

inline std::vector<ProbeDataset> gen_concat(const TaskGrammar& g, const std::vector<std::string>& pool,
                                            std::size_t n_samples, std::size_t n_replacements, std::uint64_t seed) {
  check_counts(n_samples, n_replacements);
  std::map<char, std::vector<std::string>> grouped;
  for (const auto& w : pool) grouped[w.back()].push_back(w);
  std::vector<std::vector<std::string>> by_letter;
  for (auto& [c, ws] : grouped) by_letter.push_back(std::move(ws));
  require(n_replacements + 1 <= by_letter.size(),
          "word pool too small: " + std::to_string(by_letter.size()) + " distinct last letters for " +
              std::to_string(n_replacements + 1) + " variants");
  Oracle o(g);
  std::vector<ProbeDataset> out;
  for (std::size_t i = 0; i < n_samples; ++i) {
    Rng rng(stream_seed(seed, i));
    out.push_back(assemble(o, seed, i, distinct_letter_variants(by_letter, n_replacements + 1, rng)));
  }
  return out;
}

}  // namespace detail

inline std::vector<ProbeDataset> gen_concat_last_letter(const std::vector<std::string>& pool, std::size_t n_samples,
                                                        std::size_t n_replacements, std::uint64_t seed) {
  return detail::gen_concat(concat_letters_grammar(pool), pool, n_samples, n_replacements, seed);
}

inline std::vector<ProbeDataset> gen_concat_alt_template(const std::vector<std::string>& pool, std::size_t n_samples,
                                                         std::size_t n_replacements, std::uint64_t seed) {
  return detail::gen_concat(concat_alt_grammar(pool), pool, n_samples, n_replacements, seed);
}

/// Probe datasets for any grammar: all input roles are resampled for each
/// variant until every content slot differs from the reference somewhere.
inline std::vector<ProbeDataset> gen_from_grammar(const TaskGrammar& g, std::size_t n_samples,
                                                  std::size_t n_replacements, std::uint64_t seed) {
  detail::check_counts(n_samples, n_replacements);
  Oracle o(g);
  std::vector<ProbeDataset> out;
  for (std::size_t i = 0; i < n_samples; ++i) {
    Rng rng(stream_seed(seed, i));
    std::optional<ProbeDataset> found;
    for (std::size_t attempt = 0; attempt < detail::kMaxRetries && !found; ++attempt) {
      ProbeDataset d;
      d.grammar_name = g.name;
      d.seed = seed;
      d.index = i;
      d.content_slots = content_slot_positions(g);
      d.reference = detail::sample_generable(o, rng);
      for (std::size_t r = 0; r < n_replacements; ++r) d.replacements.push_back(detail::sample_generable(o, rng));
      if (check_dataset(d).empty()) found = std::move(d);
    }
    require(found.has_value(), "could not draw replacements that change every content word");
    out.push_back(std::move(*found));
  }
  return out;
}

inline std::vector<ProbeDataset> gen_chicken_rabbit(const ChickenRabbitParams& params, std::size_t n_samples,
                                                    std::size_t n_replacements, std::uint64_t seed) {
  auto out = gen_from_grammar(chicken_rabbit_grammar(params), n_samples, n_replacements, seed);
  Oracle o(chicken_rabbit_grammar(params));
  for (const auto& d : out) {
    require(verify_answer(o, d.reference.seq), "generated chicken-rabbit answer failed verification", Errc::internal);
    for (const auto& r : d.replacements)
      require(verify_answer(o, r.seq), "generated chicken-rabbit answer failed verification", Errc::internal);
  }
  return out;
}

// Line-delimited records.

struct SequenceRecord {
  std::string id;
  std::string grammar_name;
  std::string prompt;
  std::string question;
  std::string answer;
  std::vector<std::string> words;
  std::vector<int> word_labels;
  std::vector<std::size_t> content_slots;
  std::string replacement_group;
  int variant = 0;
  int n_levels = 2;
  QuestionValues values;
  std::uint64_t seed = 0;
  std::size_t prompt_len = 0;
  std::size_t question_len = 0;
  std::string source_id;
  std::string augmentation;

  friend bool operator==(const SequenceRecord&, const SequenceRecord&) = default;
};

inline void to_json(json& j, const SequenceRecord& r) {
  j = json{{"id", r.id},
           {"grammar_name", r.grammar_name},
           {"prompt", r.prompt},
           {"question", r.question},
           {"answer", r.answer},
           {"words", r.words},
           {"word_labels", r.word_labels},
           {"content_slots", r.content_slots},
           {"replacement_group", r.replacement_group},
           {"variant", r.variant},
           {"n_levels", r.n_levels},
           {"values", r.values},
           {"seed", r.seed},
           {"prompt_len", r.prompt_len},
           {"question_len", r.question_len}};
  if (!r.source_id.empty()) j["source_id"] = r.source_id;
  if (!r.augmentation.empty()) j["augmentation"] = r.augmentation;
}

inline void from_json(const json& j, SequenceRecord& r) {
  j.at("id").get_to(r.id);
  j.at("grammar_name").get_to(r.grammar_name);
  j.at("prompt").get_to(r.prompt);
  j.at("question").get_to(r.question);
  j.at("answer").get_to(r.answer);
  j.at("words").get_to(r.words);
  j.at("word_labels").get_to(r.word_labels);
  r.content_slots = j.value("content_slots", std::vector<std::size_t>{});
  r.replacement_group = j.value("replacement_group", std::string{});
  r.variant = j.value("variant", 0);
  r.n_levels = j.value("n_levels", 2);
  r.values = j.value("values", QuestionValues{});
  r.seed = j.value("seed", std::uint64_t{0});
  j.at("prompt_len").get_to(r.prompt_len);
  j.at("question_len").get_to(r.question_len);
  r.source_id = j.value("source_id", std::string{});
  r.augmentation = j.value("augmentation", std::string{});
}

inline SequenceRecord make_record(const Sample& s, const std::string& grammar_name, const std::string& id) {
  SequenceRecord r;
  r.id = id;
  r.grammar_name = grammar_name;
  r.prompt = s.seq.text(0, s.seq.prompt_len);
  r.question = s.seq.text(s.seq.prompt_len, s.seq.answer_begin());
  r.answer = s.seq.text(s.seq.answer_begin());
  r.words = s.seq.word_texts();
  for (const auto& l : s.seq.labels) r.word_labels.push_back(l.level);
  r.n_levels = s.seq.n_levels;
  r.values = s.values;
  r.prompt_len = s.seq.prompt_len;
  r.question_len = s.seq.question_len;
  return r;
}

inline std::vector<SequenceRecord> to_records(const ProbeDataset& d) {
  std::vector<SequenceRecord> out;
  const std::string group = d.group_id();
  for (std::size_t v = 0; v <= d.replacements.size(); ++v) {
    const Sample& s = v == 0 ? d.reference : d.replacements[v - 1];
    auto r = make_record(s, d.grammar_name, group + "-" + std::to_string(v));
    r.content_slots = d.content_slots;
    r.replacement_group = group;
    r.variant = static_cast<int>(v);
    r.seed = d.seed;
    out.push_back(std::move(r));
  }
  return out;
}

/// Rebuilds a labeled sequence from a record. Token ids are not stored in
/// records (they belong to whichever backend probes them), so each word is
/// given a single placeholder token.
inline LabeledSequence sequence_from_record(const SequenceRecord& r) {
  require(!r.words.empty(), "record '" + r.id + "' has no words");
  require(r.words.size() == r.word_labels.size(), "record '" + r.id + "': words and labels differ in length");
  require(r.prompt + r.question + r.answer ==
              std::accumulate(r.words.begin(), r.words.end(), std::string{}),
          "record '" + r.id + "': words do not spell prompt + question + answer");
  LabeledSequence s;
  s.n_levels = r.n_levels;
  s.prompt_len = r.prompt_len;
  s.question_len = r.question_len;
  for (std::size_t i = 0; i < r.words.size(); ++i) {
    s.words.push_back(WordSpan{r.words[i], {static_cast<TokenId>(i)}, i});
    s.labels.push_back(TCLabel{r.word_labels[i]});
  }
  const auto violations = validate_labeled_sequence(s);
  if (!violations.empty()) fail(Errc::invalid_input, "record '" + r.id + "': " + violations.front().message);
  return s;
}

/// Groups records by replacement_group (variant 0 is the reference); groups
/// keep the order in which their reference first appears.
inline std::vector<ProbeDataset> datasets_from_records(const std::vector<SequenceRecord>& records) {
  std::vector<ProbeDataset> out;
  std::map<std::string, std::size_t> where;
  std::map<std::string, std::vector<const SequenceRecord*>> members;
  for (const auto& r : records) {
    require(!r.replacement_group.empty(), "record '" + r.id + "' has no replacement_group");
    if (!where.count(r.replacement_group)) {
      where[r.replacement_group] = out.size();
      out.emplace_back();
    }
    members[r.replacement_group].push_back(&r);
  }
  for (auto& [group, rs] : members) {
    std::sort(rs.begin(), rs.end(), [](auto* a, auto* b) { return a->variant < b->variant; });
    require(rs.front()->variant == 0, "group '" + group + "' has no reference (variant 0)");
    auto& d = out[where[group]];
    d.grammar_name = rs.front()->grammar_name;
    d.seed = rs.front()->seed;
    d.content_slots = rs.front()->content_slots;
    d.reference = Sample{sequence_from_record(*rs.front()), rs.front()->values};
    for (std::size_t i = 1; i < rs.size(); ++i) {
      require(rs[i]->variant != rs[i - 1]->variant, "group '" + group + "' repeats a variant");
      d.replacements.push_back(Sample{sequence_from_record(*rs[i]), rs[i]->values});
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].index = i;
  return out;
}

template <typename T>
void write_jsonl(const std::string& path, const std::vector<T>& items) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write '" + path + "'");
  for (const auto& item : items) out << json(item).dump() << '\n';
  require(out.good(), "error writing '" + path + "'");
}

template <typename T>
std::vector<T> read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open '" + path + "'");
  std::vector<T> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line).get<T>());
    } catch (const json::exception& e) {
      fail(Errc::invalid_input, path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

// Augmentation corpora.

/// k content-replaced copies of every source reference: all input roles are
/// resampled, the answer regenerated and re-verified independently.
inline std::vector<SequenceRecord> augment_content_replacement(const std::vector<ProbeDataset>& sources,
                                                               const Oracle& oracle, std::size_t k_per_sample,
                                                               std::uint64_t seed) {
  require(k_per_sample >= 1, "k_per_sample must be at least 1");
  std::vector<SequenceRecord> out;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const std::string source = sources[i].group_id() + "-0";
    for (std::size_t j = 0; j < k_per_sample; ++j) {
      Rng rng(stream_seed(seed, i * k_per_sample + j));
      const auto s = detail::sample_generable(oracle, rng);
      require(verify_answer(oracle, s.seq), "augmented answer failed verification", Errc::internal);
      auto r = make_record(s, oracle.grammar().name, source + "-content-" + std::to_string(j));
      r.content_slots = sources[i].content_slots;
      r.replacement_group = sources[i].group_id();
      r.variant = static_cast<int>(j + 1);
      r.seed = seed;
      r.source_id = source;
      r.augmentation = "content";
      out.push_back(std::move(r));
    }
  }
  return out;
}

using SynonymTable = std::map<std::string, std::vector<std::string>>;

inline SynonymTable load_synonyms(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open synonym table '" + path + "'");
  try {
    return json::parse(in).get<SynonymTable>();
  } catch (const json::exception& e) {
    fail(Errc::invalid_input, "malformed synonym table: " + std::string(e.what()));
  }
}

/// Replaces each word of every source reference, independently with
/// probability p, by a uniformly chosen synonym. Leading boundary characters
/// are kept; labels are untouched.
inline std::vector<SequenceRecord> augment_random_synonym(const std::vector<ProbeDataset>& sources,
                                                          const SynonymTable& table, double p_replace,
                                                          std::uint64_t seed, const BoundaryRule& rule = {}) {
  require(!table.empty(), "synonym table is empty");
  require(p_replace > 0.0 && p_replace <= 1.0, "p_replace must be in (0, 1]");
  for (const auto& [word, syns] : table) {
    require(!syns.empty(), "no synonyms for '" + word + "'");
    for (const auto& s : syns) {
      require(!s.empty(), "empty synonym for '" + word + "'");
      for (char c : s) require(!rule.is_boundary(c), "synonym '" + s + "' is not a single word");
    }
  }
  std::vector<SequenceRecord> out;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    Rng rng(stream_seed(seed, i));
    Sample s = sources[i].reference;
    for (auto& w : s.seq.words) {
      std::size_t lead = 0;
      while (lead < w.text.size() && rule.is_boundary(w.text[lead])) ++lead;
      auto it = table.find(w.text.substr(lead));
      if (it == table.end() || !rng.bernoulli(p_replace)) continue;
      w.text = w.text.substr(0, lead) + rng.pick(it->second);
    }
    const std::string source = sources[i].group_id() + "-0";
    auto r = make_record(s, sources[i].grammar_name, source + "-synonym");
    r.content_slots = sources[i].content_slots;
    r.replacement_group = sources[i].group_id();
    r.seed = seed;
    r.source_id = source;
    r.augmentation = "synonym";
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace tcprobe
