#pragma once

// Multi-level template checks: label consistency of n samples, generation of
// the combined answer, within-task generalization and sparse dependency.

#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tcprobe/error.hpp"
#include "tcprobe/grammar.hpp"
#include "tcprobe/oracle.hpp"
#include "tcprobe/types.hpp"

namespace tcprobe {

struct ConsistencyResult {
  bool consistent = false;
  LabeledSequence combined;
  std::string reason;
};

/// Splices n samples into one: every level-k word is taken from sample k.
inline LabeledSequence combine_samples(std::span<const LabeledSequence> samples) {
  require(!samples.empty(), "no samples to combine");
  LabeledSequence out = samples.front();
  std::size_t start = 0;
  for (std::size_t t = 0; t < out.size(); ++t) {
    const std::size_t src = samples.size() == 1 ? 0 : static_cast<std::size_t>(out.labels[t].level - 1);
    out.words[t] = samples[src].words[t];
    out.words[t].start_index = start;
    start += out.words[t].token_ids.size();
  }
  return out;
}

/// Label consistency of n samples (one per level; a single sample is
/// trivially consistent). Labels are operationalized as role tags: for every
/// position t of level k and every lower level s in k's support set, the
/// level-s tags preceding t must agree between the combined sequence and
/// sample k.
inline ConsistencyResult check_label_consistency(std::span<const LabeledSequence> samples, const Oracle& oracle) {
  require(!samples.empty(), "no samples given");
  const auto& g = oracle.grammar();
  const auto& first = samples.front();
  for (const auto& s : samples) {
    require(s.size() == first.size(), "samples differ in length");
    require(s.n_levels == first.n_levels, "samples differ in n_levels");
    require(s.prompt_len == first.prompt_len && s.question_len == first.question_len,
            "samples differ in prompt or question length");
  }
  require(first.n_levels == g.n_levels, "samples and grammar differ in n_levels");
  require(samples.size() == 1 || samples.size() == static_cast<std::size_t>(g.n_levels),
          "need one sample per level");

  ConsistencyResult r;
  for (const auto& s : samples) {
    if (s.labels != first.labels) {
      r.reason = "classification sequences are not aligned";
      return r;
    }
  }
  r.combined = combine_samples(samples);
  if (samples.size() == 1) {
    r.consistent = true;
    return r;
  }

  std::vector<std::vector<std::string>> tags;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    try {
      tags.push_back(oracle.word_tags(samples[k]));
    } catch (const Error& e) {
      r.reason = "sample " + std::to_string(k + 1) + " is not a grammar sequence: " + e.what();
      return r;
    }
  }
  const auto& labels = first.labels;
  auto combined_tag = [&](std::size_t u) -> const std::string& {
    return tags[static_cast<std::size_t>(labels[u].level - 1)][u];
  };
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const int k = labels[t].level;
    for (int s = 1; s < k; ++s) {
      if (!g.dependency.depends(k, s)) continue;
      for (std::size_t u = 0; u < t; ++u) {
        if (labels[u].level != s) continue;
        if (combined_tag(u) != tags[static_cast<std::size_t>(k - 1)][u]) {
          r.reason = "level-" + std::to_string(s) + " label at word " + std::to_string(u) +
                     " differs from sample " + std::to_string(k) + " (needed by word " + std::to_string(t) + ")";
          return r;
        }
      }
    }
  }
  r.consistent = true;
  return r;
}

inline ConsistencyResult check_label_consistency(std::span<const LabeledSequence> samples, const TaskGrammar& g) {
  return check_label_consistency(samples, Oracle(g));
}

/// True iff the samples are label consistent, each is remembered (greedy
/// generation reproduces it), and generation from the combined prompt and
/// question reproduces the combined sequence exactly.
inline bool check_hierarchical_generation(std::span<const LabeledSequence> samples, const Oracle& oracle) {
  const auto r = check_label_consistency(samples, oracle);
  if (!r.consistent) return false;
  for (const auto& s : samples)
    if (!oracle.reproduces(s)) return false;
  try {
    const auto& c = r.combined;
    const auto got = oracle.complete(oracle.tokenize(c.text(0, c.answer_begin())));
    return got.word_texts() == c.word_texts() && got.labels == c.labels;
  } catch (const Error&) {
    return false;
  }
}

/// True iff generating from `new_question` keeps every template word of the
/// remembered sample in place.
inline bool check_within_task_generalization(const Oracle& oracle, const LabeledSequence& remembered,
                                             const QuestionValues& new_question) {
  if (!oracle.reproduces(remembered)) return false;
  LabeledSequence got;
  try {
    got = oracle.generate(new_question);
  } catch (const Error&) {
    return false;
  }
  if (got.size() != remembered.size() || got.labels != remembered.labels) return false;
  for (std::size_t t = 0; t < got.size(); ++t) {
    if (got.labels[t].is_template() && got.words[t].text != remembered.words[t].text) return false;
  }
  return true;
}

inline bool check_within_task_generalization(const TaskGrammar& g, const LabeledSequence& remembered,
                                             const QuestionValues& new_question) {
  return check_within_task_generalization(Oracle(g), remembered, new_question);
}

inline constexpr std::size_t kDefaultExhaustionCap = 100000;

/// Every combination of input-role values, in lexicographic order of the
/// roles' first appearance.
inline std::vector<QuestionValues> enumerate_assignments(const TaskGrammar& g,
                                                         std::size_t cap = kDefaultExhaustionCap) {
  const auto roles = g.input_roles();
  std::size_t total = 1;
  for (const auto& r : roles) {
    const std::size_t n = g.role(r).values.size();
    if (n != 0 && total > cap / n) fail(Errc::cap_exceeded, "exhaustion cap exceeded");
    total *= n;
  }
  if (total > cap) fail(Errc::cap_exceeded, "exhaustion cap exceeded");
  std::vector<QuestionValues> out;
  out.reserve(total);
  std::vector<std::size_t> idx(roles.size(), 0);
  for (std::size_t i = 0; i < total; ++i) {
    QuestionValues v;
    for (std::size_t j = 0; j < roles.size(); ++j) v[roles[j]] = g.role(roles[j]).values[idx[j]];
    out.push_back(std::move(v));
    for (std::size_t j = roles.size(); j-- > 0;) {
      if (++idx[j] < g.role(roles[j]).values.size()) break;
      idx[j] = 0;
    }
  }
  return out;
}

struct SparseDependencyReport {
  bool holds = true;
  std::vector<std::pair<int, int>> false_zeros;  // (k, s) pairs contradicted by generation
};

/// Checks every claimed zero d[k][s]: over all inputs, changing only the
/// level-s inputs must never change a level-k word. Indirect effects (level s
/// feeding level k through an intermediate level) are caught as well, since
/// whole sequences are compared.
inline SparseDependencyReport verify_sparse_dependency(const TaskGrammar& g, const DependencyMatrix& claimed,
                                                       std::size_t cap = kDefaultExhaustionCap) {
  claimed.validate(g.n_levels);
  std::vector<std::pair<int, int>> zeros;
  for (int k = 1; k <= g.n_levels; ++k)
    for (int s = 1; s < k; ++s)
      if (!claimed.depends(k, s)) zeros.emplace_back(k, s);
  SparseDependencyReport report;
  if (zeros.empty()) return report;

  const auto assignments = enumerate_assignments(g, cap);
  Oracle oracle(g);
  std::vector<std::pair<const QuestionValues*, LabeledSequence>> generated;
  for (const auto& v : assignments) {
    try {
      generated.emplace_back(&v, oracle.generate(v));
    } catch (const Error& e) {
      if (e.code() == Errc::cap_exceeded) throw;
    }
  }
  std::map<std::string, int> level_of;
  for (const auto& r : g.input_roles()) level_of[r] = g.input_level(r);

  for (auto [k, s] : zeros) {
    std::map<std::string, std::vector<std::string>> seen;
    bool violated = false;
    for (const auto& [values, seq] : generated) {
      std::string key;
      for (const auto& [role, v] : *values) {
        if (level_of[role] != s) key += role + "=" + v + "\x1f";
      }
      std::vector<std::string> words;
      for (std::size_t t = 0; t < seq.size(); ++t)
        if (seq.labels[t].level == k) words.push_back(seq.words[t].text);
      auto [it, inserted] = seen.emplace(key, words);
      if (!inserted && it->second != words) {
        violated = true;
        break;
      }
    }
    if (violated) {
      report.holds = false;
      report.false_zeros.emplace_back(k, s);
    }
  }
  return report;
}

}  // namespace tcprobe
