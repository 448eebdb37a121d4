#pragma once

// Position variance across content replacements, the difference of mean
// variances (DMV) and ROC-AUC of variance as a content score.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tcprobe/backend.hpp"
#include "tcprobe/datasets.hpp"
#include "tcprobe/error.hpp"
#include "tcprobe/types.hpp"
#include "tcprobe/wordseg.hpp"

namespace tcprobe {

struct PositionVariance {
  double raw = 0.0;
  double norm = 0.0;
};

/// Sum over the union support (plus the other_mass bucket) of the population
/// variance across the N distributions. Normalized by the maximum 1 - 1/N,
/// reached when all N distributions are distinct one-hots.
inline PositionVariance position_variance(std::span<const Distribution> dists) {
  require(dists.size() >= 2, "need replacements");
  const std::size_t n = dists.size();
  std::map<TokenId, std::vector<double>> dims;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& e : dists[i].support) {
      auto& col = dims[e.id];
      col.resize(n, 0.0);
      col[i] += e.p;
    }
  }
  std::vector<double> other(n);
  for (std::size_t i = 0; i < n; ++i) other[i] = dists[i].other_mass;

  const double dn = static_cast<double>(n);
  // Population variance in pairwise form, (1/N^2) * sum_{a<b} (x_a - x_b)^2:
  // exactly 0 for equal values, and sorted input makes it order independent.
  auto variance = [dn](std::vector<double>& xs) {
    std::sort(xs.begin(), xs.end());
    double v = 0.0;
    for (std::size_t a = 0; a < xs.size(); ++a)
      for (std::size_t b = a + 1; b < xs.size(); ++b) v += (xs[b] - xs[a]) * (xs[b] - xs[a]);
    return v / (dn * dn);
  };
  std::vector<double> terms;
  terms.reserve(dims.size() + 1);
  for (auto& [id, col] : dims) terms.push_back(variance(col));
  terms.push_back(variance(other));
  std::sort(terms.begin(), terms.end());
  PositionVariance out;
  for (double v : terms) out.raw += v;
  out.norm = std::clamp(out.raw / (1.0 - 1.0 / dn), 0.0, 1.0);
  return out;
}

/// Mean variance at content positions minus mean variance at template positions.
inline double dmv(std::span<const ProbeRecord> records) {
  double sc = 0.0, st = 0.0;
  std::size_t nc = 0, nt = 0;
  for (const auto& r : records) {
    require(r.truth_label.has_value(), "record without truth label");
    if (r.truth_label->is_template()) {
      st += r.variance_norm;
      ++nt;
    } else {
      sc += r.variance_norm;
      ++nc;
    }
  }
  require(nc > 0 && nt > 0, "DMV needs both content and template positions");
  return sc / static_cast<double>(nc) - st / static_cast<double>(nt);
}

struct RocPoint {
  double threshold = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
};

struct RocResult {
  double auc = 0.0;
  std::vector<RocPoint> sweep;  // thresholds descending, from +inf to -inf
};

/// Content is the positive class; a position is predicted content iff its
/// score is >= the threshold. AUC is the trapezoidal area of the sweep, which
/// equals the pairwise estimate with ties counted as one half.
inline RocResult auc_roc(std::span<const ProbeRecord> records) {
  std::vector<std::pair<double, bool>> scored;
  std::size_t pos = 0;
  for (const auto& r : records) {
    require(r.truth_label.has_value(), "record without truth label");
    const bool content = !r.truth_label->is_template();
    pos += content;
    scored.emplace_back(r.variance_norm, content);
  }
  const std::size_t neg = scored.size() - pos;
  require(pos > 0 && neg > 0, "AUC needs both content and template positions");
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  RocResult out;
  const double inf = std::numeric_limits<double>::infinity();
  out.sweep.push_back({inf, 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < scored.size();) {
    const double thr = scored[i].first;
    for (; i < scored.size() && scored[i].first == thr; ++i) (scored[i].second ? tp : fp)++;
    out.sweep.push_back({thr, static_cast<double>(tp) / static_cast<double>(pos),
                         static_cast<double>(fp) / static_cast<double>(neg)});
  }
  out.sweep.push_back({-inf, 1.0, 1.0});
  for (std::size_t i = 1; i < out.sweep.size(); ++i) {
    const auto& a = out.sweep[i - 1];
    const auto& b = out.sweep[i];
    out.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return out;
}

struct ProbeOptions {
  bool all_positions = false;  // probe prompt and question words too
  bool keep_distributions = true;
  BoundaryRule boundary;
};

struct GroupProbe {
  std::string group_id;
  std::vector<ProbeRecord> records;
};

struct VarianceReport {
  std::size_t n_replacements = 0;
  std::vector<GroupProbe> groups;
  double dmv = 0.0;
  RocResult roc;

  std::vector<ProbeRecord> all_records() const {
    std::vector<ProbeRecord> out;
    for (const auto& g : groups) out.insert(out.end(), g.records.begin(), g.records.end());
    return out;
  }
};

namespace detail {

/// Backend tokens of `seq` and the token index at which each word starts.
/// Tokenizes the full text once; if the backend's word split disagrees with
/// the sequence's words, each word prefix is tokenized separately.
inline std::pair<std::vector<TokenRef>, std::vector<std::size_t>> backend_word_starts(
    const Backend& backend, const LabeledSequence& seq, const BoundaryRule& rule) {
  auto tokens = backend.tokenize(seq.text());
  const auto words = segment(tokens, rule);
  std::vector<std::size_t> starts;
  bool aligned = words.size() == seq.size();
  for (std::size_t t = 0; aligned && t < words.size(); ++t) aligned = words[t].text == seq.words[t].text;
  if (aligned) {
    for (const auto& w : words) starts.push_back(w.start_index);
    return {std::move(tokens), std::move(starts)};
  }
  starts.push_back(0);
  for (std::size_t t = 1; t < seq.size(); ++t) starts.push_back(backend.tokenize(seq.text(0, t)).size());
  for (std::size_t t = 1; t < starts.size(); ++t)
    require(starts[t] > starts[t - 1], "backend tokenization does not respect word boundaries");
  return {std::move(tokens), std::move(starts)};
}

}  // namespace detail

/// Probes one dataset: at every answer word (or every word with
/// all_positions), the N replacement prefixes are sent as one batch and the
/// variance of the returned distributions is recorded.
inline GroupProbe probe_dataset(const Backend& backend, const ProbeDataset& d, const ProbeOptions& opt = {}) {
  require(d.replacements.size() >= 2, "need replacements");
  const auto& ref = d.reference.seq;
  std::vector<std::vector<TokenRef>> tokens;
  std::vector<std::vector<std::size_t>> starts;
  for (const auto& r : d.replacements) {
    require(r.seq.size() == ref.size(), "replacement word count differs from the reference");
    auto [tk, st] = detail::backend_word_starts(backend, r.seq, opt.boundary);
    tokens.push_back(std::move(tk));
    starts.push_back(std::move(st));
  }
  GroupProbe out{d.group_id(), {}};
  const std::size_t first = opt.all_positions ? 1 : std::max<std::size_t>(ref.answer_begin(), 1);
  for (std::size_t t = first; t < ref.size(); ++t) {
    std::vector<std::vector<TokenRef>> prefixes;
    for (std::size_t r = 0; r < tokens.size(); ++r) {
      const auto& tk = tokens[r];
      prefixes.emplace_back(tk.begin(), tk.begin() + static_cast<std::ptrdiff_t>(starts[r][t]));
    }
    auto dists = backend.batch_next(prefixes);
    require(dists.size() == prefixes.size(), "batch result count differs from request", Errc::protocol_violation);
    const auto v = position_variance(dists);
    ProbeRecord rec;
    rec.position = t;
    rec.word = ref.words[t].text;
    rec.variance_raw = v.raw;
    rec.variance_norm = v.norm;
    rec.truth_label = ref.labels[t];
    if (opt.keep_distributions) rec.distributions = std::move(dists);
    out.records.push_back(std::move(rec));
  }
  return out;
}

inline VarianceReport probe_datasets(const Backend& backend, std::span<const ProbeDataset> datasets,
                                     const ProbeOptions& opt = {}) {
  require(!datasets.empty(), "no datasets to probe");
  VarianceReport rep;
  rep.n_replacements = datasets.front().replacements.size();
  for (const auto& d : datasets) {
    require(d.replacements.size() == rep.n_replacements, "datasets differ in replacement count");
    rep.groups.push_back(probe_dataset(backend, d, opt));
  }
  const auto records = rep.all_records();
  rep.dmv = dmv(records);
  rep.roc = auc_roc(records);
  return rep;
}

inline json report_summary(const VarianceReport& rep) {
  std::size_t nc = 0, nt = 0;
  for (const auto& g : rep.groups)
    for (const auto& r : g.records) (r.truth_label && r.truth_label->is_template() ? nt : nc)++;
  json sweep = json::array();
  for (const auto& p : rep.roc.sweep) {
    json thr = std::isinf(p.threshold) ? json(p.threshold > 0 ? "inf" : "-inf") : json(p.threshold);
    sweep.push_back({{"threshold", thr}, {"tpr", p.tpr}, {"fpr", p.fpr}});
  }
  return json{{"n_groups", rep.groups.size()},
              {"n_replacements", rep.n_replacements},
              {"n_positions", nc + nt},
              {"n_content", nc},
              {"n_template", nt},
              {"dmv", rep.dmv},
              {"auc_roc", rep.roc.auc},
              {"threshold_sweep", sweep}};
}

}  // namespace tcprobe
