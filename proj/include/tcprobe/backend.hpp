#pragma once

// Next-token distribution providers: the in-process oracle and a seeded
// random baseline. The remote (wire) backend lives in wire.hpp.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "tcprobe/error.hpp"
#include "tcprobe/hash.hpp"
#include "tcprobe/oracle.hpp"
#include "tcprobe/rng.hpp"
#include "tcprobe/types.hpp"
#include "tcprobe/wordseg.hpp"

namespace tcprobe {

inline constexpr std::size_t kDefaultTopK = 50;

struct BackendInfo {
  std::size_t vocab_size = 0;
  std::string model_name;
  std::size_t max_context = 0;
  std::optional<TokenId> eos_id;

  friend bool operator==(const BackendInfo&, const BackendInfo&) = default;
};

inline void to_json(json& j, const BackendInfo& i) {
  j = json{{"vocab_size", i.vocab_size}, {"model_name", i.model_name}, {"max_context", i.max_context}};
  if (i.eos_id) j["eos_id"] = *i.eos_id;
}

inline void from_json(const json& j, BackendInfo& i) {
  j.at("vocab_size").get_to(i.vocab_size);
  j.at("model_name").get_to(i.model_name);
  j.at("max_context").get_to(i.max_context);
  if (j.contains("eos_id") && !j.at("eos_id").is_null()) i.eos_id = j.at("eos_id").get<TokenId>();
}

class Backend {
 public:
  virtual ~Backend() = default;

  /// Distribution over the token following `prefix`: at most top_k entries
  /// sorted by descending probability, the rest in other_mass.
  virtual Distribution next_distribution(std::span<const TokenRef> prefix) const = 0;

  virtual std::vector<Distribution> batch_next(const std::vector<std::vector<TokenRef>>& prefixes) const {
    require(!prefixes.empty(), "batch needs at least one prefix");
    std::vector<Distribution> out;
    out.reserve(prefixes.size());
    for (const auto& p : prefixes) out.push_back(next_distribution(p));
    return out;
  }

  virtual std::vector<TokenRef> tokenize(std::string_view) const { fail(Errc::unsupported, "tokenize unsupported"); }

  /// Surface of a token id, if the backend can resolve it.
  virtual std::optional<std::string> token_text(TokenId) const { return std::nullopt; }

  virtual BackendInfo info() const = 0;
  virtual std::size_t top_k() const = 0;
};

inline void require_prefix(std::span<const TokenRef> prefix) { require(!prefix.empty(), "prefix must be non-empty"); }

class OracleBackend final : public Backend {
 public:
  explicit OracleBackend(std::shared_ptr<const Oracle> oracle, std::size_t top_k = kDefaultTopK)
      : oracle_(std::move(oracle)), top_k_(top_k) {
    require(oracle_ != nullptr, "oracle backend needs an oracle");
    require(top_k_ >= 1, "top_k must be at least 1");
  }

  Distribution next_distribution(std::span<const TokenRef> prefix) const override {
    require_prefix(prefix);
    auto d = oracle_->next(prefix);
    d.truncate(top_k_);
    return d;
  }

  std::vector<TokenRef> tokenize(std::string_view text) const override { return oracle_->tokenize(text); }

  std::optional<std::string> token_text(TokenId id) const override { return oracle_->vocabulary().text_of(id); }

  BackendInfo info() const override {
    return BackendInfo{oracle_->vocabulary().base_size(), "oracle:" + oracle_->grammar().name, std::size_t{1} << 20,
                       oracle_->eos().id};
  }

  std::size_t top_k() const override { return top_k_; }
  const Oracle& oracle() const { return *oracle_; }

 private:
  std::shared_ptr<const Oracle> oracle_;
  std::size_t top_k_;
};

enum class NoiseMode {
  per_position,  // seeded on prefix length: every replacement sees the same distribution
  per_prefix,    // seeded on the prefix tokens: independent random distributions
};

struct NoiseOptions {
  std::uint64_t seed = 0;
  NoiseMode mode = NoiseMode::per_prefix;
  std::size_t vocab_size = 1000;
  std::size_t top_k = kDefaultTopK;
};

/// Random baseline: uniform over top_k distinct pseudo-random token ids.
class NoiseBackend final : public Backend {
 public:
  explicit NoiseBackend(NoiseOptions opt) : opt_(opt) {
    require(opt_.top_k >= 1, "top_k must be at least 1");
    require(opt_.vocab_size >= opt_.top_k, "noise vocabulary smaller than top_k");
  }

  Distribution next_distribution(std::span<const TokenRef> prefix) const override {
    require_prefix(prefix);
    std::uint64_t key = prefix.size();
    if (opt_.mode == NoiseMode::per_prefix) {
      key = 0xcbf29ce484222325ULL;
      for (const auto& t : prefix) key = mix64(key ^ static_cast<std::uint64_t>(t.id));
    }
    Rng rng(stream_seed(opt_.seed, key));
    // Floyd's sampling of top_k distinct ids.
    std::vector<TokenId> ids;
    std::unordered_set<TokenId> chosen;
    for (std::size_t j = opt_.vocab_size - opt_.top_k; j < opt_.vocab_size; ++j) {
      auto t = static_cast<TokenId>(rng.index(j + 1));
      if (!chosen.insert(t).second) {
        t = static_cast<TokenId>(j);
        chosen.insert(t);
      }
      ids.push_back(t);
    }
    std::sort(ids.begin(), ids.end());
    Distribution d;
    const double p = 1.0 / static_cast<double>(opt_.top_k);
    for (TokenId id : ids) d.support.push_back({id, token_name(id), p});
    return d;
  }

  std::vector<TokenRef> tokenize(std::string_view text) const override {
    require(!text.empty(), "cannot tokenize empty text");
    std::vector<TokenRef> out;
    for (auto& w : split_words(text)) {
      const auto id = static_cast<TokenId>(fnv1a64(w) % opt_.vocab_size);
      out.push_back({id, std::move(w)});
    }
    return out;
  }

  std::optional<std::string> token_text(TokenId id) const override {
    if (id < 0 || static_cast<std::size_t>(id) >= opt_.vocab_size) return std::nullopt;
    return token_name(id);
  }

  BackendInfo info() const override { return BackendInfo{opt_.vocab_size, "noise", std::size_t{1} << 20, {}}; }
  std::size_t top_k() const override { return opt_.top_k; }

 private:
  static std::string token_name(TokenId id) { return " <" + std::to_string(id) + ">"; }

  NoiseOptions opt_;
};

}  // namespace tcprobe
