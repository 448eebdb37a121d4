#pragma once

// Backend selection from a descriptor string:
//   oracle[:GRAMMAR]   in-process oracle (built-in name or grammar JSON path)
//   remote:URL         wire-protocol server, e.g. remote:http://127.0.0.1:8080
//   noise:SEED[:position|:prefix]

#include <memory>
#include <string>
#include <vector>

#include "tcprobe/backend.hpp"
#include "tcprobe/error.hpp"
#include "tcprobe/grammars.hpp"
#include "tcprobe/oracle.hpp"
#include "tcprobe/wire.hpp"

namespace tcprobe {

enum class BackendKind { oracle, remote, noise };

struct BackendDescriptor {
  BackendKind kind = BackendKind::oracle;
  std::string grammar;  // oracle: empty means "use the dataset's grammar"
  std::string url;
  std::uint64_t seed = 0;
  NoiseMode noise_mode = NoiseMode::per_prefix;
  std::size_t top_k = kDefaultTopK;
  int timeout_s = 30;
  int max_retries = 3;

  void validate() const {
    require(top_k >= 1, "top_k must be at least 1");
    require(timeout_s >= 1, "timeout must be at least 1 second");
    require(max_retries >= 0, "max_retries must be non-negative");
  }

  std::string to_string() const {
    switch (kind) {
      case BackendKind::oracle: return grammar.empty() ? "oracle" : "oracle:" + grammar;
      case BackendKind::remote: return "remote:" + url;
      case BackendKind::noise:
        return "noise:" + std::to_string(seed) + (noise_mode == NoiseMode::per_position ? ":position" : ":prefix");
    }
    return {};
  }
};

inline BackendDescriptor parse_backend_descriptor(const std::string& s) {
  BackendDescriptor d;
  const auto colon = s.find(':');
  const std::string kind = s.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : s.substr(colon + 1);
  if (kind == "oracle") {
    d.kind = BackendKind::oracle;
    d.grammar = rest;
  } else if (kind == "remote") {
    d.kind = BackendKind::remote;
    require(!rest.empty(), "remote backend needs a URL");
    d.url = rest;
  } else if (kind == "noise") {
    d.kind = BackendKind::noise;
    const auto c2 = rest.find(':');
    const std::string seed = rest.substr(0, c2);
    try {
      std::size_t used = 0;
      d.seed = seed.empty() ? 0 : std::stoull(seed, &used);
      require(seed.empty() || used == seed.size(), "bad noise seed: " + seed);
    } catch (const std::logic_error&) {
      fail(Errc::invalid_input, "bad noise seed: " + seed);
    }
    if (c2 != std::string::npos) {
      const auto mode = rest.substr(c2 + 1);
      if (mode == "position") d.noise_mode = NoiseMode::per_position;
      else if (mode == "prefix") d.noise_mode = NoiseMode::per_prefix;
      else fail(Errc::invalid_input, "unknown noise mode: " + mode);
    }
  } else {
    fail(Errc::invalid_input, "unknown backend: " + s);
  }
  return d;
}

/// `fallback_grammar` serves an oracle descriptor that names no grammar.
inline std::shared_ptr<const Backend> make_backend(const BackendDescriptor& d, const std::vector<std::string>& pool,
                                                   const TaskGrammar* fallback_grammar = nullptr) {
  d.validate();
  switch (d.kind) {
    case BackendKind::oracle: {
      std::shared_ptr<const Oracle> o;
      if (!d.grammar.empty()) o = std::make_shared<const Oracle>(load_grammar(d.grammar, pool));
      else if (fallback_grammar) o = std::make_shared<const Oracle>(*fallback_grammar);
      else fail(Errc::invalid_input, "oracle backend needs a grammar");
      return std::make_shared<OracleBackend>(std::move(o), d.top_k);
    }
    case BackendKind::remote:
      return std::make_shared<RemoteBackend>(d.url, RemoteOptions{d.top_k, d.max_retries, 100, d.timeout_s});
    case BackendKind::noise:
      return std::make_shared<NoiseBackend>(NoiseOptions{d.seed, d.noise_mode, 1000, d.top_k});
  }
  fail(Errc::internal, "unreachable");
}

}  // namespace tcprobe
