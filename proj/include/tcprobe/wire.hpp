#pragma once

// HTTP/JSON wire protocol for remote backends. Probabilities travel as
// decimal strings printed with %.17g so they round-trip exactly.
//
//   POST /v1/tokenize    {text}                -> {tokens: [{id, text}]}
//   POST /v1/next        {token_ids, top_k}    -> {support: [{id, text, p}], other_mass}
//   POST /v1/batch_next  {prefixes, top_k}     -> {results: [<next response>]}
//   GET  /v1/info                              -> {vocab_size, model_name, max_context[, eos_id]}

#include <httplib.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "tcprobe/backend.hpp"
#include "tcprobe/error.hpp"
#include "tcprobe/types.hpp"

namespace tcprobe {

inline std::string encode_prob(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", p);
  return buf;
}

inline double decode_prob(const json& j) {
  require(j.is_string(), "probability must be a decimal string", Errc::protocol_violation);
  const auto& s = j.get_ref<const std::string&>();
  require(!s.empty(), "empty probability string", Errc::protocol_violation);
  char* end = nullptr;
  const double p = std::strtod(s.c_str(), &end);
  require(end == s.c_str() + s.size(), "malformed probability: " + s, Errc::protocol_violation);
  return p;
}

inline json encode_distribution(const Distribution& d) {
  json support = json::array();
  for (const auto& e : d.support) support.push_back({{"id", e.id}, {"text", e.text}, {"p", encode_prob(e.p)}});
  return json{{"support", std::move(support)}, {"other_mass", encode_prob(d.other_mass)}};
}

inline Distribution decode_distribution(const json& j) {
  try {
    require(j.is_object(), "distribution must be an object", Errc::protocol_violation);
    Distribution d;
    const auto& support = j.at("support");
    require(support.is_array(), "support must be an array", Errc::protocol_violation);
    for (const auto& e : support) {
      require(e.at("id").is_number_integer(), "token id must be an integer", Errc::protocol_violation);
      d.support.push_back({e.at("id").get<TokenId>(), e.at("text").get<std::string>(), decode_prob(e.at("p"))});
    }
    d.other_mass = decode_prob(j.at("other_mass"));
    d.validate();
    return d;
  } catch (const json::exception& e) {
    fail(Errc::protocol_violation, std::string("malformed distribution: ") + e.what());
  }
}

struct RemoteOptions {
  std::size_t top_k = kDefaultTopK;
  int max_retries = 3;
  int backoff_ms = 100;  // doubled after every failed attempt
  int timeout_s = 30;
};

class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(std::string url, RemoteOptions opt = {}) : url_(std::move(url)), opt_(opt) {
    require(url_.rfind("http://", 0) == 0, "remote backend URL must start with http://: " + url_);
    require(opt_.top_k >= 1, "top_k must be at least 1");
    require(opt_.max_retries >= 0 && opt_.backoff_ms >= 0, "retry settings must be non-negative");
  }

  Distribution next_distribution(std::span<const TokenRef> prefix) const override {
    require_prefix(prefix);
    return decode_distribution(post("/v1/next", json{{"token_ids", ids_of(prefix)}, {"top_k", opt_.top_k}}));
  }

  std::vector<Distribution> batch_next(const std::vector<std::vector<TokenRef>>& prefixes) const override {
    require(!prefixes.empty(), "batch needs at least one prefix");
    json ps = json::array();
    for (const auto& p : prefixes) {
      require_prefix(p);
      ps.push_back(ids_of(p));
    }
    const auto res = post("/v1/batch_next", json{{"prefixes", std::move(ps)}, {"top_k", opt_.top_k}});
    try {
      const auto& results = res.at("results");
      require(results.is_array() && results.size() == prefixes.size(), "batch result count differs from request",
              Errc::protocol_violation);
      std::vector<Distribution> out;
      for (const auto& r : results) out.push_back(decode_distribution(r));
      return out;
    } catch (const json::exception& e) {
      fail(Errc::protocol_violation, std::string("malformed batch response: ") + e.what());
    }
  }

  std::vector<TokenRef> tokenize(std::string_view text) const override {
    require(!text.empty(), "cannot tokenize empty text");
    const auto res = post("/v1/tokenize", json{{"text", text}});
    try {
      auto tokens = res.at("tokens").get<std::vector<TokenRef>>();
      require(!tokens.empty(), "empty tokenization", Errc::protocol_violation);
      return tokens;
    } catch (const json::exception& e) {
      fail(Errc::protocol_violation, std::string("malformed tokenize response: ") + e.what());
    }
  }

  BackendInfo info() const override {
    std::lock_guard lock(mu_);
    if (!info_) {
      try {
        info_ = request("GET", "/v1/info", nullptr).get<BackendInfo>();
      } catch (const json::exception& e) {
        fail(Errc::protocol_violation, std::string("malformed info response: ") + e.what());
      }
    }
    return *info_;
  }

  std::size_t top_k() const override { return opt_.top_k; }

 private:
  static json ids_of(std::span<const TokenRef> prefix) {
    json ids = json::array();
    for (const auto& t : prefix) ids.push_back(t.id);
    return ids;
  }

  json post(const std::string& path, const json& body) const { return request("POST", path, &body); }

  json request(const std::string& method, const std::string& path, const json* body) const {
    int delay = opt_.backoff_ms;
    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= opt_.max_retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        delay *= 2;
      }
      httplib::Client cli(url_);
      cli.set_connection_timeout(opt_.timeout_s);
      cli.set_read_timeout(opt_.timeout_s);
      cli.set_write_timeout(opt_.timeout_s);
      auto res = method == "GET" ? cli.Get(path) : cli.Post(path, body->dump(), "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
        continue;
      }
      if (res->status == 501) fail(Errc::unsupported, "tokenize unsupported");
      if (res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status >= 400) {
        std::string msg = res->body;
        try {
          msg = json::parse(res->body).at("error").get<std::string>();
        } catch (const json::exception&) {
        }
        fail(res->status == 422 ? Errc::off_template : Errc::protocol_violation,
             "HTTP " + std::to_string(res->status) + " from " + path + ": " + msg);
      }
      try {
        return json::parse(res->body);
      } catch (const json::exception&) {
        fail(Errc::protocol_violation, "response from " + path + " is not JSON");
      }
    }
    fail(Errc::backend_unavailable, "backend unavailable: " + url_ + path + " (" + last_error + ")");
  }

  std::string url_;
  RemoteOptions opt_;
  mutable std::mutex mu_;
  mutable std::optional<BackendInfo> info_;
};

/// Serves a Backend over the wire protocol. Malformed requests get 400,
/// off-template prefixes 422, tokenization on a backend without it 501.
class WireServer {
 public:
  explicit WireServer(std::shared_ptr<const Backend> backend) : backend_(std::move(backend)) {
    require(backend_ != nullptr, "wire server needs a backend");
    install();
  }

  WireServer(const WireServer&) = delete;
  WireServer& operator=(const WireServer&) = delete;
  ~WireServer() { stop(); }

  /// Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    require(!thread_.joinable(), "server already started");
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    require(port_ > 0, "cannot bind " + host + ":" + std::to_string(port), Errc::backend_unavailable);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  /// Blocks serving on the calling thread.
  void run(const std::string& host, int port) {
    require(server_.listen(host, port), "cannot listen on " + host + ":" + std::to_string(port),
            Errc::backend_unavailable);
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  struct BadRequest {
    std::string message;
  };

  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <class F>
  void handle(const httplib::Request& req, httplib::Response& res, F&& f) const {
    try {
      json body = json::object();
      if (req.method == "POST") {
        body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object()) throw BadRequest{"request body must be a JSON object"};
      }
      reply(res, 200, f(body));
    } catch (const BadRequest& e) {
      reply(res, 400, json{{"error", e.message}});
    } catch (const json::exception& e) {
      reply(res, 400, json{{"error", std::string("malformed request: ") + e.what()}});
    } catch (const Error& e) {
      int status = 500;
      if (e.code() == Errc::off_template) status = 422;
      else if (e.code() == Errc::invalid_input) status = 400;
      else if (e.code() == Errc::unsupported) status = 501;
      reply(res, status, json{{"error", e.what()}});
    } catch (const std::exception& e) {
      reply(res, 500, json{{"error", e.what()}});
    }
  }

  std::size_t top_k_of(const json& body) const {
    if (!body.contains("top_k")) return backend_->top_k();
    const auto& k = body.at("top_k");
    if (!k.is_number_integer() || k.get<long long>() < 1) throw BadRequest{"top_k must be a positive integer"};
    return k.get<std::size_t>();
  }

  std::vector<TokenRef> prefix_of(const json& ids) const {
    if (!ids.is_array() || ids.empty()) throw BadRequest{"token_ids must be a non-empty array"};
    std::vector<TokenRef> out;
    for (const auto& id : ids) {
      if (!id.is_number_integer()) throw BadRequest{"token ids must be integers"};
      const auto t = id.get<TokenId>();
      auto text = backend_->token_text(t);
      if (!text) throw BadRequest{"unknown token id " + std::to_string(t)};
      out.push_back({t, std::move(*text)});
    }
    return out;
  }

  json next_json(const std::vector<TokenRef>& prefix, std::size_t top_k) const {
    auto d = backend_->next_distribution(prefix);
    if (d.support.size() > top_k) d.truncate(top_k);
    return encode_distribution(d);
  }

  void install() {
    server_.Post("/v1/tokenize", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [this](const json& body) {
        if (!body.contains("text") || !body.at("text").is_string()) throw BadRequest{"text must be a string"};
        const auto& text = body.at("text").get_ref<const std::string&>();
        if (text.empty()) throw BadRequest{"text must be non-empty"};
        return json{{"tokens", backend_->tokenize(text)}};
      });
    });
    server_.Post("/v1/next", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [this](const json& body) {
        if (!body.contains("token_ids")) throw BadRequest{"missing token_ids"};
        return next_json(prefix_of(body.at("token_ids")), top_k_of(body));
      });
    });
    server_.Post("/v1/batch_next", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [this](const json& body) {
        if (!body.contains("prefixes") || !body.at("prefixes").is_array() || body.at("prefixes").empty())
          throw BadRequest{"prefixes must be a non-empty array"};
        const auto top_k = top_k_of(body);
        std::vector<std::vector<TokenRef>> prefixes;
        for (const auto& ids : body.at("prefixes")) prefixes.push_back(prefix_of(ids));
        json results = json::array();
        for (const auto& p : prefixes) results.push_back(next_json(p, top_k));
        return json{{"results", std::move(results)}};
      });
    });
    server_.Get("/v1/info", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [this](const json&) { return json(backend_->info()); });
    });
  }

  std::shared_ptr<const Backend> backend_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace tcprobe
