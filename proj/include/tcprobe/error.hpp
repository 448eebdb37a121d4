#pragma once

#include <stdexcept>
#include <string>

namespace tcprobe {

enum class Errc {
  invalid_input,
  off_template,
  unbound_role,
  backend_unavailable,
  protocol_violation,
  unsupported,
  runaway_content,
  cap_exceeded,
  degenerate_distribution,
  internal,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, const std::string& what, Errc code = Errc::invalid_input) {
  if (!cond) fail(code, what);
}

}  // namespace tcprobe
