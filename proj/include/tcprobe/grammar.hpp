#pragma once

// Task grammars: a template skeleton of fixed words and typed content slots.
// A grammar is the ground truth the oracle model generates from.

#include <charconv>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "tcprobe/error.hpp"
#include "tcprobe/types.hpp"
#include "tcprobe/wordseg.hpp"

namespace tcprobe {

enum class Section { prompt, question, answer };

inline std::string_view to_string(Section s) {
  switch (s) {
    case Section::prompt: return "prompt";
    case Section::question: return "question";
    case Section::answer: return "answer";
  }
  return "answer";
}

inline Section section_from_string(std::string_view s) {
  if (s == "prompt") return Section::prompt;
  if (s == "question") return Section::question;
  if (s == "answer") return Section::answer;
  fail(Errc::invalid_input, "unknown section '" + std::string(s) + "'");
}

/// One word of the template. Fixed words carry their surface in `text`.
/// Slots carry a role id; `text` is then the slot's leading prefix (usually a
/// single space). Input slots (empty `fn`) read their value from the prompt or
/// question; computed slots derive it from earlier bound roles.
struct GrammarElement {
  Section section = Section::answer;
  int level = TCLabel::kTemplate;
  std::string text;
  std::string role;
  std::string fn;
  std::vector<std::string> args;
  std::string tag;

  bool is_slot() const { return !role.empty(); }
  bool is_fixed() const { return role.empty(); }
  bool is_input() const { return is_slot() && fn.empty(); }
  bool is_computed() const { return is_slot() && !fn.empty(); }

  const std::string& fixed_tag() const { return tag.empty() ? text : tag; }

  friend bool operator==(const GrammarElement&, const GrammarElement&) = default;
};

/// Candidate values of a content role. Values may share a tag (a label in
/// the hierarchical sense): computed slots see tags, never raw surfaces, so
/// values with equal tags are interchangeable for everything downstream.
struct ContentRole {
  std::vector<std::string> values;
  std::map<std::string, std::string> tags;
  std::string same_as;  // share the domain of another role

  const std::string& tag_of(const std::string& value) const {
    auto it = tags.find(value);
    return it == tags.end() ? value : it->second;
  }

  bool contains(const std::string& value) const {
    if (lookup_.size() != values.size()) {
      return std::find(values.begin(), values.end(), value) != values.end();
    }
    return lookup_.count(value) > 0;
  }

  void reindex() { lookup_ = {values.begin(), values.end()}; }

  std::unordered_set<std::string> lookup_;  // filled by reindex()

  friend bool operator==(const ContentRole& a, const ContentRole& b) {
    return a.values == b.values && a.tags == b.tags && a.same_as == b.same_as;
  }
};

/// Lower-triangular binary matrix; entry (k, s) says whether level-k
/// generation depends on level-s words. Indices are 1-based levels.
class DependencyMatrix {
 public:
  DependencyMatrix() = default;
  explicit DependencyMatrix(std::vector<std::vector<int>> rows) : rows_(std::move(rows)) {}

  static DependencyMatrix full(int n) {
    std::vector<std::vector<int>> rows;
    for (int k = 1; k <= n; ++k) rows.emplace_back(static_cast<std::size_t>(k), 1);
    return DependencyMatrix(std::move(rows));
  }

  int n() const { return static_cast<int>(rows_.size()); }
  bool depends(int k, int s) const { return rows_.at(k - 1).at(s - 1) != 0; }
  void set(int k, int s, bool v) { rows_.at(k - 1).at(s - 1) = v ? 1 : 0; }
  const std::vector<std::vector<int>>& rows() const { return rows_; }

  void validate(int n_levels) const {
    require(n() == n_levels, "dependency matrix size does not match n_levels");
    for (int k = 1; k <= n(); ++k) {
      require(rows_[k - 1].size() == static_cast<std::size_t>(k), "dependency matrix must be lower-triangular");
      for (int v : rows_[k - 1]) require(v == 0 || v == 1, "dependency matrix entries must be 0 or 1");
      require(depends(k, k), "a level must depend on itself");
    }
  }

  friend bool operator==(const DependencyMatrix&, const DependencyMatrix&) = default;

 private:
  std::vector<std::vector<int>> rows_;
};

struct BoundValue {
  std::string value;
  std::string tag;

  friend bool operator==(const BoundValue&, const BoundValue&) = default;
};

using Bindings = std::map<std::string, BoundValue>;

namespace detail {

inline long long parse_int(const std::string& s) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc{} && ptr == s.data() + s.size() && !s.empty(), "expected an integer, got '" + s + "'");
  return v;
}

inline bool is_literal(std::string_view arg) { return !arg.empty() && arg.front() == '='; }

inline const std::string& arg_tag(const std::string& arg, const Bindings& b, std::string& scratch) {
  if (is_literal(arg)) {
    scratch = arg.substr(1);
    return scratch;
  }
  auto it = b.find(arg);
  if (it == b.end()) fail(Errc::unbound_role, "role '" + arg + "' is not bound");
  return it->second.tag;
}

struct FunctionSpec {
  std::string_view name;
  int min_args;
  int max_args;
};

inline constexpr FunctionSpec kFunctions[] = {
    {"copy", 1, 1}, {"tag", 1, 1},          {"last_letter", 1, 1},  {"concat", 1, 64},
    {"add", 2, 2},  {"sub", 2, 2},          {"mul", 2, 2},          {"div", 2, 2},
    {"apply", 3, 3}, {"solve_first", 4, 4}, {"solve_second", 4, 4},
};

inline const FunctionSpec* find_function(std::string_view name) {
  for (const auto& f : kFunctions)
    if (f.name == name) return &f;
  return nullptr;
}

/// Solves x + y = sum, a*x + b*y = total over the non-negative integers.
inline std::pair<long long, long long> solve_pair(long long sum, long long total, long long a, long long b) {
  require(a != b, "degenerate linear system");
  const long long xn = b * sum - total;
  const long long yn = total - a * sum;
  const long long den = b - a;
  require(xn % den == 0 && yn % den == 0, "linear system has no integer solution");
  const long long x = xn / den;
  const long long y = yn / den;
  require(x >= 0 && y >= 0, "linear system has no non-negative solution");
  return {x, y};
}

}  // namespace detail

/// Evaluates a computed slot. Functions read the tags of their arguments;
/// `copy` forwards value and tag unchanged.
inline BoundValue evaluate(const GrammarElement& e, const Bindings& b) {
  using detail::arg_tag;
  using detail::parse_int;
  std::string s0, s1, s2, s3;
  const auto& a = e.args;
  auto ints = [&](std::size_t i, std::string& scratch) { return parse_int(arg_tag(a[i], b, scratch)); };
  std::string out;
  if (e.fn == "copy") {
    if (detail::is_literal(a[0])) return {a[0].substr(1), a[0].substr(1)};
    auto it = b.find(a[0]);
    if (it == b.end()) fail(Errc::unbound_role, "role '" + a[0] + "' is not bound");
    return it->second;
  } else if (e.fn == "tag") {
    out = arg_tag(a[0], b, s0);
  } else if (e.fn == "last_letter") {
    const auto& v = arg_tag(a[0], b, s0);
    require(!v.empty(), "last_letter of an empty value");
    out = v.substr(v.size() - 1);
  } else if (e.fn == "concat") {
    for (const auto& arg : a) out += arg_tag(arg, b, s0);
  } else if (e.fn == "add") {
    out = std::to_string(ints(0, s0) + ints(1, s1));
  } else if (e.fn == "sub") {
    out = std::to_string(ints(0, s0) - ints(1, s1));
  } else if (e.fn == "mul") {
    out = std::to_string(ints(0, s0) * ints(1, s1));
  } else if (e.fn == "div") {
    const long long num = ints(0, s0), den = ints(1, s1);
    require(den != 0 && num % den == 0, "inexact integer division");
    out = std::to_string(num / den);
  } else if (e.fn == "apply") {
    const auto& op = arg_tag(a[0], b, s0);
    const long long x = ints(1, s1), y = ints(2, s2);
    if (op == "+") out = std::to_string(x + y);
    else if (op == "-") out = std::to_string(x - y);
    else if (op == "*") out = std::to_string(x * y);
    else fail(Errc::invalid_input, "apply: unknown operator '" + op + "'");
  } else if (e.fn == "solve_first" || e.fn == "solve_second") {
    auto [x, y] = detail::solve_pair(ints(0, s0), ints(1, s1), ints(2, s2), ints(3, s3));
    out = std::to_string(e.fn == "solve_first" ? x : y);
  } else {
    fail(Errc::invalid_input, "unknown function '" + e.fn + "'");
  }
  return {out, out};
}

struct TaskGrammar {
  std::string name;
  int n_levels = 2;
  std::vector<GrammarElement> elements;
  std::map<std::string, ContentRole> content_roles;
  DependencyMatrix dependency;
  std::map<std::string, std::vector<std::string>> token_splits;
  BoundaryRule boundary;

  std::size_t count(Section s) const {
    return static_cast<std::size_t>(
        std::count_if(elements.begin(), elements.end(), [s](const GrammarElement& e) { return e.section == s; }));
  }

  /// Roles filled from the prompt or question, in order of first appearance.
  std::vector<std::string> input_roles() const {
    std::vector<std::string> out;
    for (const auto& e : elements)
      if (e.is_input() && std::find(out.begin(), out.end(), e.role) == out.end()) out.push_back(e.role);
    return out;
  }

  int input_level(const std::string& role) const {
    for (const auto& e : elements)
      if (e.is_input() && e.role == role) return e.level;
    fail(Errc::invalid_input, "role '" + role + "' is not an input role");
  }

  const ContentRole& role(const std::string& id) const {
    auto it = content_roles.find(id);
    if (it == content_roles.end()) fail(Errc::invalid_input, "unknown role '" + id + "'");
    return it->second;
  }

  /// Validates every invariant and builds lookup indices. Called by the
  /// builders, the JSON loader and the oracle.
  void finalize() {
    boundary.validate();
    require(!name.empty(), "grammar needs a name");
    require(n_levels >= 2, "grammar needs at least two levels");
    require(!elements.empty(), "grammar has no elements");
    if (dependency.n() == 0) dependency = DependencyMatrix::full(n_levels);
    dependency.validate(n_levels);
    for (auto& [id, r] : content_roles) {
      if (r.same_as.empty()) continue;
      auto it = content_roles.find(r.same_as);
      require(it != content_roles.end() && it->second.same_as.empty(),
              "role '" + id + "' aliases an unknown or aliased role");
      r.values = it->second.values;
      r.tags = it->second.tags;
    }
    for (auto& [id, r] : content_roles) {
      for (const auto& [v, t] : r.tags) {
        require(std::find(r.values.begin(), r.values.end(), v) != r.values.end(),
                "tag given for unknown value '" + v + "' of role '" + id + "'");
        require(!t.empty(), "empty tag in role '" + id + "'");
      }
      r.reindex();
    }

    std::map<std::string, int> bound_level;
    Section last = Section::prompt;
    for (std::size_t i = 0; i < elements.size(); ++i) {
      const auto& e = elements[i];
      const std::string where = "element " + std::to_string(i) + ": ";
      require(e.section >= last, where + "sections must appear as prompt, question, answer");
      last = e.section;
      require(e.level >= 1 && e.level <= n_levels, where + "level out of range");
      if (e.section == Section::prompt) require(e.level == TCLabel::kTemplate, where + "prompt words must be template");
      if (e.section == Section::question) require(e.level != TCLabel::kTemplate, where + "question words must be content");
      check_surface(e, i == 0, where);
      if (e.is_fixed()) {
        require(e.fn.empty() && e.args.empty(), where + "fixed words take no function");
        continue;
      }
      require(content_roles.count(e.role) > 0, where + "role '" + e.role + "' is not declared");
      if (e.is_input()) {
        require(e.section != Section::answer, where + "answer slots must be computed");
        const auto& r = content_roles.at(e.role);
        require(!r.values.empty(), where + "empty content domain for role '" + e.role + "'");
        for (const auto& v : r.values) {
          require(!v.empty(), where + "empty value in role '" + e.role + "'");
          for (char c : v) require(!boundary.is_boundary(c), where + "value '" + v + "' contains a word boundary");
        }
      } else {
        const auto* f = detail::find_function(e.fn);
        require(f != nullptr, where + "unknown function '" + e.fn + "'");
        const int n = static_cast<int>(e.args.size());
        require(n >= f->min_args && n <= f->max_args, where + "wrong number of arguments for " + e.fn);
        for (const auto& a : e.args) {
          if (detail::is_literal(a)) continue;
          auto it = bound_level.find(a);
          require(it != bound_level.end(), where + "argument '" + a + "' is not bound by an earlier slot");
          require(it->second <= e.level, where + "argument '" + a + "' comes from a higher level");
        }
      }
      bound_level[e.role] = e.level;
    }
    require(count(Section::answer) > 0, "grammar has no answer");

    for (const auto& [word, pieces] : token_splits) {
      require(!pieces.empty(), "empty token split for '" + word + "'");
      std::string joined;
      for (std::size_t i = 0; i < pieces.size(); ++i) {
        require(!pieces[i].empty(), "empty piece in token split of '" + word + "'");
        if (i > 0) require(!boundary.is_boundary(pieces[i].front()), "token split piece opens a new word");
        joined += pieces[i];
      }
      require(joined == word, "token split pieces of '" + word + "' do not concatenate to it");
    }
  }

 private:
  void check_surface(const GrammarElement& e, bool first, const std::string& where) const {
    const std::string& s = e.text;
    if (e.is_fixed()) require(!s.empty(), where + "fixed word is empty");
    if (!first) {
      require(!s.empty() && boundary.is_boundary(s.front()), where + "word must start with a boundary character");
    }
    for (std::size_t i = 1; i < s.size(); ++i) {
      require(!boundary.is_boundary(s[i]), where + "word '" + s + "' contains an inner boundary character");
    }
  }
};

// JSON schema (see docs/formats.md).

inline void to_json(json& j, const GrammarElement& e) {
  j = json{{"section", to_string(e.section)}, {"level", e.level}};
  if (e.is_fixed()) {
    j["text"] = e.text;
    if (!e.tag.empty()) j["tag"] = e.tag;
  } else {
    j["slot"] = e.role;
    j["prefix"] = e.text;
    if (!e.fn.empty()) {
      j["fn"] = e.fn;
      j["args"] = e.args;
    }
  }
}

inline void from_json(const json& j, GrammarElement& e) {
  e.section = section_from_string(j.at("section").get<std::string>());
  e.level = j.at("level").get<int>();
  if (j.contains("slot")) {
    e.role = j.at("slot").get<std::string>();
    require(!e.role.empty(), "slot needs a role id");
    e.text = j.value("prefix", std::string(" "));
    e.fn = j.value("fn", std::string{});
    e.args = j.value("args", std::vector<std::string>{});
  } else {
    e.text = j.at("text").get<std::string>();
    e.tag = j.value("tag", std::string{});
  }
}

inline void to_json(json& j, const ContentRole& r) {
  j = json::object();
  if (!r.same_as.empty()) {
    j["same_as"] = r.same_as;
    return;
  }
  if (!r.values.empty()) j["values"] = r.values;
  if (!r.tags.empty()) j["tags"] = r.tags;
}

inline void from_json(const json& j, ContentRole& r) {
  r.values = j.value("values", std::vector<std::string>{});
  r.tags = j.value("tags", std::map<std::string, std::string>{});
  r.same_as = j.value("same_as", std::string{});
}

inline void to_json(json& j, const TaskGrammar& g) {
  j = json{{"name", g.name},
           {"n_levels", g.n_levels},
           {"roles", g.content_roles},
           {"elements", g.elements},
           {"dependency", g.dependency.rows()},
           {"boundary", g.boundary.boundary_prefixes}};
  if (!g.token_splits.empty()) j["token_splits"] = g.token_splits;
}

inline void from_json(const json& j, TaskGrammar& g) {
  try {
    g.name = j.at("name").get<std::string>();
    g.n_levels = j.at("n_levels").get<int>();
    g.content_roles = j.value("roles", std::map<std::string, ContentRole>{});
    g.elements = j.at("elements").get<std::vector<GrammarElement>>();
    if (j.contains("dependency")) g.dependency = DependencyMatrix(j.at("dependency").get<std::vector<std::vector<int>>>());
    g.token_splits = j.value("token_splits", std::map<std::string, std::vector<std::string>>{});
    g.boundary.boundary_prefixes = j.value("boundary", BoundaryRule{}.boundary_prefixes);
  } catch (const json::exception& ex) {
    fail(Errc::invalid_input, std::string("malformed grammar: ") + ex.what());
  }
  g.finalize();
}

/// Incremental construction of grammars in code.
class GrammarBuilder {
 public:
  GrammarBuilder(std::string name, int n_levels) {
    g_.name = std::move(name);
    g_.n_levels = n_levels;
  }

  GrammarBuilder& section(Section s) {
    section_ = s;
    return *this;
  }

  /// Splits `text` at boundary characters and appends each piece as a fixed word.
  GrammarBuilder& words(std::string_view text, int level = TCLabel::kTemplate) {
    for (auto& w : split_words(text, g_.boundary)) {
      GrammarElement e;
      e.section = section_;
      e.level = level;
      e.text = std::move(w);
      g_.elements.push_back(std::move(e));
    }
    return *this;
  }

  GrammarBuilder& tagged_word(std::string text, std::string tag, int level) {
    GrammarElement e;
    e.section = section_;
    e.level = level;
    e.text = std::move(text);
    e.tag = std::move(tag);
    g_.elements.push_back(std::move(e));
    return *this;
  }

  GrammarBuilder& input(std::string role, int level, std::string prefix = " ") {
    return slot(std::move(role), {}, {}, level, std::move(prefix));
  }

  GrammarBuilder& computed(std::string role, std::string fn, std::vector<std::string> args, int level,
                           std::string prefix = " ") {
    return slot(std::move(role), std::move(fn), std::move(args), level, std::move(prefix));
  }

  GrammarBuilder& copy(const std::string& role, int level, std::string prefix = " ") {
    return slot(role, "copy", {role}, level, std::move(prefix));
  }

  GrammarBuilder& role(std::string id, std::vector<std::string> values = {},
                       std::map<std::string, std::string> tags = {}) {
    ContentRole r;
    r.values = std::move(values);
    r.tags = std::move(tags);
    g_.content_roles[std::move(id)] = std::move(r);
    return *this;
  }

  GrammarBuilder& alias(std::string id, std::string source) {
    ContentRole r;
    r.same_as = std::move(source);
    g_.content_roles[std::move(id)] = std::move(r);
    return *this;
  }

  GrammarBuilder& dependency(DependencyMatrix d) {
    g_.dependency = std::move(d);
    return *this;
  }

  GrammarBuilder& split(std::string word, std::vector<std::string> pieces) {
    g_.token_splits[std::move(word)] = std::move(pieces);
    return *this;
  }

  TaskGrammar build() {
    for (const auto& e : g_.elements)
      if (e.is_slot() && !g_.content_roles.count(e.role)) g_.content_roles[e.role] = ContentRole{};
    TaskGrammar out = g_;
    out.finalize();
    return out;
  }

 private:
  GrammarBuilder& slot(std::string role, std::string fn, std::vector<std::string> args, int level, std::string prefix) {
    GrammarElement e;
    e.section = section_;
    e.level = level;
    e.role = std::move(role);
    e.fn = std::move(fn);
    e.args = std::move(args);
    e.text = std::move(prefix);
    g_.elements.push_back(std::move(e));
    return *this;
  }

  TaskGrammar g_;
  Section section_ = Section::prompt;
};

}  // namespace tcprobe
