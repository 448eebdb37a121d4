#pragma once

// Built-in grammars: the two concatenate-last-letter templates, the
// chicken-and-rabbit word problem, and small multi-level grammars used to
// exercise hierarchical composition and sparse dependency.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "tcprobe/error.hpp"
#include "tcprobe/grammar.hpp"

namespace tcprobe {

/// Reads a word pool: one word per line, blank lines and '#' comments
/// skipped, duplicates dropped. Every word must be ASCII letters only.
inline std::vector<std::string> load_word_pool(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open word pool '" + path + "'");
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    for (char c : line) require(std::isalpha(static_cast<unsigned char>(c)) != 0, "word pool entry '" + line + "' is not letters-only");
    if (seen.insert(line).second) out.push_back(line);
  }
  return out;
}

namespace detail {

inline void check_pool(const std::vector<std::string>& pool) {
  require(pool.size() >= 4, "word pool too small: need at least 4 words");
  for (const auto& w : pool) {
    require(!w.empty(), "empty word in pool");
    for (char c : w) require(std::isalpha(static_cast<unsigned char>(c)) != 0, "pool word '" + w + "' is not letters-only");
  }
}

inline void concat_question(GrammarBuilder& b, const std::vector<std::string>& pool) {
  b.section(Section::prompt).words("Concatenate the last letters of the given words:");
  b.section(Section::question);
  for (int i = 1; i <= 4; ++i) {
    const std::string w = "w" + std::to_string(i);
    if (i == 1) b.role(w, pool);
    else b.alias(w, "w1");
    b.input(w, 2);
    b.words(i < 4 ? "," : ".", 2);
  }
  b.section(Section::answer).words("\nLet's think step by step.");
}

}  // namespace detail

inline constexpr const char* kConcatLettersName = "concat-letters";
inline constexpr const char* kConcatAltName = "concat-letters-alt";
inline constexpr const char* kChickenRabbitName = "chicken-rabbit";

/// Concatenate-last-letter task with the step-by-step answer template.
inline TaskGrammar concat_letters_grammar(const std::vector<std::string>& pool) {
  detail::check_pool(pool);
  GrammarBuilder b(kConcatLettersName, 2);
  detail::concat_question(b, pool);
  for (int i = 1; i <= 4; ++i) {
    const std::string n = std::to_string(i);
    b.words("\n" + n + ". The last letter of").copy("w" + n, 2).words(" is");
    b.computed("l" + n, "last_letter", {"w" + n}, 2).words(".");
  }
  b.words("\n5. Concatenating these letters together, we get");
  b.computed("ans", "concat", {"l1", "l2", "l3", "l4"}, 2).words(".");
  b.words("\nTherefore, the answer is").copy("ans", 2).words(".");
  return b.build();
}

/// The same task with the alternative answer template (letters repeated in
/// an explicit concatenation line).
inline TaskGrammar concat_alt_grammar(const std::vector<std::string>& pool) {
  detail::check_pool(pool);
  GrammarBuilder b(kConcatAltName, 2);
  detail::concat_question(b, pool);
  for (int i = 1; i <= 4; ++i) {
    const std::string n = std::to_string(i);
    b.words("\n" + n + ". Word:").copy("w" + n, 2).words(", last letter:");
    b.computed("l" + n, "last_letter", {"w" + n}, 2).words(".");
  }
  b.words("\nNow, let us concatenate the last letters of each word:");
  for (int i = 1; i <= 4; ++i) {
    b.copy("l" + std::to_string(i), 2).words(i < 4 ? " +" : " =");
  }
  b.computed("ans", "concat", {"l1", "l2", "l3", "l4"}, 2).words(".");
  b.words(" Therefore, the concatenated result is").copy("ans", 2).words(".");
  return b.build();
}

struct ChickenRabbitParams {
  long long heads_min = 10;
  long long heads_max = 60;
  long long legs_min = 20;
  long long legs_max = 240;
  std::vector<std::string> two_legged{"chickens", "ducks", "geese", "hens", "turkeys"};
  std::vector<std::string> four_legged{"rabbits", "cows", "pigs", "goats", "dogs", "sheep"};

  void validate() const {
    require(heads_min >= 0 && heads_min <= heads_max, "invalid heads range");
    require(legs_min >= 0 && legs_min <= legs_max, "invalid legs range");
    require(!two_legged.empty() && !four_legged.empty(), "animal lists must be non-empty");
  }
};

namespace detail {

inline std::vector<std::string> int_range(long long lo, long long hi) {
  std::vector<std::string> out;
  for (long long v = lo; v <= hi; ++v) out.push_back(std::to_string(v));
  return out;
}

}  // namespace detail

/// Two-variable linear word problem with a fixed equation-solving answer.
inline TaskGrammar chicken_rabbit_grammar(const ChickenRabbitParams& p = {}) {
  p.validate();
  GrammarBuilder b(kChickenRabbitName, 2);
  b.role("obj1", p.two_legged).role("obj2", p.four_legged);
  b.role("heads", detail::int_range(p.heads_min, p.heads_max));
  b.role("legs", detail::int_range(p.legs_min, p.legs_max));
  b.section(Section::prompt).words("Answer the question step by step.");
  b.section(Section::question).words("\nA farm has", 2).input("obj1", 2).words(" and", 2).input("obj2", 2);
  b.words(". There are", 2).input("heads", 2).words(" heads and", 2).input("legs", 2);
  b.words(" legs in total. How many", 2).copy("obj1", 2).words(" and", 2).copy("obj2", 2).words(" are there?", 2);
  b.section(Section::answer).words("\nLet x be the number of").copy("obj1", 2);
  b.words(" and y be the number of").copy("obj2", 2);
  b.words(".\nWe have two equations:\nx + y =").copy("heads", 2);
  b.words("\n2x + 4y =").copy("legs", 2);
  b.words("\nMultiply the first equation by 2: 2x + 2y =").computed("double_heads", "mul", {"heads", "=2"}, 2);
  b.words(".\nSubtract it from the second equation: 2y =").computed("diff", "sub", {"legs", "double_heads"}, 2);
  b.words(".\nSo y =").computed("y", "solve_second", {"heads", "legs", "=2", "=4"}, 2);
  b.words(".\nThen x =").copy("heads", 2).words(" -").copy("y", 2).words(" =");
  b.computed("x", "solve_first", {"heads", "legs", "=2", "=4"}, 2);
  b.words(".\nTherefore, there are").copy("x", 2).copy("obj1", 2).words(" and").copy("y", 2).copy("obj2", 2).words(".");
  return b.build();
}

/// Three-level toy grammar. Level 2 is the operator (whose tag is its
/// symbol, so "plus" and "add" share a label); level 3 is the operand and
/// the result. Level-2 words never depend on level 1.
inline TaskGrammar arith3_grammar() {
  GrammarBuilder b("arith3", 3);
  b.role("x", {"2", "3"});
  b.role("op", {"plus", "add", "minus"}, {{"plus", "+"}, {"add", "+"}, {"minus", "-"}});
  b.section(Section::prompt).words("Solve:");
  b.section(Section::question).input("x", 3).input("op", 2).words(" 1", 3);
  b.section(Section::answer).words(".\nAnswer:").copy("x", 3).computed("sym", "tag", {"op"}, 2);
  b.words(" 1", 3).words(" =", 2).computed("result", "apply", {"op", "x", "=1"}, 3).words(".");
  b.dependency(DependencyMatrix({{1}, {0, 1}, {0, 1, 1}}));
  return b.build();
}

/// Three-level subtraction: a level-1 format word, a level-2 equation and a
/// level-3 result that depends only on the equation.
inline TaskGrammar subtraction_levels_grammar(bool leak_format_into_result = false) {
  GrammarBuilder b(leak_format_into_result ? "subtraction-levels-leaky" : "subtraction-levels", 3);
  b.role("style", {"plain", "boxed"}).role("a", {"54", "61", "70"}).role("b", {"28", "19"});
  b.section(Section::prompt).words("Format").input("style", 1).words(":");
  b.section(Section::question).input("a", 2).words(" minus", 2).input("b", 2);
  b.section(Section::answer).words("\nIn").copy("style", 1).words(" form:");
  b.copy("a", 2).words(" -", 2).copy("b", 2).words(" =", 2);
  b.computed("result", "sub", {"a", "b"}, 3);
  if (leak_format_into_result) b.computed("shown_as", "copy", {"style"}, 3);
  b.words(".");
  b.dependency(DependencyMatrix({{1}, {0, 1}, {0, 1, 1}}));
  return b.build();
}

inline std::vector<std::string> builtin_grammar_names() {
  return {kConcatLettersName, kConcatAltName, kChickenRabbitName, "arith3", "subtraction-levels",
          "subtraction-levels-leaky"};
}

/// Built-in grammar by name; the concat grammars draw their words from `pool`.
inline TaskGrammar builtin_grammar(std::string_view name, const std::vector<std::string>& pool) {
  if (name == kConcatLettersName) return concat_letters_grammar(pool);
  if (name == kConcatAltName) return concat_alt_grammar(pool);
  if (name == kChickenRabbitName) return chicken_rabbit_grammar();
  if (name == "arith3") return arith3_grammar();
  if (name == "subtraction-levels") return subtraction_levels_grammar();
  if (name == "subtraction-levels-leaky") return subtraction_levels_grammar(true);
  fail(Errc::invalid_input, "unknown grammar: " + std::string(name));
}

/// A built-in name, or a path to a grammar JSON file.
inline TaskGrammar load_grammar(const std::string& ref, const std::vector<std::string>& pool) {
  const auto names = builtin_grammar_names();
  if (std::find(names.begin(), names.end(), ref) != names.end()) return builtin_grammar(ref, pool);
  std::ifstream in(ref);
  require(in.good(), "cannot open grammar file: " + ref);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(Errc::invalid_input, "grammar file " + ref + " is not JSON: " + e.what());
  }
  return j.get<TaskGrammar>();
}

}  // namespace tcprobe
