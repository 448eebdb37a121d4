#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "support.hpp"
#include "tcprobe/grammar.hpp"
#include "tcprobe/grammars.hpp"

using namespace tcprobe;
using tcprobe::testing::data_path;
using tcprobe::testing::small_pool;

namespace {

GrammarElement call(std::string fn, std::vector<std::string> args) {
  GrammarElement e;
  e.role = "out";
  e.fn = std::move(fn);
  e.args = std::move(args);
  return e;
}

Bindings bind(std::initializer_list<std::pair<const char*, const char*>> kv) {
  Bindings b;
  for (const auto& [k, v] : kv) b[k] = BoundValue{v, v};
  return b;
}

std::string invalid_reason(const json& j) {
  try {
    (void)j.get<TaskGrammar>();
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_input);
    return e.what();
  }
  return "";
}

json minimal_grammar() {
  return json::parse(R"({
    "name": "tiny",
    "n_levels": 2,
    "roles": {"x": {"values": ["cat", "dog"]}, "y": {}},
    "elements": [
      {"section": "prompt", "level": 1, "text": "Echo"},
      {"section": "question", "level": 2, "slot": "x", "prefix": " "},
      {"section": "answer", "level": 1, "text": " It"},
      {"section": "answer", "level": 1, "text": " is"},
      {"section": "answer", "level": 2, "slot": "y", "prefix": " ", "fn": "copy", "args": ["x"]}
    ]
  })");
}

}  // namespace

TEST_CASE("slot functions compute from tags") {
  const auto b = bind({{"w", "machine"}, {"v", "deep"}, {"a", "7"}, {"c", "3"}});
  CHECK(evaluate(call("last_letter", {"w"}), b).value == "e");
  CHECK(evaluate(call("concat", {"w", "v", "=!"}), b).value == "machinedeep!");
  CHECK(evaluate(call("add", {"a", "c"}), b).value == "10");
  CHECK(evaluate(call("sub", {"c", "a"}), b).value == "-4");
  CHECK(evaluate(call("mul", {"a", "=6"}), b).value == "42");
  CHECK(evaluate(call("div", {"=21", "a"}), b).value == "3");
  CHECK_THROWS_AS(evaluate(call("div", {"a", "c"}), b), Error);

  Bindings ops = b;
  ops["op"] = BoundValue{"add", "+"};
  CHECK(evaluate(call("apply", {"op", "a", "c"}), ops).value == "10");
  CHECK(evaluate(call("tag", {"op"}), ops).value == "+");
  CHECK(evaluate(call("copy", {"op"}), ops) == BoundValue{"add", "+"});

  // 35 heads, 94 legs, 2 and 4 legs each: 23 and 12.
  const auto cr = bind({{"h", "35"}, {"l", "94"}});
  CHECK(evaluate(call("solve_first", {"h", "l", "=2", "=4"}), cr).value == "23");
  CHECK(evaluate(call("solve_second", {"h", "l", "=2", "=4"}), cr).value == "12");
  CHECK_THROWS_AS(evaluate(call("solve_first", {"=10", "=5", "=2", "=4"}), cr), Error);
  CHECK_THROWS_AS(evaluate(call("solve_first", {"=10", "=21", "=2", "=4"}), cr), Error);

  try {
    evaluate(call("copy", {"missing"}), b);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::unbound_role);
  }
  CHECK_THROWS_AS(evaluate(call("add", {"w", "a"}), b), Error);
}

TEST_CASE("linear-system solutions satisfy both equations") {
  for (long long x = 0; x <= 30; ++x)
    for (long long y = 0; y <= 30; ++y) {
      const auto [sx, sy] = detail::solve_pair(x + y, 2 * x + 4 * y, 2, 4);
      REQUIRE(sx == x);
      REQUIRE(sy == y);
    }
}

TEST_CASE("a minimal grammar loads from JSON") {
  const auto g = minimal_grammar().get<TaskGrammar>();
  CHECK(g.name == "tiny");
  CHECK(g.count(Section::answer) == 3);
  CHECK(g.input_roles() == std::vector<std::string>{"x"});
  CHECK(g.dependency == DependencyMatrix::full(2));
  CHECK(g.role("y").values.empty());
}

TEST_CASE("grammar validation rejects malformed grammars") {
  auto j = minimal_grammar();
  j["elements"][0]["level"] = 2;
  CHECK(invalid_reason(j).find("prompt words must be template") != std::string::npos);

  j = minimal_grammar();
  j["elements"][1]["level"] = 1;
  CHECK(invalid_reason(j).find("question words must be content") != std::string::npos);

  j = minimal_grammar();
  j["elements"][4]["args"] = {"z"};
  CHECK(invalid_reason(j).find("not bound by an earlier slot") != std::string::npos);

  j = minimal_grammar();
  j["elements"][4]["fn"] = "reverse";
  CHECK(invalid_reason(j).find("unknown function") != std::string::npos);

  j = minimal_grammar();
  j["elements"][2]["text"] = "It";
  CHECK(invalid_reason(j).find("must start with a boundary") != std::string::npos);

  j = minimal_grammar();
  j["elements"][2]["text"] = " It is";
  CHECK(invalid_reason(j).find("inner boundary") != std::string::npos);

  j = minimal_grammar();
  j["roles"]["x"]["values"] = {"big cat"};
  CHECK(invalid_reason(j).find("contains a word boundary") != std::string::npos);

  j = minimal_grammar();
  j["roles"]["x"]["values"] = json::array();
  CHECK(invalid_reason(j).find("empty content domain") != std::string::npos);

  j = minimal_grammar();
  j["elements"][1]["section"] = "answer";
  CHECK(!invalid_reason(j).empty());

  j = minimal_grammar();
  j["dependency"] = {{1}, {1, 1, 1}};
  CHECK(invalid_reason(j).find("lower-triangular") != std::string::npos);

  j = minimal_grammar();
  j["dependency"] = {{1}, {1, 0}};
  CHECK(invalid_reason(j).find("depend on itself") != std::string::npos);

  j = minimal_grammar();
  j["roles"]["z"] = {{"same_as", "nope"}};
  CHECK(invalid_reason(j).find("aliases an unknown") != std::string::npos);

  j = minimal_grammar();
  j["token_splits"] = {{"cat", {"c", "t"}}};
  CHECK(invalid_reason(j).find("do not concatenate") != std::string::npos);

  j = minimal_grammar();
  j.erase("elements");
  CHECK(invalid_reason(j).find("malformed grammar") != std::string::npos);

  j = minimal_grammar();
  j["n_levels"] = 1;
  CHECK(!invalid_reason(j).empty());
}

TEST_CASE("builder and JSON round-trip agree for every built-in grammar") {
  for (const auto& name : builtin_grammar_names()) {
    const auto g = builtin_grammar(name, small_pool());
    const auto back = json(g).get<TaskGrammar>();
    CHECK(back.name == g.name);
    CHECK(back.elements == g.elements);
    CHECK(back.content_roles == g.content_roles);
    CHECK(back.dependency == g.dependency);
    CHECK(back.token_splits == g.token_splits);
    CHECK(json(back) == json(g));
  }
  CHECK_THROWS_AS(builtin_grammar("nope", small_pool()), Error);
}

TEST_CASE("bundled grammar files match the built-in grammars") {
  const auto pool = tcprobe::testing::word_pool();
  for (const auto& name : builtin_grammar_names()) {
    const auto path = data_path("grammars/" + name + ".json");
    REQUIRE(std::filesystem::exists(path));
    CHECK(json(load_grammar(path, {})) == json(builtin_grammar(name, pool)));
  }
}

TEST_CASE("role aliases share their source domain") {
  GrammarBuilder b("alias", 2);
  b.role("a", {"red", "blue"}, {{"red", "warm"}}).alias("b", "a");
  b.section(Section::prompt).words("Pick");
  b.section(Section::question).input("a", 2).input("b", 2);
  b.section(Section::answer).words(" ok");
  const auto g = b.build();
  CHECK(g.role("b").values == g.role("a").values);
  CHECK(g.role("b").tag_of("red") == "warm");
  CHECK(g.role("b").contains("blue"));
  CHECK_FALSE(g.role("b").contains("green"));
  CHECK(json(g).at("roles").at("b") == json{{"same_as", "a"}});
}

TEST_CASE("word pools are validated") {
  const auto& pool = tcprobe::testing::word_pool();
  CHECK(pool.size() == 5000);
  const auto dir = std::filesystem::temp_directory_path() / "tcprobe_pool_test";
  std::filesystem::create_directories(dir);
  const auto bad = (dir / "bad.txt").string();
  std::ofstream(bad) << "apple\nbig apple\n";
  CHECK_THROWS_AS(load_word_pool(bad), Error);
  CHECK_THROWS_AS(load_word_pool((dir / "missing.txt").string()), Error);
  std::filesystem::remove_all(dir);
}
