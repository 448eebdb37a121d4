#include <catch_amalgamated.hpp>

#include "support.hpp"
#include "tcprobe/oracle.hpp"
#include "tcprobe/rng.hpp"

using namespace tcprobe;
using tcprobe::testing::small_pool;

namespace {

QuestionValues mlm() { return {{"w1", "machine"}, {"w2", "learning"}, {"w3", "deep"}, {"w4", "model"}}; }

const TokenProb& only(const Distribution& d) {
  REQUIRE(d.support.size() == 1);
  REQUIRE(d.other_mass == 0.0);
  REQUIRE(d.support[0].p == 1.0);
  return d.support[0];
}

Distribution next_after(const Oracle& o, const std::string& text) { return o.next(o.tokenize(text)); }

std::string prompt_text() {
  return "Concatenate the last letters of the given words: machine, learning, deep, model.";
}

QuestionValues random_values(const TaskGrammar& g, Rng& rng) {
  QuestionValues v;
  for (const auto& role : g.input_roles()) v[role] = rng.pick(g.role(role).values);
  return v;
}

}  // namespace

TEST_CASE("oracle points at the bound word after 'The last letter of'") {
  Oracle o(concat_letters_grammar(small_pool()));
  const auto d = next_after(o, prompt_text() + "\nLet's think step by step.\n1. The last letter of");
  CHECK(only(d).text == " machine");
}

TEST_CASE("oracle emits the last letter after 'of machine is'") {
  Oracle o(concat_letters_grammar(small_pool()));
  const auto d = next_after(o, prompt_text() + "\nLet's think step by step.\n1. The last letter of machine is");
  CHECK(only(d).text == " e");
}

TEST_CASE("oracle emits the concatenated answer after 'we get'") {
  Oracle o(concat_letters_grammar(small_pool()));
  std::string text = prompt_text() + "\nLet's think step by step.";
  const std::vector<std::string> words{"machine", "learning", "deep", "model"};
  std::string expected;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const char last = words[i][words[i].size() - 1];
    expected += last;
    text += "\n" + std::to_string(i + 1) + ". The last letter of " + words[i] + " is " + std::string(1, last) + ".";
  }
  text += "\n5. Concatenating these letters together, we get";
  REQUIRE(expected == "egpl");
  CHECK(only(next_after(o, text)).text == " " + expected);
}

TEST_CASE("generated concat answer contains the answer twice") {
  Oracle o(concat_letters_grammar(small_pool()));
  const auto seq = o.generate(mlm());
  const auto texts = seq.word_texts();
  CHECK(std::count(texts.begin(), texts.end(), " egpl") == 2);
  CHECK(validate_labeled_sequence(seq).empty());
  CHECK(seq.text(seq.answer_begin()) ==
        "\nLet's think step by step."
        "\n1. The last letter of machine is e."
        "\n2. The last letter of learning is g."
        "\n3. The last letter of deep is p."
        "\n4. The last letter of model is l."
        "\n5. Concatenating these letters together, we get egpl."
        "\nTherefore, the answer is egpl.");
}

TEST_CASE("chicken-rabbit generation solves the linear system") {
  Oracle o(chicken_rabbit_grammar());
  auto solve = [](long long heads, long long legs) {
    for (long long x = 0; x <= heads; ++x)
      if (2 * x + 4 * (heads - x) == legs) return std::pair{x, heads - x};
    return std::pair{-1LL, -1LL};
  };
  REQUIRE(solve(35, 94) == std::pair{23LL, 12LL});
  const auto seq = o.generate({{"obj1", "chickens"}, {"obj2", "rabbits"}, {"heads", "35"}, {"legs", "94"}});
  const auto b = o.bindings_of(seq);
  CHECK(b.at("x").value == "23");
  CHECK(b.at("y").value == "12");
  CHECK(seq.text().find("there are 23 chickens and 12 rabbits.") != std::string::npos);

  REQUIRE(solve(10, 20) == std::pair{10LL, 0LL});
  const auto edge = o.generate({{"obj1", "ducks"}, {"obj2", "cows"}, {"heads", "10"}, {"legs", "20"}});
  CHECK(o.bindings_of(edge).at("x").value == "10");
  CHECK(o.bindings_of(edge).at("y").value == "0");
}

TEST_CASE("unsolvable chicken-rabbit question is rejected") {
  Oracle o(chicken_rabbit_grammar());
  CHECK_THROWS_AS(o.generate({{"obj1", "ducks"}, {"obj2", "cows"}, {"heads", "10"}, {"legs", "21"}}), Error);
}

TEST_CASE("empty content domain is rejected at grammar build time") {
  GrammarBuilder b("empty", 2);
  b.role("w", {});
  b.section(Section::prompt).words("Say");
  b.section(Section::question).input("w", 2);
  b.section(Section::answer).copy("w", 2);
  CHECK_THROWS_AS(b.build(), Error);
}

TEST_CASE("unbound and unknown roles are errors") {
  Oracle o(concat_letters_grammar(small_pool()));
  auto missing = mlm();
  missing.erase("w3");
  try {
    o.generate(missing);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::unbound_role);
  }
  auto extra = mlm();
  extra["zz"] = "deep";
  CHECK_THROWS_AS(o.generate(extra), Error);
  auto outside = mlm();
  outside["w1"] = "notinpool";
  CHECK_THROWS_AS(o.generate(outside), Error);
}

TEST_CASE("off-template prefixes are refused") {
  Oracle o(concat_letters_grammar(small_pool()));
  try {
    next_after(o, prompt_text() + "\nLet's think hard");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::off_template);
  }
  CHECK_THROWS_AS(next_after(o, "Concatenate the last letters of the given words: zebra"), Error);
  auto done = o.tokenize(o.generate(mlm()).text());
  done.push_back(o.eos());
  CHECK_THROWS_AS(o.next(done), Error);
}

TEST_CASE("end of answer yields end-of-text") {
  Oracle o(concat_letters_grammar(small_pool()));
  const auto seq = o.generate(mlm());
  CHECK(only(o.next(o.tokenize(seq.text()))).id == o.eos().id);
}

TEST_CASE("question slots are uniform over the domain") {
  Oracle o(concat_letters_grammar(small_pool()));
  const auto d = next_after(o, "Concatenate the last letters of the given words:");
  REQUIRE(d.support.size() == small_pool().size());
  for (const auto& e : d.support) CHECK(e.p == Catch::Approx(1.0 / small_pool().size()));
  CHECK(std::abs(d.total() - 1.0) <= kMassTolerance);
}

TEST_CASE("partially typed question word narrows the candidates") {
  std::vector<std::string> pool{"deep", "deeper", "model", "apple"};
  Oracle o(concat_letters_grammar(pool));
  const auto d = next_after(o, "Concatenate the last letters of the given words: deep");
  // "deep" may be complete (next is ",") or the start of "deeper"; the
  // tokenizer treats each word as one token, so only the complete reading
  // lies on a token boundary.
  CHECK(only(d).text == ",");
}

TEST_CASE("multi-token words are emitted piece by piece") {
  auto g = concat_letters_grammar(small_pool());
  g.token_splits[" machine"] = {" ma", "chine"};
  g.finalize();
  Oracle o(g);
  const std::string head = prompt_text() + "\nLet's think step by step.\n1. The last letter of";
  CHECK(only(next_after(o, head)).text == " ma");
  CHECK(only(next_after(o, head + " ma")).text == "chine");
  CHECK(only(next_after(o, head + " machine")).text == " is");
  const auto seq = o.generate(mlm());
  CHECK(seq.words[seq.answer_begin() + 12].token_ids.size() == 2);
  CHECK(validate_labeled_sequence(seq).empty());
}

TEST_CASE("generation is deterministic and agrees with direct instantiation") {
  for (const auto& g : {concat_letters_grammar(small_pool()), concat_alt_grammar(small_pool()), arith3_grammar(),
                        subtraction_levels_grammar(), subtraction_levels_grammar(true)}) {
    Oracle o(g);
    Rng rng(11);
    for (int i = 0; i < 30; ++i) {
      const auto v = random_values(g, rng);
      const auto a = o.generate(v);
      CHECK(a == o.generate(v));
      CHECK(a == o.instantiate(v));
      CHECK(o.question_values(a) == v);
    }
  }
}

TEST_CASE("next is causal: appending a suffix never changes earlier answers") {
  Oracle o(concat_alt_grammar(small_pool()));
  Rng rng(5);
  for (int i = 0; i < 10; ++i) {
    const auto seq = o.generate(random_values(o.grammar(), rng));
    const auto tokens = o.tokenize(seq.text());
    std::vector<Distribution> first;
    for (std::size_t t = 1; t <= tokens.size(); ++t) first.push_back(o.next(std::span(tokens).first(t)));
    for (std::size_t t = 1; t <= tokens.size(); ++t) CHECK(o.next(std::span(tokens).first(t)) == first[t - 1]);
  }
}

TEST_CASE("template next-words are invariant to content replacement") {
  // For two samples with the same template, the next-word distribution at
  // every answer position agrees whenever the next word is template, and the
  // next-word label is always the same.
  for (const auto& g : {concat_letters_grammar(small_pool()), chicken_rabbit_grammar(), arith3_grammar()}) {
    Oracle o(g);
    Rng rng(3);
    int compared = 0;
    while (compared < 20) {
      QuestionValues va = random_values(g, rng), vb = random_values(g, rng);
      LabeledSequence a, b;
      try {
        a = o.generate(va);
        b = o.generate(vb);
      } catch (const Error&) {
        continue;
      }
      REQUIRE(a.labels == b.labels);
      for (std::size_t t = a.answer_begin(); t < a.size(); ++t) {
        const auto da = o.next(o.tokenize(a.text(0, t)));
        const auto db = o.next(o.tokenize(b.text(0, t)));
        if (a.labels[t].is_template()) CHECK(da == db);
      }
      ++compared;
    }
  }
}

TEST_CASE("epsilon noise keeps the argmax and the total mass") {
  OracleOptions opt;
  opt.epsilon = 0.1;
  opt.distractors = {" banana", " zzz", " the"};
  Oracle noisy(concat_letters_grammar(small_pool()), opt);
  Oracle clean(concat_letters_grammar(small_pool()));
  const auto seq = clean.generate(mlm());
  CHECK(noisy.generate(mlm()).word_texts() == seq.word_texts());
  const auto tokens = noisy.tokenize(seq.text());
  for (std::size_t t = seq.words[seq.answer_begin()].start_index; t < tokens.size(); ++t) {
    const auto d = noisy.next(std::span(tokens).first(t));
    CHECK(std::abs(d.total() - 1.0) <= kMassTolerance);
    CHECK(d.argmax()->id == tokens[t].id);
    CHECK(d.argmax()->p >= 0.9);
  }
  OracleOptions bad;
  bad.epsilon = 0.2;
  CHECK_THROWS_AS(Oracle(arith3_grammar(), bad), Error);
}

TEST_CASE("tokenize reconstructs the text") {
  Oracle o(concat_letters_grammar(small_pool()));
  for (std::string s : {"Hello world", "a,b.c:d;e\nf", " leading space", "x"}) {
    std::string joined;
    for (const auto& t : o.tokenize(s)) joined += t.text;
    CHECK(joined == s);
  }
  CHECK_THROWS_AS(o.tokenize(""), Error);
}

TEST_CASE("token ids are stable across oracle instances") {
  Oracle a(concat_letters_grammar(small_pool()));
  Oracle b(concat_letters_grammar(small_pool()));
  const auto sa = a.generate(mlm());
  (void)b.tokenize("unrelated words first");
  CHECK(b.generate(mlm()) == sa);
  const auto* dyn = &sa.words[sa.answer_begin() + 14];
  CHECK(dyn->text == " e");
  CHECK(dyn->token_ids[0] >= Vocabulary::kDynamicBase);
  CHECK(b.vocabulary().text_of(dyn->token_ids[0]) == std::optional<std::string>(" e"));
}

TEST_CASE("remember accepts generated samples and rejects altered ones") {
  Oracle o(concat_letters_grammar(small_pool()));
  auto seq = o.generate(mlm());
  o.remember(seq);
  CHECK(o.remembered().size() == 1);
  seq.words.back().text = "!";
  CHECK_FALSE(o.reproduces(seq));
  CHECK_THROWS_AS(o.remember(seq), Error);
}

TEST_CASE("word tags follow role tags") {
  Oracle o(arith3_grammar());
  const auto a = o.generate({{"x", "2"}, {"op", "plus"}});
  const auto b = o.generate({{"x", "2"}, {"op", "add"}});
  CHECK(a.text() == "Solve: 2 plus 1.\nAnswer: 2 + 1 = 3.");
  CHECK(b.text() == "Solve: 2 add 1.\nAnswer: 2 + 1 = 3.");
  const auto ta = o.word_tags(a);
  CHECK(ta == o.word_tags(b));
  CHECK(ta[3] == "op=+");
  CHECK(ta[0] == "Solve");
}
