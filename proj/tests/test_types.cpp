#include <catch_amalgamated.hpp>

#include "tcprobe/hash.hpp"
#include "tcprobe/rng.hpp"
#include "tcprobe/types.hpp"

using namespace tcprobe;

namespace {

// " a b" + " c" with labels T C C, prompt " a", question " b".
LabeledSequence small_sequence() {
  LabeledSequence s;
  s.words = {{" a", {1}, 0}, {" b", {2, 3}, 1}, {" c", {4}, 3}};
  s.labels = {kTemplateLabel, kContentLabel, kContentLabel};
  s.prompt_len = 1;
  s.question_len = 1;
  return s;
}

bool has_violation(const LabeledSequence& s, const std::string& message) {
  for (const auto& v : validate_labeled_sequence(s))
    if (v.message == message) return true;
  return false;
}

}  // namespace

TEST_CASE("a well-formed sequence has no violations") {
  const auto s = small_sequence();
  CHECK(validate_labeled_sequence(s).empty());
  CHECK(s.text() == " a b c");
  CHECK(s.text(s.answer_begin()) == " c");
  CHECK(s.word_texts() == std::vector<std::string>{" a", " b", " c"});
}

TEST_CASE("sequence invariants are each reported") {
  auto s = small_sequence();
  s.labels.pop_back();
  CHECK(has_violation(s, "labels and words differ in length"));

  s = small_sequence();
  s.words[2].start_index = 2;
  CHECK(has_violation(s, "words are not contiguous"));

  s = small_sequence();
  s.labels[0] = kContentLabel;
  CHECK(has_violation(s, "prompt must be template"));

  s = small_sequence();
  s.labels[1] = kTemplateLabel;
  CHECK(has_violation(s, "question must be content"));

  s = small_sequence();
  s.labels[2] = TCLabel{3};
  CHECK(has_violation(s, "label level out of range"));
  s.n_levels = 3;
  CHECK(validate_labeled_sequence(s).empty());

  s = small_sequence();
  s.words[1].token_ids.clear();
  CHECK(has_violation(s, "word has no tokens"));

  s = small_sequence();
  s.words[0].token_ids = {-1};
  CHECK(has_violation(s, "negative token id"));

  s = small_sequence();
  s.prompt_len = 3;
  CHECK(has_violation(s, "prompt and question extend past the sequence"));

  CHECK(has_violation(LabeledSequence{}, "empty sequence"));
}

TEST_CASE("sequences round-trip through JSON") {
  const auto s = small_sequence();
  CHECK(json(s).get<LabeledSequence>() == s);
  const ProbeRecord r{7, " c", {Distribution::one_hot({4, " c"})}, 0.0, 0.0, kContentLabel};
  const auto back = json(r).get<ProbeRecord>();
  CHECK(back.position == 7);
  CHECK(back.word == " c");
  CHECK(back.distributions == r.distributions);
  CHECK(back.truth_label == kContentLabel);
}

TEST_CASE("distribution argmax, truncation and validation") {
  Distribution d{{{5, " a", 0.2}, {3, " b", 0.5}, {9, " c", 0.2}, {1, " d", 0.1}}, 0.0};
  d.validate();
  REQUIRE(d.argmax() != nullptr);
  CHECK(d.argmax()->id == 3);
  CHECK(d.prob(9) == 0.2);
  CHECK(d.prob(42) == 0.0);

  d.truncate(2);
  REQUIRE(d.support.size() == 2);
  CHECK(d.support[0].id == 3);
  CHECK(d.support[1].id == 5);  // ties broken by the smaller id
  CHECK_THAT(d.other_mass, Catch::Matchers::WithinAbs(0.3, 1e-12));
  d.validate();

  Distribution tie{{{8, " x", 0.5}, {2, " y", 0.5}}, 0.0};
  CHECK(tie.argmax()->id == 2);
  CHECK(Distribution{}.argmax() == nullptr);

  CHECK_THROWS_AS((Distribution{{{1, "a", 0.5}}, 0.0}.validate()), Error);
  CHECK_THROWS_AS((Distribution{{{1, "a", 0.5}, {1, "b", 0.5}}, 0.0}.validate()), Error);
  CHECK_THROWS_AS((Distribution{{{1, "a", -0.5}, {2, "b", 1.5}}, 0.0}.validate()), Error);
  CHECK_THROWS_AS((Distribution{{{1, "a", 1.0}}, std::nan("")}.validate()), Error);
}

TEST_CASE("hash and rng are stable") {
  // FNV-1a 64 reference values.
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");

  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    CHECK(x != c.next());
  }
  CHECK(stream_seed(1, 0) != stream_seed(1, 1));
  CHECK(stream_seed(1, 0) != stream_seed(2, 0));

  Rng r(5);
  std::vector<int> counts(6, 0);
  for (int i = 0; i < 60000; ++i) {
    const auto v = r.between(-2, 3);
    REQUIRE(v >= -2);
    REQUIRE(v <= 3);
    ++counts[static_cast<std::size_t>(v + 2)];
    const double u = r.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
  for (int n : counts) CHECK(std::abs(n - 10000) < 500);
}
