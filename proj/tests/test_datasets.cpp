#include <catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "support.hpp"
#include "tcprobe/datasets.hpp"

using namespace tcprobe;
using tcprobe::testing::data_path;
using tcprobe::testing::small_pool;
using tcprobe::testing::word_pool;

namespace {

std::size_t answer_content_words(const LabeledSequence& s) {
  std::size_t n = 0;
  for (std::size_t t = s.answer_begin(); t < s.size(); ++t) n += !s.labels[t].is_template();
  return n;
}

std::string dump(const std::vector<ProbeDataset>& ds) {
  std::ostringstream out;
  for (const auto& d : ds)
    for (const auto& r : to_records(d)) out << json(r).dump() << '\n';
  return out.str();
}

}  // namespace

TEST_CASE("word pool ships 5000 letters-only words") {
  const auto& pool = word_pool();
  CHECK(pool.size() == 5000);
  std::set<char> last;
  for (const auto& w : pool) last.insert(w.back());
  CHECK(last.size() >= 10);
}

TEST_CASE("concat samples have 10 content words in the answer") {
  const auto ds = gen_concat_last_letter(word_pool(), 20, 8, 7);
  REQUIRE(ds.size() == 20);
  Oracle o(concat_letters_grammar(word_pool()));
  for (const auto& d : ds) {
    CHECK(check_dataset(d).empty());
    CHECK(d.replacements.size() == 8);
    CHECK(answer_content_words(d.reference.seq) == 10);
    CHECK(verify_answer(o, d.reference.seq));
    for (const auto& r : d.replacements) {
      CHECK(answer_content_words(r.seq) == 10);
      CHECK(verify_answer(o, r.seq));
    }
  }
}

TEST_CASE("alternative template has 14 content words in the answer") {
  const auto ds = gen_concat_alt_template(word_pool(), 20, 8, 7);
  Oracle o(concat_alt_grammar(word_pool()));
  for (const auto& d : ds) {
    CHECK(check_dataset(d).empty());
    CHECK(answer_content_words(d.reference.seq) == 14);
    CHECK(verify_answer(o, d.reference.seq));
  }
}

TEST_CASE("concat content slots are pairwise distinct across all variants") {
  for (const auto& d : gen_concat_last_letter(word_pool(), 10, 8, 3)) {
    for (std::size_t t : d.content_slots) {
      std::set<std::string> seen{d.reference.seq.words[t].text};
      for (const auto& r : d.replacements) seen.insert(r.seq.words[t].text);
      CHECK(seen.size() == 9);
    }
  }
}

TEST_CASE("known words give the known letters and answer") {
  Oracle o(concat_letters_grammar(small_pool()));
  const auto seq = o.generate({{"w1", "machine"}, {"w2", "learning"}, {"w3", "deep"}, {"w4", "model"}});
  const auto b = o.bindings_of(seq);
  CHECK(b.at("l1").value == "e");
  CHECK(b.at("l2").value == "g");
  CHECK(b.at("l3").value == "p");
  CHECK(b.at("l4").value == "l");
  CHECK(b.at("ans").value == "egpl");
  Oracle alt(concat_alt_grammar(small_pool()));
  const auto seq2 = alt.generate({{"w1", "machine"}, {"w2", "learning"}, {"w3", "deep"}, {"w4", "model"}});
  CHECK(alt.bindings_of(seq2).at("ans").value == "egpl");
}

TEST_CASE("generators are deterministic in the seed") {
  CHECK(dump(gen_concat_last_letter(word_pool(), 5, 4, 99)) == dump(gen_concat_last_letter(word_pool(), 5, 4, 99)));
  CHECK(dump(gen_concat_last_letter(word_pool(), 5, 4, 99)) != dump(gen_concat_last_letter(word_pool(), 5, 4, 98)));
  CHECK(dump(gen_concat_alt_template(word_pool(), 5, 4, 1)) == dump(gen_concat_alt_template(word_pool(), 5, 4, 1)));
  CHECK(dump(gen_chicken_rabbit({}, 5, 4, 1)) == dump(gen_chicken_rabbit({}, 5, 4, 1)));
}

TEST_CASE("per-sample streams make prefixes of a run agree") {
  const auto small = gen_concat_last_letter(word_pool(), 3, 4, 5);
  const auto large = gen_concat_last_letter(word_pool(), 6, 4, 5);
  for (std::size_t i = 0; i < small.size(); ++i) CHECK(small[i] == large[i]);
}

TEST_CASE("generator preconditions") {
  CHECK_THROWS_AS(gen_concat_last_letter({"abc", "def", "ghi"}, 1, 2, 0), Error);
  CHECK_THROWS_AS(gen_concat_last_letter(small_pool(), 1, 1, 0), Error);
  // two distinct last letters cannot give three distinct variants
  CHECK_THROWS_AS(gen_concat_last_letter({"aa", "ba", "ca", "ab"}, 1, 2, 0), Error);
  ChickenRabbitParams impossible;
  impossible.heads_min = impossible.heads_max = 10;
  impossible.legs_min = 50;
  impossible.legs_max = 60;
  CHECK_THROWS_AS(gen_chicken_rabbit(impossible, 1, 2, 0), Error);
}

TEST_CASE("chicken-rabbit datasets are aligned and verified") {
  const auto ds = gen_chicken_rabbit({}, 30, 4, 11);
  Oracle o(chicken_rabbit_grammar());
  for (const auto& d : ds) {
    CHECK(check_dataset(d).empty());
    CHECK(verify_answer(o, d.reference.seq));
    for (const auto& r : d.replacements) CHECK(verify_answer(o, r.seq));
  }
}

TEST_CASE("replacing (35, 94) by (20, 56) keeps every template word") {
  Oracle o(chicken_rabbit_grammar());
  const auto a = o.generate({{"obj1", "chickens"}, {"obj2", "rabbits"}, {"heads", "35"}, {"legs", "94"}});
  const auto b = o.generate({{"obj1", "chickens"}, {"obj2", "rabbits"}, {"heads", "20"}, {"legs", "56"}});
  REQUIRE(a.labels == b.labels);
  for (std::size_t t = 0; t < a.size(); ++t)
    if (a.labels[t].is_template()) CHECK(a.words[t].text == b.words[t].text);
  CHECK(o.bindings_of(b).at("x").value == "12");
  CHECK(o.bindings_of(b).at("y").value == "8");
}

TEST_CASE("content augmentation: 100 problems x 5 gives 500 verified pairs") {
  const auto ds = gen_chicken_rabbit({}, 100, 2, 21);
  Oracle o(chicken_rabbit_grammar());
  const auto corpus = augment_content_replacement(ds, o, 5, 22);
  REQUIRE(corpus.size() == 500);
  std::set<std::string> ids;
  for (const auto& r : corpus) {
    ids.insert(r.id);
    CHECK(r.augmentation == "content");
    CHECK(verify_answer(o, sequence_from_record(r)));
  }
  CHECK(ids.size() == 500);
  CHECK_THROWS_AS(augment_content_replacement(ds, o, 0, 22), Error);
}

TEST_CASE("verify_answer rejects a wrong answer") {
  Oracle o(chicken_rabbit_grammar());
  auto seq = o.generate({{"obj1", "chickens"}, {"obj2", "rabbits"}, {"heads", "35"}, {"legs", "94"}});
  const auto texts = seq.word_texts();
  const auto it = std::find(texts.rbegin(), texts.rend(), " 23");
  REQUIRE(it != texts.rend());
  seq.words[texts.size() - 1 - static_cast<std::size_t>(it - texts.rbegin())].text = " 24";
  CHECK_FALSE(verify_answer(o, seq));
}

TEST_CASE("synonym augmentation") {
  GrammarBuilder b("synonyms", 2);
  b.role("n", {"3", "4"});
  b.section(Section::prompt).words("Read the problem.");
  b.section(Section::question).words(" The", 2).input("n", 2).words(" problem", 2);
  b.section(Section::answer).words("\nThis problem is easy, problem solved.");
  const auto ds = gen_from_grammar(b.build(), 4, 2, 3);

  const SynonymTable table{{"problem", {"question"}}};
  const auto all = augment_random_synonym(ds, table, 1.0, 5);
  REQUIRE(all.size() == ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto full = all[i].prompt + all[i].question + all[i].answer;
    CHECK(full.find("problem") == std::string::npos);
    CHECK(full.find(" question") != std::string::npos);
    CHECK(all[i].word_labels == to_records(ds[i])[0].word_labels);
    CHECK(all[i].words.size() == ds[i].reference.seq.size());
  }
  const SynonymTable two{{"problem", {"question", "puzzle"}}, {"easy", {"simple"}}};
  CHECK(augment_random_synonym(ds, two, 0.5, 9) == augment_random_synonym(ds, two, 0.5, 9));
  CHECK_THROWS_AS(augment_random_synonym(ds, table, 0.0, 5), Error);
  CHECK_THROWS_AS(augment_random_synonym(ds, {}, 0.5, 5), Error);
  CHECK_THROWS_AS(augment_random_synonym(ds, {{"problem", {"two words"}}}, 0.5, 5), Error);
}

TEST_CASE("shipped synonym table loads") {
  const auto t = load_synonyms(data_path("synonyms.json"));
  CHECK(t.count("farm") == 1);
}

TEST_CASE("records round-trip through line-delimited files") {
  const auto ds = gen_concat_last_letter(small_pool(), 3, 4, 1);
  std::vector<SequenceRecord> records;
  for (const auto& d : ds)
    for (auto& r : to_records(d)) records.push_back(r);
  CHECK(records.size() == 15);
  const std::string path = "test_datasets_roundtrip.jsonl";
  write_jsonl(path, records);
  const auto back = read_jsonl<SequenceRecord>(path);
  CHECK(back == records);
  const auto groups = datasets_from_records(back);
  REQUIRE(groups.size() == 3);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    CHECK(groups[i].reference.seq.word_texts() == ds[i].reference.seq.word_texts());
    CHECK(groups[i].reference.seq.labels == ds[i].reference.seq.labels);
    CHECK(groups[i].replacements.size() == 4);
    CHECK(check_dataset(groups[i]).empty());
    CHECK(groups[i].group_id() == ds[i].group_id());
  }
  std::remove(path.c_str());
}

TEST_CASE("malformed records are rejected") {
  auto r = to_records(gen_concat_last_letter(small_pool(), 1, 2, 1)[0])[0];
  auto bad = r;
  bad.word_labels.pop_back();
  CHECK_THROWS_AS(sequence_from_record(bad), Error);
  bad = r;
  bad.answer += "!";
  CHECK_THROWS_AS(sequence_from_record(bad), Error);
  bad = r;
  bad.word_labels[0] = 2;
  CHECK_THROWS_AS(sequence_from_record(bad), Error);
  CHECK_THROWS_AS(read_jsonl<SequenceRecord>("does-not-exist.jsonl"), Error);
}
