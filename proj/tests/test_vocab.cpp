#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <stdexcept>
#include <string>
#include <vector>

#include "mqa/vocab.hpp"
#include "support/test_util.hpp"

using namespace mqa;

TEST_CASE("reserved ids and tokens are fixed") {
  const Vocabulary v = Vocabulary::build({}, 1);
  CHECK(v.size() == 3);
  CHECK(Vocabulary::kBoaId == 0);
  CHECK(Vocabulary::kEoaId == 1);
  CHECK(Vocabulary::kOovId == 2);
  CHECK(v.token(0) == kBoaToken);
  CHECK(v.token(1) == kEoaToken);
  CHECK(v.token(2) == kOovToken);
}

TEST_CASE("build counts frequencies and prunes below min_count") {
  const Vocabulary v = Vocabulary::build({{"a", "b", "a"}}, 2);
  CHECK(v.size() == 4);
  CHECK(v.contains("a"));
  CHECK_FALSE(v.contains("b"));
  CHECK(v.lookup("a") == 3);
}

TEST_CASE("ids are assigned by descending frequency then lexicographically") {
  // freq: common=3, amid=2, zmid=2, rare=1
  const Vocabulary v = Vocabulary::build(
      {{"common", "amid", "zmid"}, {"common", "zmid", "amid"}, {"common", "rare"}}, 1);
  CHECK(v.size() == 7);
  CHECK(v.lookup("common") == 3);
  CHECK(v.lookup("amid") == 4);
  CHECK(v.lookup("zmid") == 5);
  CHECK(v.lookup("rare") == 6);
}

TEST_CASE("identical corpora build identical vocabularies") {
  const std::vector<TokenSequence> corpus = {{"x", "y"}, {"y", "z", "z"}};
  const Vocabulary a = Vocabulary::build(corpus, 1);
  const Vocabulary b = Vocabulary::build(corpus, 1);
  CHECK(a.size() == b.size());
  for (std::size_t id = 0; id < a.size(); ++id) {
    CHECK(a.token(static_cast<int>(id)) == b.token(static_cast<int>(id)));
  }
}

TEST_CASE("encode maps unknown tokens to the OOV id and preserves length") {
  const Vocabulary v = Vocabulary::build({{"cat", "sat"}}, 1);
  const std::vector<int> ids = v.encode({"cat", "zzz_unseen", "sat"});
  REQUIRE(ids.size() == 3);
  CHECK(ids[0] == v.lookup("cat"));
  CHECK(ids[1] == Vocabulary::kOovId);
  CHECK(ids[2] == v.lookup("sat"));
}

TEST_CASE("decode inverts encode on in-vocabulary sequences") {
  const Vocabulary v = Vocabulary::build({{"red", "green", "blue"}}, 1);
  const TokenSequence s = {"blue", "red", "green", "red"};
  CHECK(v.decode(v.encode(s)) == s);
  CHECK(v.decode({Vocabulary::kBoaId, Vocabulary::kEoaId}) == TokenSequence{kBoaToken, kEoaToken});
}

TEST_CASE("decode rejects out-of-range ids naming the offender") {
  const Vocabulary v = Vocabulary::build({{"one"}}, 1);
  CHECK(v.size() == 4);
  CHECK_THROWS_AS(v.token(4), std::out_of_range);
  CHECK_THROWS_AS(v.decode({0, 4}), std::out_of_range);
  try {
    v.decode({17});
  } catch (const std::out_of_range& e) {
    CHECK(std::string(e.what()).find("17") != std::string::npos);
  }
}

TEST_CASE("every id emitted by encode is below the vocabulary size") {
  const Vocabulary v = Vocabulary::build({{"p", "q", "q"}, {"r"}}, 2);
  for (int id : v.encode({"p", "q", "r", "nope"})) {
    CHECK(id >= 0);
    CHECK(static_cast<std::size_t>(id) < v.size());
  }
}

TEST_CASE("save and load round-trip bit-exactly") {
  const Vocabulary v = Vocabulary::build({{"how", "many", "how"}, {"where"}}, 1);
  testutil::TempDir tmp;
  const auto path = tmp / "vocab.txt";
  v.save(path);
  const Vocabulary loaded = Vocabulary::load(path);
  CHECK(loaded.size() == v.size());
  for (std::size_t id = 0; id < v.size(); ++id) {
    CHECK(loaded.token(static_cast<int>(id)) == v.token(static_cast<int>(id)));
  }
  // first three lines are the special tokens, line number == id
  const std::string text = testutil::read_file_bytes(path);
  const std::string expect_prefix =
      std::string(kBoaToken) + "\n" + std::string(kEoaToken) + "\n" + std::string(kOovToken) + "\n";
  CHECK(text.rfind(expect_prefix, 0) == 0);
}
