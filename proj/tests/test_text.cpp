#include <set>

#include "doctest.h"
#include "dtp/text.hpp"

using namespace dtp;

TEST_CASE("tokenize lowercases and splits on whitespace runs") {
  CHECK(tokenize("Grasp  the\tCube") == std::vector<std::string>{"grasp", "the", "cube"});
  CHECK(tokenize("  ") == std::vector<std::string>{});
  CHECK(tokenize("one") == std::vector<std::string>{"one"});
  CHECK(tokenize(" A b\nC ") == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("vocabulary lookups and validation") {
  auto v = Vocabulary::from_words({"<pad>", "grasp", "cube"});
  CHECK(v.id("<pad>") == kPadId);
  CHECK(v.id("cube") == 2);
  CHECK(v.encode("Grasp CUBE") == std::vector<int>{1, 2});
  CHECK_THROWS(v.id("bottle"));
  CHECK_THROWS(Vocabulary::from_words({"grasp", "cube"}));           // no pad at 0
  CHECK_THROWS(Vocabulary::from_words({"<pad>", "cube", "cube"}));   // duplicate
}

TEST_CASE("vocabulary JSON round trip") {
  auto v = builtin_vocabulary();
  auto w = Vocabulary::from_json(v.to_json());
  REQUIRE(w.words == v.words);
  CHECK(w.id("cube") == v.id("cube"));
}

TEST_CASE("builtin vocabulary covers every instruction template") {
  auto v = builtin_vocabulary();
  auto covered = [&](const InstructionVariants& iv) {
    CHECK(!v.encode(iv.original).empty());
    REQUIRE(iv.expanded.size() >= 3);
    for (const auto& s : iv.expanded) CHECK(!v.encode(s).empty());
    CHECK(!v.encode(iv.simplified).empty());
  };
  for (Hand h : {Hand::left, Hand::right, Hand::either}) covered(grasp_instructions(h));
  for (Hand h : {Hand::left, Hand::right})
    for (Level lv : {Level::one_third, Level::half, Level::two_thirds, Level::full})
      covered(pour_instructions(h, lv));
  CHECK(v.words[0] == std::string(kPadWord));
}

TEST_CASE("instruction templates mention the commanded hand and amount") {
  auto iv = pour_instructions(Hand::left, Level::two_thirds);
  CHECK(iv.original.find("left") != std::string::npos);
  CHECK(iv.original.find("two thirds") != std::string::npos);
  CHECK(iv.simplified == "left pour two thirds");
  CHECK_THROWS(pour_instructions(Hand::either, Level::half));
  auto gv = grasp_instructions(Hand::either);
  CHECK(gv.original == "grasp the cube");
}

TEST_CASE("level fractions and name round trips") {
  CHECK(level_fraction(Level::one_third) == doctest::Approx(1.0 / 3.0));
  CHECK(level_fraction(Level::half) == 0.5);
  CHECK(level_fraction(Level::two_thirds) == doctest::Approx(2.0 / 3.0));
  CHECK(level_fraction(Level::full) == 1.0);
  for (Level lv : {Level::one_third, Level::half, Level::two_thirds, Level::full})
    CHECK(level_from_name(level_name(lv)) == lv);
  for (Hand h : {Hand::left, Hand::right, Hand::either})
    CHECK(hand_from_name(hand_name(h)) == h);
  CHECK_THROWS(level_from_name("threequarters"));
  CHECK_THROWS(hand_from_name("middle"));
}
