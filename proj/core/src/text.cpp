#include "dtp/text.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace dtp {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words) {
  Vocabulary v;
  v.words = words;
  for (size_t i = 0; i < words.size(); ++i) {
    if (!v.index.emplace(words[i], static_cast<int>(i)).second)
      throw std::invalid_argument("vocabulary has duplicate word: " + words[i]);
  }
  if (v.words.empty() || v.words[0] != kPadWord)
    throw std::invalid_argument("vocabulary word 0 must be the pad token");
  return v;
}

int Vocabulary::id(const std::string& word) const {
  auto it = index.find(word);
  if (it == index.end()) throw std::invalid_argument("word not in vocabulary: " + word);
  return it->second;
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
  std::vector<int> ids;
  for (const std::string& w : tokenize(text)) ids.push_back(id(w));
  return ids;
}

std::string Vocabulary::to_json() const {
  nlohmann::json j = words;
  return j.dump();
}

Vocabulary Vocabulary::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  return from_words(j.get<std::vector<std::string>>());
}

std::string hand_name(Hand h) {
  switch (h) {
    case Hand::left: return "left";
    case Hand::right: return "right";
    case Hand::either: return "either";
  }
  throw std::invalid_argument("bad hand");
}

Hand hand_from_name(const std::string& s) {
  if (s == "left") return Hand::left;
  if (s == "right") return Hand::right;
  if (s == "either") return Hand::either;
  throw std::invalid_argument("unknown hand: " + s);
}

std::string level_name(Level v) {
  switch (v) {
    case Level::one_third: return "one_third";
    case Level::half: return "half";
    case Level::two_thirds: return "two_thirds";
    case Level::full: return "full";
  }
  throw std::invalid_argument("bad level");
}

Level level_from_name(const std::string& s) {
  if (s == "one_third") return Level::one_third;
  if (s == "half") return Level::half;
  if (s == "two_thirds") return Level::two_thirds;
  if (s == "full") return Level::full;
  throw std::invalid_argument("unknown level: " + s);
}

double level_fraction(Level v) {
  switch (v) {
    case Level::one_third: return 1.0 / 3.0;
    case Level::half: return 0.5;
    case Level::two_thirds: return 2.0 / 3.0;
    case Level::full: return 1.0;
  }
  throw std::invalid_argument("bad level");
}

std::string level_words(Level v) {
  switch (v) {
    case Level::one_third: return "one third";
    case Level::half: return "half";
    case Level::two_thirds: return "two thirds";
    case Level::full: return "completely";
  }
  throw std::invalid_argument("bad level");
}

InstructionVariants grasp_instructions(Hand h) {
  InstructionVariants iv;
  const std::string arm = hand_name(h) + " arm";
  if (h == Hand::either) {
    iv.original = "grasp the cube";
    iv.expanded = {"pick up the cube", "grab the cube from the table", "take hold of the cube",
                   "lift the cube"};
    iv.simplified = "grasp cube";
  } else {
    iv.original = "grasp the cube with the " + arm;
    iv.expanded = {"pick up the cube using the " + arm, "use the " + arm + " to grab the cube",
                   "take hold of the cube with the " + arm, "lift the cube with the " + arm};
    iv.simplified = hand_name(h) + " grasp cube";
  }
  return iv;
}

InstructionVariants pour_instructions(Hand h, Level v) {
  if (h == Hand::either) throw std::invalid_argument("pour instruction needs a specific hand");
  InstructionVariants iv;
  const std::string hand = hand_name(h) + " hand";
  const std::string amount = level_words(v);
  iv.original = "pour water into the cup with the " + hand + " until it is " + amount + " full";
  iv.expanded = {"use the " + hand + " to fill the cup until it is " + amount + " full",
                 "fill the cup to " + amount + " full pouring with the " + hand,
                 "holding the bottle in the " + hand + " pour until the cup is " + amount +
                     " full",
                 "pour from the bottle with the " + hand + " and stop when the cup is " + amount +
                     " full"};
  iv.simplified = hand_name(h) + " pour " + amount;
  return iv;
}

Vocabulary builtin_vocabulary() {
  std::set<std::string> seen;
  auto absorb = [&](const InstructionVariants& iv) {
    for (const std::string& w : tokenize(iv.original)) seen.insert(w);
    for (const std::string& s : iv.expanded)
      for (const std::string& w : tokenize(s)) seen.insert(w);
    for (const std::string& w : tokenize(iv.simplified)) seen.insert(w);
  };
  for (Hand h : {Hand::left, Hand::right, Hand::either}) absorb(grasp_instructions(h));
  for (Hand h : {Hand::left, Hand::right})
    for (Level v : {Level::one_third, Level::half, Level::two_thirds, Level::full})
      absorb(pour_instructions(h, v));
  std::vector<std::string> words = {kPadWord};
  words.insert(words.end(), seen.begin(), seen.end());
  return Vocabulary::from_words(words);
}

}  // namespace dtp
