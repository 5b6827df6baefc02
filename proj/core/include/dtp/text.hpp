#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace dtp {

// Deterministic tokenization: lowercase, split on whitespace runs.
std::vector<std::string> tokenize(const std::string& text);

// Word-level vocabulary. Id 0 is always the pad token.
struct Vocabulary {
  std::vector<std::string> words;
  std::unordered_map<std::string, int> index;

  static Vocabulary from_words(const std::vector<std::string>& words);
  int size() const { return static_cast<int>(words.size()); }
  int id(const std::string& word) const;  // throws on unknown word
  std::vector<int> encode(const std::string& text) const;
  std::string to_json() const;
  static Vocabulary from_json(const std::string& text);
};

inline constexpr int kPadId = 0;
inline constexpr const char* kPadWord = "<pad>";

// The three instruction classes stored with every episode: the original
// phrasing, a list of expanded paraphrases, and a terse simplified form.
struct InstructionVariants {
  std::string original;
  std::vector<std::string> expanded;
  std::string simplified;
};

enum class Hand { left, right, either };
enum class Level { one_third, half, two_thirds, full };

std::string hand_name(Hand h);            // "left" / "right" / "either"
Hand hand_from_name(const std::string&);  // throws on unknown
std::string level_name(Level v);          // "one_third" / "half" / ...
Level level_from_name(const std::string&);
double level_fraction(Level v);  // 1/3, 1/2, 2/3, 1
std::string level_words(Level v);  // "one third", "half", "two thirds", "completely"

InstructionVariants grasp_instructions(Hand h);
InstructionVariants pour_instructions(Hand h, Level v);

// Union of every word reachable from the instruction templates, sorted, with
// the pad token at id 0.
Vocabulary builtin_vocabulary();

}  // namespace dtp
