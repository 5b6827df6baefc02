#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dtp/action_space.hpp"
#include "dtp/text.hpp"

namespace dtp {

// One recorded demonstration. Actions are targets for the next control tick:
// the slots of a[t] equal the slots of z[t+1] wherever the rate limit did not
// saturate. Images hold the raw grayscale views per step, concatenated in the
// fixed order (exterior, right wrist, left wrist).
struct EpisodeRecord {
  std::string schema_id;
  std::string task;         // "grasp_cube" | "pour_level"
  std::string expert_mode;  // evaluation-only label, e.g. "left", "right:half"
  int frequency_hz = 5;
  int image_size = 32;
  int views = 3;
  bool success = true;
  InstructionVariants instructions;
  std::vector<UnifiedVector> z;               // proprioception per step
  std::vector<UnifiedVector> a;               // action targets per step
  std::vector<std::vector<uint8_t>> images;   // per step: views * G * G bytes

  int64_t length() const { return static_cast<int64_t>(z.size()); }
  void validate() const;  // throws on inconsistent lengths or image sizes
};

// Single-file container: one JSON header line declaring the payload arrays
// (name, dtype, shape, byte count) followed by the raw little-endian arrays
// in declared order. Round-trips bit-exactly.
void write_episode(const std::string& path, const EpisodeRecord& e);
EpisodeRecord read_episode(const std::string& path);

inline constexpr int kEpisodeFormatVersion = 1;

}  // namespace dtp
