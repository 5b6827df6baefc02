#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace dtp {

// Fixed physically-interpretable layout of the 128-slot unified action/state
// vector. Single-arm robots map onto the right-arm block. Each block reserves
// room for the largest supported robot; a robot with d values for a quantity
// fills the first d slots of that quantity's block.
namespace slots {
inline constexpr int kTotal = 128;

inline constexpr int right_arm_joint_pos = 0;    // 10
inline constexpr int right_gripper_pos = 10;     // 5
inline constexpr int right_arm_joint_vel = 15;   // 10
inline constexpr int right_gripper_vel = 25;     // 5
inline constexpr int right_eef_pos = 30;         // 3
inline constexpr int right_eef_rot6d = 33;       // 6
inline constexpr int right_eef_lin_vel = 39;     // 3
inline constexpr int right_eef_ang_vel = 42;     // 3
// 45..49 reserved
inline constexpr int left_arm_joint_pos = 50;    // 10
inline constexpr int left_gripper_pos = 60;      // 5
inline constexpr int left_arm_joint_vel = 65;    // 10
inline constexpr int left_gripper_vel = 75;      // 5
inline constexpr int left_eef_pos = 80;          // 3
inline constexpr int left_eef_rot6d = 83;        // 6
inline constexpr int left_eef_lin_vel = 89;      // 3
inline constexpr int left_eef_ang_vel = 92;      // 3
// 95..99 reserved
inline constexpr int base_lin_vel = 100;         // 2
inline constexpr int base_ang_vel = 102;         // 1
// 103..127 reserved
}  // namespace slots

// Value/mask pair over the 128 unified slots. Invariant: values[i] == 0.0
// exactly wherever mask[i] == 0.
struct UnifiedVector {
  std::array<double, slots::kTotal> values{};
  std::array<uint8_t, slots::kTotal> mask{};

  void set(int slot, double v) {
    values[static_cast<size_t>(slot)] = v;
    mask[static_cast<size_t>(slot)] = 1;
  }
  int popcount() const {
    int n = 0;
    for (uint8_t m : mask) n += m;
    return n;
  }
};

// One named quantity of a robot mapped to a contiguous slot range.
struct FieldMapping {
  std::string name;
  int start = 0;
  int len = 0;
};

// Mapping between a robot's native vector (fields concatenated in order) and
// the unified slots. Validation rejects out-of-range and overlapping fields.
struct RobotSchema {
  std::string id;
  int arms = 1;
  std::vector<FieldMapping> fields;

  int native_dim() const;
  void validate() const;
  std::array<uint8_t, slots::kTotal> slot_mask() const;
  std::string to_json() const;
  static RobotSchema from_json(const std::string& text);
};

// Built-in schemas for the planar robots: 2 joints + 1 gripper per arm.
RobotSchema planar_dual_schema();
RobotSchema planar_single_schema();
RobotSchema schema_by_id(const std::string& id);

UnifiedVector embed_state(const RobotSchema& s, const std::vector<double>& native);
std::vector<double> extract_state(const RobotSchema& s, const UnifiedVector& u);

// [values || mask-as-float], length 256.
std::array<double, 2 * slots::kTotal> pack_with_indicator(const UnifiedVector& u);

// First two columns of a rotation matrix (column-major): [R00,R10,R20,R01,R11,R21].
std::array<double, 6> rotation_to_6d(const std::array<double, 9>& row_major_R);
// Gram-Schmidt recovery; throws std::invalid_argument when a column norm or
// the residual after projection falls below 1e-9.
std::array<double, 9> sixd_to_rotation(const std::array<double, 6>& r);

}  // namespace dtp
