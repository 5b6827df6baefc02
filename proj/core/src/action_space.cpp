#include "dtp/action_space.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace dtp {

int RobotSchema::native_dim() const {
  int n = 0;
  for (const FieldMapping& f : fields) n += f.len;
  return n;
}

void RobotSchema::validate() const {
  if (id.empty()) throw std::invalid_argument("schema id must be non-empty");
  if (arms != 1 && arms != 2) throw std::invalid_argument("schema arms must be 1 or 2");
  std::array<uint8_t, slots::kTotal> taken{};
  for (const FieldMapping& f : fields) {
    if (f.len <= 0 || f.start < 0 || f.start + f.len > slots::kTotal)
      throw std::invalid_argument("field '" + f.name + "' maps outside the 128 slots");
    for (int i = f.start; i < f.start + f.len; ++i) {
      if (taken[static_cast<size_t>(i)])
        throw std::invalid_argument("field '" + f.name + "' overlaps slot " + std::to_string(i));
      taken[static_cast<size_t>(i)] = 1;
    }
  }
}

std::array<uint8_t, slots::kTotal> RobotSchema::slot_mask() const {
  std::array<uint8_t, slots::kTotal> m{};
  for (const FieldMapping& f : fields)
    for (int i = f.start; i < f.start + f.len; ++i) m[static_cast<size_t>(i)] = 1;
  return m;
}

std::string RobotSchema::to_json() const {
  nlohmann::json j;
  j["id"] = id;
  j["arms"] = arms;
  j["fields"] = nlohmann::json::array();
  for (const FieldMapping& f : fields)
    j["fields"].push_back({{"name", f.name}, {"start", f.start}, {"len", f.len}});
  return j.dump();
}

RobotSchema RobotSchema::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  RobotSchema s;
  s.id = j.at("id").get<std::string>();
  s.arms = j.at("arms").get<int>();
  for (const auto& f : j.at("fields"))
    s.fields.push_back({f.at("name").get<std::string>(), f.at("start").get<int>(),
                        f.at("len").get<int>()});
  s.validate();
  return s;
}

RobotSchema planar_dual_schema() {
  RobotSchema s;
  s.id = "planar_dual_v1";
  s.arms = 2;
  s.fields = {
      {"right_arm_joint_pos", slots::right_arm_joint_pos, 2},
      {"right_gripper_pos", slots::right_gripper_pos, 1},
      {"left_arm_joint_pos", slots::left_arm_joint_pos, 2},
      {"left_gripper_pos", slots::left_gripper_pos, 1},
  };
  s.validate();
  return s;
}

RobotSchema planar_single_schema() {
  RobotSchema s;
  s.id = "planar_single_v1";
  s.arms = 1;
  s.fields = {
      {"right_arm_joint_pos", slots::right_arm_joint_pos, 2},
      {"right_gripper_pos", slots::right_gripper_pos, 1},
  };
  s.validate();
  return s;
}

RobotSchema schema_by_id(const std::string& id) {
  if (id == "planar_dual_v1") return planar_dual_schema();
  if (id == "planar_single_v1") return planar_single_schema();
  throw std::invalid_argument("unknown schema id: " + id);
}

UnifiedVector embed_state(const RobotSchema& s, const std::vector<double>& native) {
  if (static_cast<int>(native.size()) != s.native_dim())
    throw std::invalid_argument("native vector length " + std::to_string(native.size()) +
                                " does not match schema dim " + std::to_string(s.native_dim()));
  UnifiedVector u;
  size_t k = 0;
  for (const FieldMapping& f : s.fields)
    for (int i = 0; i < f.len; ++i) u.set(f.start + i, native[k++]);
  return u;
}

std::vector<double> extract_state(const RobotSchema& s, const UnifiedVector& u) {
  std::vector<double> native;
  native.reserve(static_cast<size_t>(s.native_dim()));
  for (const FieldMapping& f : s.fields)
    for (int i = 0; i < f.len; ++i) native.push_back(u.values[static_cast<size_t>(f.start + i)]);
  return native;
}

std::array<double, 2 * slots::kTotal> pack_with_indicator(const UnifiedVector& u) {
  std::array<double, 2 * slots::kTotal> p{};
  for (int i = 0; i < slots::kTotal; ++i) {
    p[static_cast<size_t>(i)] = u.values[static_cast<size_t>(i)];
    p[static_cast<size_t>(slots::kTotal + i)] = u.mask[static_cast<size_t>(i)] ? 1.0 : 0.0;
  }
  return p;
}

std::array<double, 6> rotation_to_6d(const std::array<double, 9>& R) {
  // Row-major R; take columns 0 and 1.
  return {R[0], R[3], R[6], R[1], R[4], R[7]};
}

namespace {
double norm3(const double* v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }
}  // namespace

std::array<double, 9> sixd_to_rotation(const std::array<double, 6>& r) {
  constexpr double kTol = 1e-9;
  const double* v1 = r.data();
  const double* v2 = r.data() + 3;
  const double n1 = norm3(v1);
  if (n1 < kTol) throw std::invalid_argument("6d rotation: first column is degenerate");
  double b1[3] = {v1[0] / n1, v1[1] / n1, v1[2] / n1};
  const double dot = b1[0] * v2[0] + b1[1] * v2[1] + b1[2] * v2[2];
  double u2[3] = {v2[0] - dot * b1[0], v2[1] - dot * b1[1], v2[2] - dot * b1[2]};
  const double n2 = norm3(u2);
  if (n2 < kTol) throw std::invalid_argument("6d rotation: columns are colinear");
  double b2[3] = {u2[0] / n2, u2[1] / n2, u2[2] / n2};
  double b3[3] = {b1[1] * b2[2] - b1[2] * b2[1], b1[2] * b2[0] - b1[0] * b2[2],
                  b1[0] * b2[1] - b1[1] * b2[0]};
  return {b1[0], b2[0], b3[0], b1[1], b2[1], b3[1], b1[2], b2[2], b3[2]};
}

}  // namespace dtp
