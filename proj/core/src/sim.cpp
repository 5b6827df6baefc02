#include "dtp/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace dtp {

namespace {

using sim::kGraspDist;
using sim::kGraspGrip;
using sim::kGripRate;
using sim::kHoverOffset;
using sim::kLiftY;
using sim::kLink1;
using sim::kLink2;
using sim::kMaxEpisodeLen;
using sim::kMinEpisodeLen;
using sim::kOmegaMax;
using sim::kPourDist;
using sim::kPourRate;
using sim::kPourSiteX;
using sim::kPourSiteY;
using sim::kReleaseGrip;

// pouring requires the holding arm to be nearly still: the largest per-joint
// move this step must stay under this fraction of the rate limit
constexpr double kPourStillFrac = 0.25;
// workspace margins keeping IK away from the stretched/folded singularities
constexpr double kReachMargin = 0.012;

constexpr double kHomeX = 0.30;  // mirrored for the left arm
constexpr double kHomeY = 0.20;

double dist2d(double ax, double ay, double bx, double by) {
  return std::hypot(ax - bx, ay - by);
}

bool reachable(int arm, double x, double y) {
  const double d = dist2d(x, y, base_x(arm), 0.0);
  return d >= (kLink1 - kLink2) + kReachMargin && d <= (kLink1 + kLink2) - kReachMargin;
}

double clamp_step(double cur, double target, double rate, double dt) {
  const double lim = rate * dt;
  double d = target - cur;
  if (d > lim) d = lim;
  if (d < -lim) d = -lim;
  return cur + d;
}

struct ArmTargets {
  double q1, q2, grip;
};

ArmTargets hold_targets(const ArmState& a) { return {a.q1, a.q2, a.grip}; }

// Radially project a waypoint into the reachable annulus. Transient targets
// (e.g. a lift point recomputed above a moving held object) may momentarily
// leave it; projecting keeps the controller pulling back toward feasibility.
void project_reach(int arm, double* wx, double* wy) {
  const double bx = base_x(arm);
  const double d = dist2d(*wx, *wy, bx, 0.0);
  const double lo = (kLink1 - kLink2) + kReachMargin;
  const double hi = (kLink1 + kLink2) - kReachMargin;
  if (d >= lo && d <= hi) return;
  if (d < 1e-12) {  // waypoint on the base: push straight up
    *wx = bx;
    *wy = lo;
    return;
  }
  const double f = (d < lo ? lo : hi) / d;
  *wx = bx + (*wx - bx) * f;
  *wy *= f;
}

// One rate-limited move of the arm toward the IK solution of a waypoint.
ArmTargets toward(const ArmState& a, int arm, double wx, double wy, double grip_target,
                  double dt) {
  project_reach(arm, &wx, &wy);
  double q1d = 0.0, q2d = 0.0;
  if (!arm_ik(arm, wx, wy, &q1d, &q2d))
    throw std::logic_error("projected waypoint out of reach");
  return {clamp_step(a.q1, q1d, kOmegaMax, dt), clamp_step(a.q2, q2d, kOmegaMax, dt),
          clamp_step(a.grip, grip_target, kGripRate, dt)};
}

int acting_arm(Hand mode) {
  if (mode == Hand::right) return 0;
  if (mode == Hand::left) return 1;
  throw std::invalid_argument("expert mode must name a hand");
}

// Shared reach-and-grasp sub-policy: hover above the object, descend along
// its column, close when in range.
ArmTargets grasp_subpolicy(const ArmState& a, int arm, double ox, double oy, double dt) {
  const auto ee = arm_ee(a, arm);
  const double d = dist2d(ee[0], ee[1], ox, oy);
  if (d < 0.02) return toward(a, arm, ox, oy, 0.0, dt);  // close the gripper in place
  if (std::fabs(ee[0] - ox) <= 0.015 && ee[1] >= oy - 0.005)
    return toward(a, arm, ox, oy, 1.0, dt);  // descend
  return toward(a, arm, ox, oy + kHoverOffset, 1.0, dt);
}

}  // namespace

std::string task_name(TaskKind k) {
  return k == TaskKind::grasp_cube ? "grasp_cube" : "pour_level";
}

TaskKind task_from_name(const std::string& s) {
  if (s == "grasp_cube") return TaskKind::grasp_cube;
  if (s == "pour_level") return TaskKind::pour_level;
  throw std::invalid_argument("unknown task: " + s);
}

double base_x(int arm) {
  if (arm != 0 && arm != 1) throw std::invalid_argument("arm index must be 0 or 1");
  return arm == 0 ? sim::kBaseRight : -sim::kBaseRight;
}

std::array<double, 2> arm_elbow(const ArmState& a, int arm) {
  return {base_x(arm) + kLink1 * std::cos(a.q1), kLink1 * std::sin(a.q1)};
}

std::array<double, 2> arm_ee(const ArmState& a, int arm) {
  const auto e = arm_elbow(a, arm);
  return {e[0] + kLink2 * std::cos(a.q1 + a.q2), e[1] + kLink2 * std::sin(a.q1 + a.q2)};
}

bool arm_ik(int arm, double x, double y, double* q1, double* q2) {
  const double dx = x - base_x(arm);
  const double dy = y;
  const double r2 = dx * dx + dy * dy;
  const double c2 = (r2 - kLink1 * kLink1 - kLink2 * kLink2) / (2.0 * kLink1 * kLink2);
  if (c2 < -1.0 || c2 > 1.0) return false;
  // mirror-symmetric elbow branches: right arm bends counterclockwise (elbow
  // above the shoulder-target chord), left arm clockwise
  const double sign = arm == 0 ? 1.0 : -1.0;
  const double e = sign * std::acos(c2);
  const double psi = std::atan2(kLink2 * std::sin(e), kLink1 + kLink2 * std::cos(e));
  // canonical joint range (-pi, pi]; the wrap never moves the end effector
  *q1 = std::remainder(std::atan2(dy, dx) - psi, 2.0 * M_PI);
  *q2 = e;
  return true;
}

bool both_arms_feasible(double x, double y) {
  for (int arm : {0, 1}) {
    if (!reachable(arm, x, y)) return false;
    if (!reachable(arm, x, y + kHoverOffset)) return false;
    if (!reachable(arm, x, kLiftY)) return false;
  }
  return true;
}

WorldState reset(const TaskSpec& task, uint64_t seed) {
  WorldState s;
  for (int arm : {0, 1}) {
    double q1 = 0.0, q2 = 0.0;
    if (!arm_ik(arm, arm == 0 ? kHomeX : -kHomeX, kHomeY, &q1, &q2))
      throw std::logic_error("home pose out of reach");
    s.arms[static_cast<size_t>(arm)] = {q1, q2, 1.0};
  }
  Rng r(mix_seed(seed, 0x9e3779b97f4a7c15ULL));
  if (task.x_lo > task.x_hi) throw std::invalid_argument("empty object placement band");
  s.obj = task.kind == TaskKind::grasp_cube ? ObjectKind::cube : ObjectKind::bottle;
  s.obj_x = r.uniform(task.x_lo, task.x_hi);
  s.obj_y = r.uniform(0.12, 0.18);
  s.held_by = -1;
  s.pour = 0.0;
  return s;
}

WorldState step(const WorldState& s, const RobotSchema& schema, const UnifiedVector& action,
                double dt) {
  const auto need = schema.slot_mask();
  for (int i = 0; i < slots::kTotal; ++i)
    if (need[static_cast<size_t>(i)] && !action.mask[static_cast<size_t>(i)])
      throw std::invalid_argument("action leaves schema slot " + std::to_string(i) + " unmasked");

  WorldState n = s;
  double max_delta[2] = {0.0, 0.0};
  const int arms = schema.arms;
  for (int arm = 0; arm < arms; ++arm) {
    const int jp = arm == 0 ? slots::right_arm_joint_pos : slots::left_arm_joint_pos;
    const int gp = arm == 0 ? slots::right_gripper_pos : slots::left_gripper_pos;
    ArmState& a = n.arms[static_cast<size_t>(arm)];
    const double q1n = clamp_step(a.q1, action.values[static_cast<size_t>(jp)], kOmegaMax, dt);
    const double q2n = clamp_step(a.q2, action.values[static_cast<size_t>(jp) + 1], kOmegaMax, dt);
    max_delta[arm] = std::max(std::fabs(q1n - a.q1), std::fabs(q2n - a.q2));
    a.q1 = q1n;
    a.q2 = q2n;
    a.grip = std::clamp(clamp_step(a.grip, action.values[static_cast<size_t>(gp)], kGripRate, dt),
                        0.0, 1.0);
  }

  if (n.held_by >= 0) {
    const auto ee = arm_ee(n.arms[static_cast<size_t>(n.held_by)], n.held_by);
    n.obj_x = ee[0];
    n.obj_y = ee[1];
  } else {
    for (int arm = 0; arm < arms; ++arm) {
      const auto ee = arm_ee(n.arms[static_cast<size_t>(arm)], arm);
      if (dist2d(ee[0], ee[1], n.obj_x, n.obj_y) < kGraspDist &&
          n.arms[static_cast<size_t>(arm)].grip < kGraspGrip) {
        n.held_by = arm;
        break;
      }
    }
  }
  if (n.held_by >= 0 && n.arms[static_cast<size_t>(n.held_by)].grip > kReleaseGrip)
    n.held_by = -1;

  if (n.held_by >= 0 && n.obj == ObjectKind::bottle &&
      dist2d(n.obj_x, n.obj_y, kPourSiteX, kPourSiteY) < kPourDist &&
      max_delta[n.held_by] <= kPourStillFrac * kOmegaMax * dt)
    n.pour = std::min(1.0, n.pour + kPourRate * dt);

  return n;
}

UnifiedVector proprio(const WorldState& s, const RobotSchema& schema) {
  std::vector<double> native;
  for (int arm = 0; arm < schema.arms; ++arm) {
    const ArmState& a = s.arms[static_cast<size_t>(arm)];
    native.push_back(a.q1);
    native.push_back(a.q2);
    native.push_back(a.grip);
  }
  return embed_state(schema, native);
}

UnifiedVector expert_action(const WorldState& s, const TaskSpec& task, Hand mode,
                            const RobotSchema& schema, double dt) {
  const int arm = acting_arm(mode);
  if (schema.arms == 1 && arm != 0)
    throw std::invalid_argument("single-arm robot has no left hand");
  if (task.kind == TaskKind::pour_level && mode != task.hand)
    throw std::invalid_argument("pour expert must use the commanded hand");
  if (s.held_by != arm && !reachable(arm, s.obj_x, s.obj_y))
    throw std::invalid_argument("object out of reach for the commanded arm");

  ArmTargets t[2] = {hold_targets(s.arms[0]), hold_targets(s.arms[1])};
  const ArmState& act = s.arms[static_cast<size_t>(arm)];
  const auto ee = arm_ee(act, arm);

  if (task.kind == TaskKind::grasp_cube) {
    if (s.held_by == arm) {
      if (s.obj_y < kLiftY - 1e-9) t[arm] = toward(act, arm, s.obj_x, kLiftY, 0.0, dt);
      // else: done, hold position
    } else if (s.held_by >= 0) {
      throw std::invalid_argument("object already held by the other arm");
    } else {
      t[arm] = grasp_subpolicy(act, arm, s.obj_x, s.obj_y, dt);
    }
  } else {
    const double target = level_fraction(task.level);
    if (s.held_by == arm) {
      if (s.pour >= target - 1e-9) {
        // commanded level reached: retreat toward home, still holding
        t[arm] = toward(act, arm, arm == 0 ? kHomeX : -kHomeX, kHomeY, 0.0, dt);
      } else if (dist2d(ee[0], ee[1], kPourSiteX, kPourSiteY) < kPourDist * 0.5) {
        // stand still over the cup; stillness is what makes the bottle pour
      } else {
        t[arm] = toward(act, arm, kPourSiteX, kPourSiteY, 0.0, dt);
      }
    } else if (s.held_by >= 0) {
      throw std::invalid_argument("bottle already held by the other arm");
    } else {
      t[arm] = grasp_subpolicy(act, arm, s.obj_x, s.obj_y, dt);
    }
  }

  UnifiedVector u;
  for (int a = 0; a < schema.arms; ++a) {
    const int jp = a == 0 ? slots::right_arm_joint_pos : slots::left_arm_joint_pos;
    const int gp = a == 0 ? slots::right_gripper_pos : slots::left_gripper_pos;
    u.set(jp, t[a].q1);
    u.set(jp + 1, t[a].q2);
    u.set(gp, t[a].grip);
  }
  return u;
}

bool expert_done(const WorldState& s, const TaskSpec& task, Hand mode) {
  const int arm = acting_arm(mode);
  if (task.kind == TaskKind::grasp_cube)
    return s.held_by == arm && s.obj_y >= kLiftY - 0.005;
  const auto ee = arm_ee(s.arms[static_cast<size_t>(arm)], arm);
  return s.held_by == arm && s.pour >= level_fraction(task.level) - 1e-9 &&
         dist2d(ee[0], ee[1], kPourSiteX, kPourSiteY) > kPourDist + 0.03;
}

std::vector<UnifiedVector> expert_chunk(const WorldState& s, const TaskSpec& task, Hand mode,
                                        const RobotSchema& schema, double dt, int T) {
  std::vector<UnifiedVector> chunk;
  WorldState cur = s;
  for (int t = 0; t < T; ++t) {
    UnifiedVector a = expert_action(cur, task, mode, schema, dt);
    chunk.push_back(a);
    cur = step(cur, schema, a, dt);
  }
  return chunk;
}

EpisodeRecord run_expert_episode(const TaskSpec& task, Hand mode, const RobotSchema& schema,
                                 int frequency_hz, int image_size, uint64_t seed) {
  const double dt = 1.0 / frequency_hz;
  WorldState s = reset(task, seed);
  EpisodeRecord e;
  e.schema_id = schema.id;
  e.task = task_name(task.kind);
  e.expert_mode = task.kind == TaskKind::grasp_cube
                      ? hand_name(mode)
                      : hand_name(mode) + ":" + level_name(task.level);
  e.frequency_hz = frequency_hz;
  e.image_size = image_size;
  e.instructions = task.kind == TaskKind::grasp_cube
                       ? grasp_instructions(Hand::either)
                       : pour_instructions(task.hand, task.level);
  std::vector<uint8_t> img;
  for (int t = 0; t < kMaxEpisodeLen; ++t) {
    const UnifiedVector a = expert_action(s, task, mode, schema, dt);
    e.z.push_back(proprio(s, schema));
    e.a.push_back(a);
    render_views(s, schema, image_size, img);
    e.images.push_back(img);
    s = step(s, schema, a, dt);
    if (t + 1 >= kMinEpisodeLen && expert_done(s, task, mode)) break;
  }
  e.success = expert_done(s, task, mode);
  return e;
}

// ---------------------------------------------------------------------------
// rendering

namespace {

struct Raster {
  int G;
  double x0, y0, x1, y1;
  uint8_t* px;  // G*G, row 0 = top of the window

  void put(int r, int c, uint8_t v) {
    if (r >= 0 && r < G && c >= 0 && c < G) px[r * G + c] = v;
  }
  void point(double x, double y, uint8_t v) {
    const int c = static_cast<int>(std::floor((x - x0) / (x1 - x0) * G));
    const int r = static_cast<int>(std::floor((y1 - y) / (y1 - y0) * G));
    put(r, c, v);
  }
  void rect(double x, double y, int half_w, int half_h, uint8_t v) {
    const int c = static_cast<int>(std::floor((x - x0) / (x1 - x0) * G));
    const int r = static_cast<int>(std::floor((y1 - y) / (y1 - y0) * G));
    for (int dr = -half_h; dr <= half_h; ++dr)
      for (int dc = -half_w; dc <= half_w; ++dc) put(r + dr, c + dc, v);
  }
  void line(double ax, double ay, double bx, double by, uint8_t v) {
    const int n = 2 * G;
    for (int i = 0; i <= n; ++i) {
      const double t = static_cast<double>(i) / n;
      point(ax + (bx - ax) * t, ay + (by - ay) * t, v);
    }
  }
};

constexpr uint8_t kBackground = 40;
constexpr int kGaugePixels = 24;

void draw_scene(Raster& R, const WorldState& s, const RobotSchema& schema, bool with_gauge) {
  std::fill(R.px, R.px + R.G * R.G, kBackground);
  for (int arm = 0; arm < schema.arms; ++arm) {
    const ArmState& a = s.arms[static_cast<size_t>(arm)];
    const auto el = arm_elbow(a, arm);
    const auto ee = arm_ee(a, arm);
    const uint8_t shade = arm == 0 ? 220 : 160;
    R.line(base_x(arm), 0.0, el[0], el[1], shade);
    R.line(el[0], el[1], ee[0], ee[1], shade);
    // end-effector block brightens as the gripper closes
    R.rect(ee[0], ee[1], 1, 1, static_cast<uint8_t>(90 + 110.0 * (1.0 - a.grip)));
  }
  if (s.obj == ObjectKind::bottle) {
    // static cup below the pour site
    R.line(kPourSiteX - 0.025, 0.20, kPourSiteX - 0.025, 0.26, 140);
    R.line(kPourSiteX + 0.025, 0.20, kPourSiteX + 0.025, 0.26, 140);
    R.line(kPourSiteX - 0.025, 0.20, kPourSiteX + 0.025, 0.20, 140);
    R.rect(s.obj_x, s.obj_y, 0, 2, 255);
  } else {
    R.rect(s.obj_x, s.obj_y, 1, 1, 255);
  }
  if (with_gauge && s.obj == ObjectKind::bottle) {
    // fill-level gauge along the right edge: bright pixels from the bottom
    const int lit = static_cast<int>(std::lround(s.pour * kGaugePixels));
    for (int h = 0; h < kGaugePixels; ++h) {
      const uint8_t v = h < lit ? 250 : 20;
      R.put(R.G - 1 - h, R.G - 1, v);
      R.put(R.G - 1 - h, R.G - 2, v);
    }
  }
}

}  // namespace

void render_views(const WorldState& s, const RobotSchema& schema, int G,
                  std::vector<uint8_t>& out) {
  if (G < 8) throw std::invalid_argument("image size too small");
  out.assign(static_cast<size_t>(3) * G * G, kBackground);
  Raster ext{G, -0.5, -0.10, 0.5, 0.40, out.data()};
  draw_scene(ext, s, schema, /*with_gauge=*/true);
  const auto ee_r = arm_ee(s.arms[0], 0);
  Raster wr{G, ee_r[0] - 0.12, ee_r[1] - 0.12, ee_r[0] + 0.12, ee_r[1] + 0.12,
            out.data() + static_cast<size_t>(G) * G};
  draw_scene(wr, s, schema, /*with_gauge=*/false);
  if (schema.arms > 1) {
    const auto ee_l = arm_ee(s.arms[1], 1);
    Raster wl{G, ee_l[0] - 0.12, ee_l[1] - 0.12, ee_l[0] + 0.12, ee_l[1] + 0.12,
              out.data() + static_cast<size_t>(2) * G * G};
    draw_scene(wl, s, schema, /*with_gauge=*/false);
  }
  // single-arm robots keep the left-wrist view at constant background
}

// ---------------------------------------------------------------------------
// dataset generation

DatasetSummary generate_dataset(const DatasetSpec& spec) {
  if (spec.episodes < 1) throw std::invalid_argument("dataset needs at least one episode");
  const RobotSchema schema = schema_by_id(spec.schema_id);
  if (spec.task == TaskKind::pour_level && schema.arms != 2)
    throw std::invalid_argument("pour task requires the dual-arm robot");
  std::filesystem::create_directories(spec.out_dir);

  DatasetSummary sum;
  nlohmann::json eps = nlohmann::json::array();
  for (int i = 0; i < spec.episodes; ++i) {
    Rng rng(mix_seed(spec.seed, static_cast<uint64_t>(i)));
    const int freq = rng.uniform() < 0.5 ? 5 : 10;
    TaskSpec task;
    task.kind = spec.task;
    task.seed = mix_seed(spec.seed, static_cast<uint64_t>(i), 17);
    if (spec.task == TaskKind::pour_level) {
      task.x_lo = -0.12;
      task.x_hi = 0.12;
    } else if (schema.arms == 1) {
      task.x_lo = -0.1;  // keep the far edge reachable by the single right arm
      task.x_hi = 0.2;
    }
    if (!std::isnan(spec.x_lo)) task.x_lo = spec.x_lo;
    if (!std::isnan(spec.x_hi)) task.x_hi = spec.x_hi;
    Hand mode = Hand::right;
    if (spec.task == TaskKind::grasp_cube) {
      task.hand = Hand::either;
      const WorldState probe = reset(task, task.seed);
      if (schema.arms == 1) {
        mode = Hand::right;
      } else if (both_arms_feasible(probe.obj_x, probe.obj_y)) {
        mode = rng.uniform() < 0.5 ? Hand::left : Hand::right;  // the multi-modal regime
      } else {
        mode = probe.obj_x >= 0.0 ? Hand::right : Hand::left;
      }
    } else {
      task.hand = spec.pour_hands[rng.uniform_int(spec.pour_hands.size())];
      task.level = spec.pour_levels[rng.uniform_int(spec.pour_levels.size())];
      mode = task.hand;
    }
    EpisodeRecord e = run_expert_episode(task, mode, schema, freq, spec.image_size, task.seed);
    char name[32];
    std::snprintf(name, sizeof(name), "ep_%05d.bin", i);
    write_episode(spec.out_dir + "/" + name, e);
    sum.files.push_back(name);
    sum.written += 1;
    if (!e.success) sum.failures += 1;
    eps.push_back({{"file", name},
                   {"mode", e.expert_mode},
                   {"frequency_hz", e.frequency_hz},
                   {"length", e.length()},
                   {"success", e.success}});
  }

  nlohmann::json manifest;
  manifest["name"] = spec.name;
  manifest["schema"] = spec.schema_id;
  manifest["task"] = task_name(spec.task);
  manifest["count"] = spec.episodes;
  manifest["seed"] = spec.seed;
  manifest["image_size"] = spec.image_size;
  manifest["episodes"] = eps;
  std::ofstream mf(spec.out_dir + "/manifest.json", std::ios::binary | std::ios::trunc);
  if (!mf) throw std::runtime_error("cannot write manifest in " + spec.out_dir);
  mf << manifest.dump(2) << "\n";
  return sum;
}

}  // namespace dtp
