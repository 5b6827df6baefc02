#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dtp/action_space.hpp"
#include "dtp/episode.hpp"
#include "dtp/rng.hpp"
#include "dtp/text.hpp"

namespace dtp {

// Planar workspace: two 2-link arms based on the x-axis reaching into the
// upper half-plane. All lengths in meters, angles in radians, gripper opening
// stored as a fraction of full travel in [0, 1].
namespace sim {
inline constexpr double kLink1 = 0.25;
inline constexpr double kLink2 = 0.20;
inline constexpr double kBaseRight = 0.22;  // bases at (+-kBaseRight, 0)
inline constexpr double kOmegaMax = 2.0;    // joint rate limit, rad/s
inline constexpr double kGripRate = 2.0;    // gripper rate limit, fraction/s
inline constexpr double kGraspDist = 0.035;
inline constexpr double kGraspGrip = 0.375;    // grasp engages below this opening
inline constexpr double kReleaseGrip = 0.625;  // held object drops above this opening
inline constexpr double kPourSiteX = 0.0;
inline constexpr double kPourSiteY = 0.28;
inline constexpr double kPourDist = 0.05;
inline constexpr double kPourRate = 1.0 / 2.4;  // level fraction per second of pouring
inline constexpr double kHoverOffset = 0.05;    // approach point above the object
inline constexpr double kLiftY = 0.22;          // carry height that completes a grasp
inline constexpr int kMinEpisodeLen = 64;
inline constexpr int kMaxEpisodeLen = 128;
}  // namespace sim

enum class TaskKind { grasp_cube, pour_level };
enum class ObjectKind { cube, bottle };

std::string task_name(TaskKind k);
TaskKind task_from_name(const std::string& s);

struct TaskSpec {
  TaskKind kind = TaskKind::grasp_cube;
  Hand hand = Hand::either;    // pour: commanded hand. grasp: always either.
  Level level = Level::half;   // pour only
  uint64_t seed = 0;
  // object placement band; y is always drawn from [0.12, 0.18]
  double x_lo = -0.2;
  double x_hi = 0.2;
};

struct ArmState {
  double q1 = 0.0;
  double q2 = 0.0;
  double grip = 1.0;  // 1 open, 0 closed
};

struct WorldState {
  std::array<ArmState, 2> arms;  // index 0 = right arm, 1 = left arm
  double obj_x = 0.0;
  double obj_y = 0.0;
  ObjectKind obj = ObjectKind::cube;
  int held_by = -1;  // -1 free, else holding arm index
  double pour = 0.0;  // monotone within an episode
};

double base_x(int arm);
std::array<double, 2> arm_ee(const ArmState& a, int arm);
std::array<double, 2> arm_elbow(const ArmState& a, int arm);
// Closed-form 2-link inverse kinematics with a fixed, mirror-symmetric elbow
// branch per arm. Returns false when (x, y) is outside the annular workspace.
bool arm_ik(int arm, double x, double y, double* q1, double* q2);
// True when every waypoint of a grasp at (x, y) is reachable by both arms —
// the multi-modal regime.
bool both_arms_feasible(double x, double y);

WorldState reset(const TaskSpec& task, uint64_t seed);
// Applies rate-limited joint/gripper targets from the unified action, then
// fires grasp / release / pour events. Throws when the action leaves any of
// the schema's slots unmasked.
WorldState step(const WorldState& s, const RobotSchema& schema, const UnifiedVector& action,
                double dt);

UnifiedVector proprio(const WorldState& s, const RobotSchema& schema);

// Renders (exterior, right wrist, left wrist) into out (3*G*G bytes,
// view-major, row 0 = top). Single-arm schemas get a constant-background
// left-wrist view. The exterior view carries a fill-level gauge column on
// pour scenes so the commanded amount is visually observable.
void render_views(const WorldState& s, const RobotSchema& schema, int G,
                  std::vector<uint8_t>& out);

// Stateless scripted expert: derives its phase from the state alone, emits
// rate-limited targets (so recorded actions equal the next proprioception
// wherever the limiter does not saturate). mode picks the acting hand; for
// pour tasks it must equal task.hand. Throws on an infeasible mode.
UnifiedVector expert_action(const WorldState& s, const TaskSpec& task, Hand mode,
                            const RobotSchema& schema, double dt);
bool expert_done(const WorldState& s, const TaskSpec& task, Hand mode);
// Rolls the expert forward T steps from s and returns the action sequence.
std::vector<UnifiedVector> expert_chunk(const WorldState& s, const TaskSpec& task, Hand mode,
                                        const RobotSchema& schema, double dt, int T);

// Runs one full expert episode (horizon 64..128 steps, hold-at-end padding).
EpisodeRecord run_expert_episode(const TaskSpec& task, Hand mode, const RobotSchema& schema,
                                 int frequency_hz, int image_size, uint64_t seed);

struct DatasetSpec {
  std::string out_dir;
  std::string name;
  std::string schema_id = "planar_dual_v1";
  TaskKind task = TaskKind::grasp_cube;
  int episodes = 8;
  uint64_t seed = 0;
  int image_size = 32;
  // optional object-placement override; NaN keeps the task/schema default
  double x_lo = std::numeric_limits<double>::quiet_NaN();
  double x_hi = std::numeric_limits<double>::quiet_NaN();
  // pour task mix; two_thirds is deliberately absent from the default so it
  // can serve as the held-out combination at evaluation time
  std::vector<Level> pour_levels = {Level::one_third, Level::half, Level::full};
  std::vector<Hand> pour_hands = {Hand::left, Hand::right};
};

struct DatasetSummary {
  int written = 0;
  int failures = 0;
  std::vector<std::string> files;
};

// Writes manifest.json plus one episode file per rollout; fully determined by
// (spec.seed, spec).
DatasetSummary generate_dataset(const DatasetSpec& spec);

}  // namespace dtp
