#pragma once

#include <deque>
#include <string>
#include <vector>

#include "dtp/sim.hpp"
#include "dtp/train.hpp"

namespace dtp {

// How a trained denoiser is driven in the simulator.
struct PolicyConfig {
  int sample_steps = 5;       // fast-sampler denoiser evaluations per chunk
  int execute_steps = 0;      // chunk prefix executed before replanning; 0 = t_a/2
  double frequency_hz = 10.0;
  std::string instruction;    // natural-language command; empty = no instruction
};

// Closed-loop chunk policy: renders observations, samples an action chunk,
// executes a prefix, replans. Keeps the image history the training windows
// had (t_img frames, duplicated at episode start).
class Policy {
 public:
  Policy(ParameterSet& ps, const ModelConfig& cfg, RobotSchema schema, PolicyConfig pc);

  void reset_history(const WorldState& s);
  Tensor sample_chunk(const WorldState& s, Rng& rng);  // [t_a,128]
  // steps the simulator through the first n rows of the chunk
  WorldState execute(const WorldState& s, const Tensor& chunk, int n);
  std::vector<WorldState> rollout(const WorldState& s0, int horizon, Rng& rng);

  double dt() const { return 1.0 / pc_.frequency_hz; }
  const RobotSchema& schema() const { return schema_; }

 private:
  std::vector<double> render_frames(const WorldState& s) const;
  WorldState step_once(const WorldState& s, const Tensor& chunk, int row);

  ParameterSet& ps_;
  ModelConfig cfg_;
  RobotSchema schema_;
  PolicyConfig pc_;
  Vocabulary vocab_;
  std::vector<int> instruction_ids_;
  std::array<uint8_t, 128> avail_{};
  std::deque<std::vector<double>> history_;  // one past frame set per executed step
};

// --- multi-modality probe (GraspCube, both arms feasible) ---

struct MultimodalityConfig {
  int trials = 50;            // chunk samples classified against the expert modes
  int rollout_trials = 8;     // full closed-loop episodes
  int horizon = 128;
  double delta_valid = 0.15;  // RMS rad: sample counts as on-mode below this
  double delta_mode = 0.3;    // required expert-mode separation for a trial to count
  double x_lo = -0.15;
  double x_hi = 0.15;
  uint64_t seed = 0;
  PolicyConfig policy;
};

struct MultimodalityReport {
  int trials = 0;
  int valid = 0;        // within delta_valid of the nearest expert mode
  int to_right = 0;     // nearest mode = right arm
  int to_left = 0;
  int mean_region = 0;  // closer to the infeasible mode average than to either mode
  int rollout_trials = 0;
  int rollout_success = 0;
  double valid_rate() const { return trials ? static_cast<double>(valid) / trials : 0.0; }
  double mean_rate() const { return trials ? static_cast<double>(mean_region) / trials : 0.0; }
  double right_share() const {
    const int n = to_right + to_left;
    return n ? static_cast<double>(to_right) / n : 0.0;
  }
  std::string to_json() const;
};

// RMS distances (radians, over the schema's joint slots and the whole chunk)
// from a sampled chunk to each expert mode and to their infeasible average.
struct ModeClassification {
  double d_right = 0.0;
  double d_left = 0.0;
  double d_mean = 0.0;
  double separation = 0.0;  // distance between the two expert modes
};
ModeClassification classify_chunk(const Tensor& chunk,
                                  const std::vector<UnifiedVector>& right_mode,
                                  const std::vector<UnifiedVector>& left_mode,
                                  const std::array<uint8_t, 128>& avail);

// Samples chunks at symmetric GraspCube states, classifies each against the
// two expert-mode chunks by RMS joint-space distance, and rolls the policy
// out for the success rate. States whose expert modes are closer than
// delta_mode are re-drawn (no multi-modality to measure there).
MultimodalityReport eval_multimodality(ParameterSet& ps, const ModelConfig& cfg,
                                       const MultimodalityConfig& ec);

// --- instruction following (PourLevel) ---

struct InstructionConfig {
  int trials_per_combo = 8;
  int horizon = 150;
  double x_lo = -0.12;
  double x_hi = 0.12;
  uint64_t seed = 0;
  PolicyConfig policy;  // instruction text is overwritten per combination
};

struct ComboReport {
  Hand hand = Hand::right;
  Level level = Level::half;
  bool held_out = false;  // combination absent from the training mix
  int trials = 0;
  int correct_hand = 0;       // commanded arm grasped; the other never did
  int completed = 0;          // full task predicate at episode end
  double mean_level_error = 0.0;
  double max_offhand_motion = 0.0;  // worst other-arm joint drift, rad
};

struct InstructionReport {
  std::vector<ComboReport> combos;
  double seen_correct_hand_rate() const;
  double seen_mean_level_error() const;
  std::string to_json() const;
};

// Rolls the fine-tuned policy with every (hand, level) command: the training
// levels plus the held-out two-thirds level, reported separately.
InstructionReport eval_instruction_following(ParameterSet& ps, const ModelConfig& cfg,
                                             const InstructionConfig& ec);

// --- ablation runner ---

// Derives the named variant from a base run configuration:
//   regress            direct-regression objective (null chunk/timestep)
//   small              quarter-width trunk
//   scratch            drop the warm-start checkpoint
//   no_qknorm_rmsnorm  LayerNorm + unnormalized attention
//   no_mlp_decoder     single linear readout
//   no_aci             joint image+text cross-attention at every layer
TrainConfig apply_ablation(const std::string& name, const TrainConfig& base);

struct AblationOutcome {
  std::string name;
  TrainResult base;
  TrainResult variant;
  std::string csv_path;  // side-by-side per-step comparison
};

// Trains the base and the variant with identical seeds and data streams and
// writes a side-by-side metrics CSV.
AblationOutcome run_ablation(const std::string& name, const TrainConfig& base_cfg,
                             const std::string& out_dir);

}  // namespace dtp
