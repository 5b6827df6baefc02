#include "dtp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace dtp {

namespace {

int arm_of(Hand h) {
  if (h == Hand::right) return 0;
  if (h == Hand::left) return 1;
  throw std::invalid_argument("need a specific hand");
}

// joint-position slots the schema populates (both arms)
std::vector<int> joint_slots(const std::array<uint8_t, 128>& avail) {
  std::vector<int> out;
  for (int base : {slots::right_arm_joint_pos, slots::left_arm_joint_pos})
    for (int j = 0; j < 10; ++j)
      if (avail[static_cast<size_t>(base + j)]) out.push_back(base + j);
  return out;
}

double rms_joint_distance(const Tensor& chunk, const std::vector<UnifiedVector>& mode,
                          const std::vector<int>& js) {
  double s = 0.0;
  int64_t n = 0;
  for (size_t t = 0; t < mode.size(); ++t)
    for (int j : js) {
      const double d = chunk.at(static_cast<int64_t>(t) * 128 + j) -
                       mode[t].values[static_cast<size_t>(j)];
      s += d * d;
      ++n;
    }
  return std::sqrt(s / static_cast<double>(n));
}

double rms_mode_separation(const std::vector<UnifiedVector>& a,
                           const std::vector<UnifiedVector>& b, const std::vector<int>& js) {
  double s = 0.0;
  int64_t n = 0;
  for (size_t t = 0; t < a.size(); ++t)
    for (int j : js) {
      const double d = a[t].values[static_cast<size_t>(j)] - b[t].values[static_cast<size_t>(j)];
      s += d * d;
      ++n;
    }
  return std::sqrt(s / static_cast<double>(n));
}

}  // namespace

ModeClassification classify_chunk(const Tensor& chunk,
                                  const std::vector<UnifiedVector>& right_mode,
                                  const std::vector<UnifiedVector>& left_mode,
                                  const std::array<uint8_t, 128>& avail) {
  if (right_mode.size() != left_mode.size() ||
      static_cast<int64_t>(right_mode.size()) != chunk.rows())
    throw std::invalid_argument("chunk and mode lengths must agree");
  const std::vector<int> js = joint_slots(avail);
  if (js.empty()) throw std::invalid_argument("schema populates no joint slots");
  ModeClassification c;
  c.d_right = rms_joint_distance(chunk, right_mode, js);
  c.d_left = rms_joint_distance(chunk, left_mode, js);
  std::vector<UnifiedVector> mean_mode = right_mode;
  for (size_t t = 0; t < mean_mode.size(); ++t)
    for (int j : js)
      mean_mode[t].values[static_cast<size_t>(j)] =
          0.5 * (right_mode[t].values[static_cast<size_t>(j)] +
                 left_mode[t].values[static_cast<size_t>(j)]);
  c.d_mean = rms_joint_distance(chunk, mean_mode, js);
  c.separation = rms_mode_separation(right_mode, left_mode, js);
  return c;
}

Policy::Policy(ParameterSet& ps, const ModelConfig& cfg, RobotSchema schema, PolicyConfig pc)
    : ps_(ps), cfg_(cfg), schema_(std::move(schema)), pc_(std::move(pc)),
      vocab_(builtin_vocabulary()) {
  cfg_.validate();
  if (cfg_.views != 3) throw std::invalid_argument("the simulator renders exactly three views");
  if (pc_.frequency_hz <= 0.0) throw std::invalid_argument("control frequency must be positive");
  if (pc_.execute_steps < 0 || pc_.execute_steps > cfg_.t_a)
    throw std::invalid_argument("execute_steps must lie within the chunk");
  if (pc_.execute_steps == 0) pc_.execute_steps = std::max(1, cfg_.t_a / 2);
  instruction_ids_ = vocab_.encode(pc_.instruction);
  avail_ = schema_.slot_mask();
}

std::vector<double> Policy::render_frames(const WorldState& s) const {
  const int g = cfg_.image_size;
  std::vector<uint8_t> raw;
  render_views(s, schema_, g, raw);
  std::vector<double> out(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) out[i] = static_cast<double>(raw[i]) / 255.0;
  return out;
}

void Policy::reset_history(const WorldState&) { history_.clear(); }

Tensor Policy::sample_chunk(const WorldState& s, Rng& rng) {
  const std::vector<double> cur = render_frames(s);
  TrainingWindow w;
  const UnifiedVector z = proprio(s, schema_);
  const auto packed = pack_with_indicator(z);
  std::copy(packed.begin(), packed.end(), w.proprio.begin());

  // window = t_img-1 most recent past frames (duplicating the oldest when the
  // episode is young) followed by the current frame
  w.images.clear();
  for (int h = 0; h < cfg_.t_img - 1; ++h) {
    const int deficit = (cfg_.t_img - 1) - static_cast<int>(history_.size());
    const int idx = std::max(0, h - deficit);
    const std::vector<double>& f =
        history_.empty() ? cur : history_[static_cast<size_t>(std::min<int>(
                               idx, static_cast<int>(history_.size()) - 1))];
    w.images.insert(w.images.end(), f.begin(), f.end());
  }
  w.images.insert(w.images.end(), cur.begin(), cur.end());

  w.availability = avail_;
  w.instruction = instruction_ids_;
  w.frequency_hz = pc_.frequency_hz;
  w.image_size = cfg_.image_size;
  w.views = cfg_.views;
  w.chunk.resize(static_cast<size_t>(cfg_.t_a));  // denoiser input only; values unused

  const Denoiser f = make_net_denoiser(ps_, cfg_, w);
  const NoiseSchedule ns = NoiseSchedule::squared_cosine(cfg_.k_max);
  return sample_fast(f, {cfg_.t_a, 128}, ns, pc_.sample_steps, rng);
}

WorldState Policy::step_once(const WorldState& s, const Tensor& chunk, int row) {
  history_.push_back(render_frames(s));
  while (static_cast<int>(history_.size()) > std::max(0, cfg_.t_img - 1)) history_.pop_front();
  UnifiedVector a;
  for (int j = 0; j < 128; ++j)
    if (avail_[static_cast<size_t>(j)]) a.set(j, chunk.at(static_cast<int64_t>(row) * 128 + j));
  return step(s, schema_, a, dt());
}

WorldState Policy::execute(const WorldState& s, const Tensor& chunk, int n) {
  if (n < 1 || n > chunk.rows()) throw std::invalid_argument("prefix exceeds the chunk");
  WorldState cur = s;
  for (int i = 0; i < n; ++i) cur = step_once(cur, chunk, i);
  return cur;
}

std::vector<WorldState> Policy::rollout(const WorldState& s0, int horizon, Rng& rng) {
  reset_history(s0);
  std::vector<WorldState> states = {s0};
  int t = 0;
  while (t < horizon) {
    const Tensor chunk = sample_chunk(states.back(), rng);
    const int n = std::min(pc_.execute_steps, horizon - t);
    for (int i = 0; i < n; ++i) states.push_back(step_once(states.back(), chunk, i));
    t += n;
  }
  return states;
}

// --- multi-modality ---

std::string MultimodalityReport::to_json() const {
  nlohmann::json j;
  j["trials"] = trials;
  j["valid"] = valid;
  j["to_right"] = to_right;
  j["to_left"] = to_left;
  j["mean_region"] = mean_region;
  j["rollout_trials"] = rollout_trials;
  j["rollout_success"] = rollout_success;
  return j.dump();
}

MultimodalityReport eval_multimodality(ParameterSet& ps, const ModelConfig& cfg,
                                       const MultimodalityConfig& ec) {
  const RobotSchema schema = planar_dual_schema();
  PolicyConfig pc = ec.policy;
  if (pc.instruction.empty()) pc.instruction = grasp_instructions(Hand::either).original;
  Policy policy(ps, cfg, schema, pc);
  const std::array<uint8_t, 128> avail = schema.slot_mask();
  const std::vector<int> js = joint_slots(avail);
  const double dt = policy.dt();

  TaskSpec task;
  task.kind = TaskKind::grasp_cube;
  task.hand = Hand::either;
  task.x_lo = ec.x_lo;
  task.x_hi = ec.x_hi;

  MultimodalityReport rep;
  rep.trials = ec.trials;
  for (int i = 0; i < ec.trials; ++i) {
    WorldState s0{};
    std::vector<UnifiedVector> right_mode, left_mode;
    bool found = false;
    for (int attempt = 0; attempt < 64 && !found; ++attempt) {
      s0 = reset(task, mix_seed(ec.seed, static_cast<uint64_t>(i), 0xe5a1 + attempt));
      if (!both_arms_feasible(s0.obj_x, s0.obj_y)) continue;
      right_mode = expert_chunk(s0, task, Hand::right, schema, dt, cfg.t_a);
      left_mode = expert_chunk(s0, task, Hand::left, schema, dt, cfg.t_a);
      found = rms_mode_separation(right_mode, left_mode, js) > ec.delta_mode;
    }
    if (!found) throw std::runtime_error("could not draw a multi-modal state");

    policy.reset_history(s0);
    Rng rng(mix_seed(ec.seed, static_cast<uint64_t>(i), 0x73616d70ull));
    const Tensor chunk = policy.sample_chunk(s0, rng);

    const ModeClassification c = classify_chunk(chunk, right_mode, left_mode, avail);
    if (std::min(c.d_right, c.d_left) <= ec.delta_valid) {
      ++rep.valid;
      if (c.d_right <= c.d_left)
        ++rep.to_right;
      else
        ++rep.to_left;
    }
    if (c.d_mean < c.d_right && c.d_mean < c.d_left) ++rep.mean_region;
  }

  rep.rollout_trials = ec.rollout_trials;
  for (int i = 0; i < ec.rollout_trials; ++i) {
    const WorldState s0 = reset(task, mix_seed(ec.seed, static_cast<uint64_t>(i), 0x726f6cull));
    Rng rng(mix_seed(ec.seed, static_cast<uint64_t>(i), 0x726f6c32ull));
    const std::vector<WorldState> traj = policy.rollout(s0, ec.horizon, rng);
    for (const WorldState& s : traj)
      if (expert_done(s, task, Hand::right) || expert_done(s, task, Hand::left)) {
        ++rep.rollout_success;
        break;
      }
  }
  return rep;
}

// --- instruction following ---

double InstructionReport::seen_correct_hand_rate() const {
  int n = 0, c = 0;
  for (const ComboReport& r : combos)
    if (!r.held_out) {
      n += r.trials;
      c += r.correct_hand;
    }
  return n ? static_cast<double>(c) / n : 0.0;
}

double InstructionReport::seen_mean_level_error() const {
  int n = 0;
  double s = 0.0;
  for (const ComboReport& r : combos)
    if (!r.held_out) {
      n += r.trials;
      s += r.mean_level_error * r.trials;
    }
  return n ? s / n : 0.0;
}

std::string InstructionReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const ComboReport& r : combos) {
    nlohmann::json j;
    j["hand"] = hand_name(r.hand);
    j["level"] = level_name(r.level);
    j["held_out"] = r.held_out;
    j["trials"] = r.trials;
    j["correct_hand"] = r.correct_hand;
    j["completed"] = r.completed;
    j["mean_level_error"] = r.mean_level_error;
    j["max_offhand_motion"] = r.max_offhand_motion;
    arr.push_back(std::move(j));
  }
  nlohmann::json top;
  top["combos"] = std::move(arr);
  top["seen_correct_hand_rate"] = seen_correct_hand_rate();
  top["seen_mean_level_error"] = seen_mean_level_error();
  return top.dump();
}

InstructionReport eval_instruction_following(ParameterSet& ps, const ModelConfig& cfg,
                                             const InstructionConfig& ec) {
  const RobotSchema schema = planar_dual_schema();
  InstructionReport rep;
  for (const Hand hand : {Hand::left, Hand::right})
    for (const Level level : {Level::one_third, Level::half, Level::full, Level::two_thirds}) {
      ComboReport r;
      r.hand = hand;
      r.level = level;
      r.held_out = level == Level::two_thirds;
      r.trials = ec.trials_per_combo;

      PolicyConfig pc = ec.policy;
      pc.instruction = pour_instructions(hand, level).original;
      Policy policy(ps, cfg, schema, pc);
      const int cmd = arm_of(hand);
      const int other = 1 - cmd;

      double err_sum = 0.0;
      for (int i = 0; i < ec.trials_per_combo; ++i) {
        TaskSpec task;
        task.kind = TaskKind::pour_level;
        task.hand = hand;
        task.level = level;
        task.x_lo = ec.x_lo;
        task.x_hi = ec.x_hi;
        const uint64_t combo_key =
            (static_cast<uint64_t>(hand) << 8) ^ (static_cast<uint64_t>(level) << 4) ^
            static_cast<uint64_t>(i);
        const WorldState s0 = reset(task, mix_seed(ec.seed, combo_key, 0x696e73ull));
        Rng rng(mix_seed(ec.seed, combo_key, 0x696e7332ull));
        const std::vector<WorldState> traj = policy.rollout(s0, ec.horizon, rng);

        bool held_cmd = false, held_other = false;
        double drift = 0.0;
        for (const WorldState& s : traj) {
          if (s.held_by == cmd) held_cmd = true;
          if (s.held_by == other) held_other = true;
          const ArmState& a0 = s0.arms[static_cast<size_t>(other)];
          const ArmState& at = s.arms[static_cast<size_t>(other)];
          drift = std::max({drift, std::fabs(at.q1 - a0.q1), std::fabs(at.q2 - a0.q2)});
        }
        if (held_cmd && !held_other) ++r.correct_hand;
        if (expert_done(traj.back(), task, hand)) ++r.completed;
        err_sum += std::fabs(traj.back().pour - level_fraction(level));
        r.max_offhand_motion = std::max(r.max_offhand_motion, drift);
      }
      r.mean_level_error = err_sum / static_cast<double>(ec.trials_per_combo);
      rep.combos.push_back(std::move(r));
    }
  return rep;
}

// --- ablations ---

TrainConfig apply_ablation(const std::string& name, const TrainConfig& base) {
  TrainConfig v = base;
  if (name == "regress") {
    v.model.regress = true;
  } else if (name == "small") {
    v.model.d_model = std::max(8, base.model.d_model / 4);
    v.model.heads = std::max(1, base.model.heads / 4);
  } else if (name == "scratch") {
    v.init_checkpoint.clear();
  } else if (name == "no_qknorm_rmsnorm") {
    v.model.no_qknorm_rmsnorm = true;
  } else if (name == "no_mlp_decoder") {
    v.model.no_mlp_decoder = true;
  } else if (name == "no_aci") {
    v.model.no_aci = true;
  } else {
    throw std::invalid_argument("unknown ablation: " + name);
  }
  return v;
}

AblationOutcome run_ablation(const std::string& name, const TrainConfig& base_cfg,
                             const std::string& out_dir) {
  TrainConfig base = base_cfg;
  base.out_dir = out_dir + "/base";
  TrainConfig variant = apply_ablation(name, base_cfg);
  variant.out_dir = out_dir + "/" + name;

  AblationOutcome out;
  out.name = name;
  out.base = train(base);
  out.variant = train(variant);

  const std::vector<MetricsRow> a = read_metrics_csv(out.base.metrics_path);
  const std::vector<MetricsRow> b = read_metrics_csv(out.variant.metrics_path);
  if (a.size() != b.size()) throw std::logic_error("paired runs diverged in length");
  out.csv_path = out_dir + "/ablation_" + name + ".csv";
  std::ofstream f(out.csv_path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + out.csv_path);
  f << "step,loss_base,loss_" << name << ",monitor_base,monitor_" << name << ",max_logit_base,max_logit_"
    << name << '\n';
  auto field = [](double v) {
    if (std::isnan(v)) return std::string();
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (size_t i = 0; i < a.size(); ++i)
    f << a[i].step << ',' << field(a[i].loss) << ',' << field(b[i].loss) << ','
      << field(a[i].monitor_mse) << ',' << field(b[i].monitor_mse) << ','
      << field(a[i].max_attention_logit) << ',' << field(b[i].max_attention_logit) << '\n';
  return out;
}

}  // namespace dtp
