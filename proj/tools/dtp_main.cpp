// Command-line front end: dataset generation, the two training phases,
// chunk sampling, policy evaluation, ablation pairs, and episode inspection.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dtp/config.hpp"
#include "dtp/eval.hpp"
#include "dtp/plot.hpp"

namespace fs = std::filesystem;
using namespace dtp;

namespace {

TaskKind parse_task(const std::string& s) {
  if (s == "grasp" || s == "grasp_cube") return TaskKind::grasp_cube;
  if (s == "pour" || s == "pour_level") return TaskKind::pour_level;
  throw std::invalid_argument("unknown task: " + s + " (expected grasp or pour)");
}

Level parse_level(const std::string& s) {
  if (s == "one_third") return Level::one_third;
  if (s == "half") return Level::half;
  if (s == "two_thirds") return Level::two_thirds;
  if (s == "full") return Level::full;
  throw std::invalid_argument("unknown pour level: " + s);
}

Hand parse_hand(const std::string& s) {
  if (s == "left") return Hand::left;
  if (s == "right") return Hand::right;
  if (s == "either") return Hand::either;
  throw std::invalid_argument("unknown hand: " + s);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string tok; std::getline(in, tok, ',');)
    if (!tok.empty()) out.push_back(tok);
  return out;
}

TrainConfig load_train_config(const std::string& config_path,
                              const std::vector<std::string>& sets) {
  ConfigMap cm = config_path.empty() ? ConfigMap{} : parse_config_file(config_path);
  for (const std::string& s : sets) apply_override(cm, s);
  return train_config_from(cm);
}

// loss + monitor curves from a finished run's metrics
void write_run_plots(const std::string& metrics_path, const std::string& out_dir) {
  const std::vector<MetricsRow> rows = read_metrics_csv(metrics_path);
  PlotSeries loss{"loss", {}, {}}, monitor{"monitor mse", {}, {}};
  for (const MetricsRow& r : rows) {
    loss.x.push_back(static_cast<double>(r.step));
    loss.y.push_back(r.loss);
    monitor.x.push_back(static_cast<double>(r.step));
    monitor.y.push_back(r.monitor_mse);  // NaN rows leave gaps
  }
  write_line_svg(out_dir + "/loss.svg", "training loss", "step", "mse", {loss});
  bool any_monitor = false;
  for (double v : monitor.y) any_monitor |= std::isfinite(v);
  if (any_monitor)
    write_line_svg(out_dir + "/monitor.svg", "sampling monitor", "step", "mse", {monitor});
}

int run_train(const std::string& phase, const std::string& config_path,
              const std::vector<std::string>& sets, bool plots) {
  TrainConfig cfg = load_train_config(config_path, sets);
  cfg.phase = phase;
  const TrainResult res = train(cfg);
  if (plots) write_run_plots(res.metrics_path, cfg.out_dir);
  std::cout << "checkpoint: " << res.checkpoint_path << "\n"
            << "metrics: " << res.metrics_path << "\n"
            << "loss: " << res.first_loss << " -> " << res.final_loss << "\n";
  if (std::isfinite(res.final_monitor))
    std::cout << "monitor: " << res.first_monitor << " -> " << res.final_monitor << "\n";
  return 0;
}

int run_gen_data(const DatasetSpec& spec) {
  const DatasetSummary sum = generate_dataset(spec);
  std::cout << "wrote " << sum.written << " episode(s) to " << spec.out_dir;
  if (sum.failures) std::cout << " (" << sum.failures << " expert failure(s) discarded)";
  std::cout << "\n";
  return 0;
}

int run_sample(const std::string& ck_path, int steps, int n, uint64_t seed,
               const std::string& instruction, double x_lo, double x_hi,
               const std::string& out_csv, const std::string& out_svg) {
  Checkpoint ck = load_checkpoint(ck_path);
  PolicyConfig pc;
  pc.sample_steps = steps;
  pc.instruction = instruction;
  const RobotSchema schema = planar_dual_schema();
  Policy policy(ck.params, ck.config, schema, pc);

  TaskSpec task;
  task.kind = TaskKind::grasp_cube;
  task.x_lo = x_lo;
  task.x_hi = x_hi;
  WorldState s0{};
  bool feasible = false;
  for (int attempt = 0; attempt < 256 && !feasible; ++attempt) {
    s0 = reset(task, mix_seed(seed, static_cast<uint64_t>(attempt)));
    feasible = both_arms_feasible(s0.obj_x, s0.obj_y);
  }
  if (!feasible) throw std::runtime_error("no dual-feasible object position in the given band");

  const auto right = expert_chunk(s0, task, Hand::right, schema, policy.dt(), ck.config.t_a);
  const auto left = expert_chunk(s0, task, Hand::left, schema, policy.dt(), ck.config.t_a);
  const auto avail = schema.slot_mask();

  std::ofstream csv;
  if (!out_csv.empty()) {
    csv.open(out_csv, std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write " + out_csv);
    csv << "sample,row,slot,value\n";
  }
  PlotSeries cloud{"samples", {}, {}};
  int finite = 0;
  policy.reset_history(s0);
  for (int i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, static_cast<uint64_t>(i), 0x73616d70ull));
    const Tensor chunk = policy.sample_chunk(s0, rng);
    bool ok = true;
    for (int64_t j = 0; j < chunk.numel(); ++j) ok &= std::isfinite(chunk.at(j));
    finite += ok;
    if (csv.is_open())
      for (int64_t r = 0; r < chunk.rows(); ++r)
        for (int slot = 0; slot < 128; ++slot)
          if (avail[static_cast<size_t>(slot)])
            csv << i << ',' << r << ',' << slot << ',' << chunk.at(r * 128 + slot) << '\n';
    const ModeClassification c = classify_chunk(chunk, right, left, avail);
    cloud.x.push_back(c.d_right);
    cloud.y.push_back(c.d_left);
  }
  if (!out_svg.empty())
    write_scatter_svg(out_svg, "chunk distance to the two expert modes", "rms to right mode (rad)",
                      "rms to left mode (rad)", {cloud});
  std::cout << "state: obj_x=" << s0.obj_x << " obj_y=" << s0.obj_y << "\n"
            << "samples: " << n << " (" << finite << " finite), steps=" << steps << "\n";
  return finite == n ? 0 : 1;
}

int run_eval(const std::string& metric, const std::string& ck_path, int trials, int rollouts,
             int horizon, int steps, uint64_t seed, const std::string& out_json) {
  Checkpoint ck = load_checkpoint(ck_path);
  std::string json;
  if (metric == "multimodality") {
    MultimodalityConfig mc;
    mc.trials = trials;
    mc.rollout_trials = rollouts;
    mc.horizon = horizon;
    mc.seed = seed;
    mc.policy.sample_steps = steps;
    json = eval_multimodality(ck.params, ck.config, mc).to_json();
  } else if (metric == "instruction") {
    InstructionConfig ic;
    ic.trials_per_combo = trials;
    ic.horizon = horizon;
    ic.seed = seed;
    ic.policy.sample_steps = steps;
    json = eval_instruction_following(ck.params, ck.config, ic).to_json();
  } else {
    throw std::invalid_argument("unknown metric: " + metric +
                                " (expected multimodality or instruction)");
  }
  std::cout << json << "\n";
  if (!out_json.empty()) {
    std::ofstream out(out_json, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + out_json);
    out << json << "\n";
  }
  return 0;
}

int run_ablate(const std::string& name, const std::string& config_path,
               const std::vector<std::string>& sets, const std::string& out_dir, bool plots) {
  const TrainConfig base = load_train_config(config_path, sets);
  const AblationOutcome out = run_ablation(name, base, out_dir);
  if (plots) {
    const auto rows_b = read_metrics_csv(out.base.metrics_path);
    const auto rows_v = read_metrics_csv(out.variant.metrics_path);
    PlotSeries lb{"base", {}, {}}, lv{name, {}, {}};
    for (const MetricsRow& r : rows_b) {
      lb.x.push_back(static_cast<double>(r.step));
      lb.y.push_back(r.loss);
    }
    for (const MetricsRow& r : rows_v) {
      lv.x.push_back(static_cast<double>(r.step));
      lv.y.push_back(r.loss);
    }
    write_line_svg(out_dir + "/ablation_" + name + ".svg", "ablation: " + name, "step", "loss",
                   {lb, lv});
  }
  std::cout << "comparison: " << out.csv_path << "\n"
            << "base loss: " << out.base.first_loss << " -> " << out.base.final_loss << "\n"
            << name << " loss: " << out.variant.first_loss << " -> " << out.variant.final_loss
            << "\n";
  return 0;
}

int run_inspect(const std::string& path) {
  const EpisodeRecord e = read_episode(path);
  const RobotSchema schema = schema_by_id(e.schema_id);
  const auto avail = schema.slot_mask();
  int slots = 0;
  for (uint8_t b : avail) slots += b != 0;
  std::cout << "schema: " << e.schema_id << "\n"
            << "task: " << e.task << " (" << e.expert_mode << ")\n"
            << "length: " << e.length() << " steps @ " << e.frequency_hz << " Hz\n"
            << "views: " << e.views << " x " << e.image_size << "x" << e.image_size << "\n"
            << "active slots: " << slots << "\n"
            << "success: " << (e.success ? "yes" : "no") << "\n"
            << "instruction: " << e.instructions.original << "\n"
            << "simplified: " << e.instructions.simplified << "\n";
  for (size_t i = 0; i < e.instructions.expanded.size(); ++i)
    std::cout << "expanded[" << i << "]: " << e.instructions.expanded[i] << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"diffusion transformer policy toolkit"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate an expert demonstration dataset");
  std::string g_task = "grasp", g_out = "data", g_name, g_schema = "planar_dual_v1";
  std::string g_levels, g_hands;
  int g_n = 8, g_image = 32;
  uint64_t g_seed = 0;
  double g_xlo = std::numeric_limits<double>::quiet_NaN();
  double g_xhi = std::numeric_limits<double>::quiet_NaN();
  gen->add_option("--task", g_task, "grasp | pour");
  gen->add_option("--n", g_n, "episodes to record");
  gen->add_option("--seed", g_seed, "dataset seed");
  gen->add_option("--out", g_out, "output directory");
  gen->add_option("--name", g_name, "dataset name (default: task name)");
  gen->add_option("--schema", g_schema, "robot schema id");
  gen->add_option("--image-size", g_image, "rendered view resolution");
  gen->add_option("--x-lo", g_xlo, "object band override");
  gen->add_option("--x-hi", g_xhi, "object band override");
  gen->add_option("--levels", g_levels, "pour levels, comma-separated");
  gen->add_option("--hands", g_hands, "pour hands, comma-separated");

  // pretrain / finetune
  std::string t_config;
  std::vector<std::string> t_sets;
  bool t_plots = false;
  for (const char* name : {"pretrain", "finetune"}) {
    auto* cmd = app.add_subcommand(name, std::string(name) + " a policy from a run config");
    cmd->add_option("--config", t_config, "TOML-style run configuration");
    cmd->add_option("--set", t_sets, "key=value override, repeatable");
    cmd->add_flag("--plots", t_plots, "write loss/monitor SVG curves");
  }

  // sample
  auto* smp = app.add_subcommand("sample", "draw action chunks at a dual-feasible state");
  std::string s_ck, s_instruction, s_csv, s_svg;
  int s_steps = 5, s_n = 16;
  uint64_t s_seed = 0;
  double s_xlo = -0.15, s_xhi = 0.15;
  smp->add_option("--checkpoint", s_ck, "trained checkpoint")->required();
  smp->add_option("--steps", s_steps, "denoiser evaluations per chunk");
  smp->add_option("--n", s_n, "chunks to draw");
  smp->add_option("--seed", s_seed, "sampling seed");
  smp->add_option("--instruction", s_instruction, "language command");
  smp->add_option("--x-lo", s_xlo, "object band");
  smp->add_option("--x-hi", s_xhi, "object band");
  smp->add_option("--out", s_csv, "chunk dump CSV path");
  smp->add_option("--svg", s_svg, "mode-distance scatter SVG path");

  // eval
  auto* evl = app.add_subcommand("eval", "evaluate a checkpoint in the simulator");
  std::string e_metric = "multimodality", e_ck, e_json;
  int e_trials = 50, e_rollouts = 8, e_horizon = 128, e_steps = 5;
  uint64_t e_seed = 0;
  evl->add_option("--metric", e_metric, "multimodality | instruction");
  evl->add_option("--checkpoint", e_ck, "trained checkpoint")->required();
  evl->add_option("--trials", e_trials, "trials (per combination for instruction)");
  evl->add_option("--rollouts", e_rollouts, "closed-loop episodes (multimodality)");
  evl->add_option("--horizon", e_horizon, "rollout length");
  evl->add_option("--steps", e_steps, "denoiser evaluations per chunk");
  evl->add_option("--seed", e_seed, "evaluation seed");
  evl->add_option("--out", e_json, "report JSON path");

  // ablate
  auto* abl = app.add_subcommand("ablate", "train a base/variant pair and compare");
  std::string a_name, a_config, a_out = "ablation";
  std::vector<std::string> a_sets;
  bool a_plots = false;
  abl->add_option("--name", a_name,
                  "regress | small | scratch | no_qknorm_rmsnorm | no_mlp_decoder | no_aci")
      ->required();
  abl->add_option("--config", a_config, "base run configuration");
  abl->add_option("--set", a_sets, "key=value override, repeatable");
  abl->add_option("--out", a_out, "output directory for the pair");
  abl->add_flag("--plots", a_plots, "write the loss comparison SVG");

  // inspect-episode
  auto* ins = app.add_subcommand("inspect-episode", "print an episode file's header and labels");
  std::string i_path;
  ins->add_option("--path", i_path, "episode file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      DatasetSpec spec;
      spec.task = parse_task(g_task);
      spec.name = g_name.empty() ? task_name(spec.task) : g_name;
      spec.out_dir = g_out;
      spec.schema_id = g_schema;
      spec.episodes = g_n;
      spec.seed = g_seed;
      spec.image_size = g_image;
      spec.x_lo = g_xlo;
      spec.x_hi = g_xhi;
      if (!g_levels.empty()) {
        spec.pour_levels.clear();
        for (const std::string& s : split_csv(g_levels)) spec.pour_levels.push_back(parse_level(s));
      }
      if (!g_hands.empty()) {
        spec.pour_hands.clear();
        for (const std::string& s : split_csv(g_hands)) spec.pour_hands.push_back(parse_hand(s));
      }
      return run_gen_data(spec);
    }
    if (app.get_subcommand("pretrain")->parsed())
      return run_train("pretrain", t_config, t_sets, t_plots);
    if (app.get_subcommand("finetune")->parsed())
      return run_train("finetune", t_config, t_sets, t_plots);
    if (smp->parsed())
      return run_sample(s_ck, s_steps, s_n, s_seed, s_instruction, s_xlo, s_xhi, s_csv, s_svg);
    if (evl->parsed())
      return run_eval(e_metric, e_ck, e_trials, e_rollouts, e_horizon, e_steps, e_seed, e_json);
    if (abl->parsed()) return run_ablate(a_name, a_config, a_sets, a_out, a_plots);
    if (ins->parsed()) return run_inspect(i_path);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  std::cerr << "error: no subcommand\n";
  return 1;
}
