#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dtp/diffusion.hpp"
#include "dtp/net.hpp"
#include "dtp/pipeline.hpp"

namespace dtp {

// Adam with decoupled weight decay: the decay multiplies the weight directly
// (w <- w * (1 - lr*wd)) and never enters the moment estimates.
class AdamW {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 1e-2;
  double eps = 1e-8;

  void init(const ParameterSet& ps);
  void step(ParameterSet& ps, const std::vector<Tensor>& grads, double lr);
  int64_t updates() const { return t_; }

 private:
  int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Linear ramp over the first `warmup` steps (1-indexed), constant afterwards.
double warmup_lr(double base, int64_t step, int64_t warmup);

struct TrainConfig {
  int batch_size = 32;
  double lr = 1e-4;
  int warmup_steps = 500;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 1e-2;
  double adam_eps = 1e-8;
  int total_steps = 2000;
  uint64_t seed = 0;
  std::vector<DatasetRef> datasets;  // manifest entries (path + multiplier)
  ModelConfig model;
  std::string phase = "pretrain";  // or "finetune"

  std::string out_dir = "run";        // metrics.csv + checkpoints
  std::string init_checkpoint;        // warm start; architecture must match
  int checkpoint_every = 1000;        // 0 = only the final checkpoint
  int monitor_every = 500;            // 0 = never; also runs at step 1 and last
  int monitor_windows = 16;           // held-out contexts per monitor pass
  int monitor_sample_steps = 5;       // fast-sampler evaluations per context
  double mask_p = 0.1;                // modality-mask probability
  double snr_db = 40.0;               // proprio augmentation level
  double brightness_jitter = 0.1;
  int producers = 1;

  void validate() const;
};

// One metrics line per optimizer step. monitor_mse is NaN on steps where the
// sampling monitor did not run (written as an empty CSV field).
struct MetricsRow {
  int64_t step = 0;
  double loss = 0.0;
  double monitor_mse = 0.0;
  double max_attention_logit = 0.0;
  double wall_time_s = 0.0;
  std::string phase;
};

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

// [t_a,128] noisy values -> [t_a,256] network input: values are zeroed where
// the availability indicator is 0 and the indicator occupies the upper half.
Tensor pack_noisy_chunk(const Tensor& noisy, const std::array<uint8_t, 128>& avail);

// Fills everything except the noisy chunk and timestep from a window.
NetInputs window_context(const TrainingWindow& w);

// Closed-over sampler callback: builds one no-grad forward per (noisy, k).
Denoiser make_net_denoiser(ParameterSet& ps, const ModelConfig& cfg, const TrainingWindow& w,
                           ForwardStats* stats = nullptr);

// Sampling-based training monitor: fast-samples a chunk for each held-out
// context and reports the mean squared error against the ground-truth chunk
// over available slots. Deterministic in `seed`.
using DenoiserFactory = std::function<Denoiser(const TrainingWindow&)>;
double monitor_mse(const DenoiserFactory& make, const std::vector<TrainingWindow>& windows,
                   const NoiseSchedule& ns, int sample_steps, uint64_t seed);
double monitor_mse(ParameterSet& ps, const ModelConfig& cfg,
                   const std::vector<TrainingWindow>& windows, const NoiseSchedule& ns,
                   int sample_steps, uint64_t seed);

struct TrainResult {
  std::string checkpoint_path;  // final checkpoint
  std::string metrics_path;
  double first_loss = 0.0;
  double final_loss = 0.0;
  // NaN when the monitor never ran
  double first_monitor = std::numeric_limits<double>::quiet_NaN();
  double final_monitor = std::numeric_limits<double>::quiet_NaN();
  LoaderStats loader_stats;
};

// Full training run: stream batches, accumulate per-item gradients, AdamW
// with linear warmup, periodic checkpoints and sampling monitor, one metrics
// row per step. Deterministic for fixed (seed, config) with one producer,
// wall-time column aside. Throws on a non-finite loss.
TrainResult train(const TrainConfig& cfg);

}  // namespace dtp
