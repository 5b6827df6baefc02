#include "dtp/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dtp/text.hpp"

namespace dtp {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string metrics_header() { return "step,loss,monitor_mse,max_attention_logit,wall_time_s,phase"; }

std::string format_row(const MetricsRow& r) {
  std::string line = std::to_string(r.step) + "," + fmt_double(r.loss) + ",";
  if (std::isfinite(r.monitor_mse)) line += fmt_double(r.monitor_mse);
  line += "," + fmt_double(r.max_attention_logit) + "," + fmt_double(r.wall_time_s) + "," + r.phase;
  return line;
}

}  // namespace

void AdamW::init(const ParameterSet& ps) {
  t_ = 0;
  m_.clear();
  v_.clear();
  for (int id = 0; id < ps.size(); ++id) {
    m_.push_back(Tensor::zeros(ps.value(id).shape()));
    v_.push_back(Tensor::zeros(ps.value(id).shape()));
  }
}

void AdamW::step(ParameterSet& ps, const std::vector<Tensor>& grads, double lr) {
  if (m_.size() != static_cast<size_t>(ps.size()))
    throw std::logic_error("optimizer state does not match the parameter set");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (int id = 0; id < ps.size(); ++id) {
    Tensor& w = ps.value(id);
    Tensor& m = m_[static_cast<size_t>(id)];
    Tensor& v = v_[static_cast<size_t>(id)];
    const Tensor& g = grads[static_cast<size_t>(id)];
    for (int64_t i = 0; i < w.numel(); ++i) {
      w.at(i) *= 1.0 - lr * weight_decay;
      m.at(i) = beta1 * m.at(i) + (1.0 - beta1) * g.at(i);
      v.at(i) = beta2 * v.at(i) + (1.0 - beta2) * g.at(i) * g.at(i);
      w.at(i) -= lr * (m.at(i) / bc1) / (std::sqrt(v.at(i) / bc2) + eps);
    }
  }
}

double warmup_lr(double base, int64_t step, int64_t warmup) {
  if (warmup <= 0 || step >= warmup) return base;
  return base * static_cast<double>(step) / static_cast<double>(warmup);
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
  if (lr <= 0.0) throw std::invalid_argument("learning rate must be positive");
  if (total_steps < 1) throw std::invalid_argument("total steps must be positive");
  if (warmup_steps < 0 || warmup_steps > total_steps)
    throw std::invalid_argument("warmup must lie within the run");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw std::invalid_argument("adam betas must lie in [0,1)");
  if (weight_decay < 0.0) throw std::invalid_argument("weight decay must be non-negative");
  if (adam_eps <= 0.0) throw std::invalid_argument("adam epsilon must be positive");
  if (phase != "pretrain" && phase != "finetune")
    throw std::invalid_argument("phase must be pretrain or finetune");
  if (datasets.empty()) throw std::invalid_argument("at least one dataset is required");
  if (mask_p < 0.0 || mask_p > 1.0) throw std::invalid_argument("mask probability out of range");
  if (monitor_windows < 1) throw std::invalid_argument("monitor needs at least one window");
  if (monitor_sample_steps < 1) throw std::invalid_argument("monitor sampler needs steps");
  if (producers < 1) throw std::invalid_argument("need at least one producer");
  model.validate();
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write metrics: " + path);
  out << metrics_header() << '\n';
  for (const MetricsRow& r : rows) out << format_row(r) << '\n';
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read metrics: " + path);
  std::string line;
  if (!std::getline(in, line) || line != metrics_header())
    throw std::runtime_error("unrecognized metrics header in " + path);
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    MetricsRow r;
    std::getline(ss, field, ',');
    r.step = std::stoll(field);
    std::getline(ss, field, ',');
    r.loss = std::stod(field);
    std::getline(ss, field, ',');
    r.monitor_mse = field.empty() ? std::nan("") : std::stod(field);
    std::getline(ss, field, ',');
    r.max_attention_logit = std::stod(field);
    std::getline(ss, field, ',');
    r.wall_time_s = std::stod(field);
    std::getline(ss, r.phase);
    rows.push_back(std::move(r));
  }
  return rows;
}

Tensor pack_noisy_chunk(const Tensor& noisy, const std::array<uint8_t, 128>& avail) {
  const int64_t t_a = noisy.rows();
  if (noisy.cols() != 128) throw std::invalid_argument("noisy chunk must have 128 slots");
  Tensor packed({t_a, 256});
  for (int64_t t = 0; t < t_a; ++t)
    for (int64_t j = 0; j < 128; ++j) {
      const double on = avail[static_cast<size_t>(j)] ? 1.0 : 0.0;
      packed.at(t * 256 + j) = noisy.at(t * 128 + j) * on;
      packed.at(t * 256 + 128 + j) = on;
    }
  return packed;
}

NetInputs window_context(const TrainingWindow& w) {
  NetInputs in;
  in.z_pack = Tensor({1, 256});
  for (int64_t i = 0; i < 256; ++i) in.z_pack.at(i) = w.proprio[static_cast<size_t>(i)];
  in.images = w.images;
  in.text_ids = w.instruction;
  in.c_hz = w.frequency_hz;
  return in;
}

Denoiser make_net_denoiser(ParameterSet& ps, const ModelConfig& cfg, const TrainingWindow& w,
                           ForwardStats* stats) {
  const NetInputs base = window_context(w);
  const std::array<uint8_t, 128> avail = w.availability;
  return [&ps, cfg, base, avail, stats](const Tensor& noisy, int k) {
    NetInputs in = base;
    in.chunk_packs = pack_noisy_chunk(noisy, avail);
    in.k = k;
    Graph g(/*grad_enabled=*/false);
    return rdt_forward(g, ps, cfg, in, stats)->v();
  };
}

double monitor_mse(const DenoiserFactory& make, const std::vector<TrainingWindow>& windows,
                   const NoiseSchedule& ns, int sample_steps, uint64_t seed) {
  if (windows.empty()) throw std::invalid_argument("monitor needs windows");
  double total = 0.0;
  int64_t count = 0;
  for (size_t i = 0; i < windows.size(); ++i) {
    const TrainingWindow& w = windows[i];
    const int64_t t_a = static_cast<int64_t>(w.chunk.size());
    Rng rng(mix_seed(seed, static_cast<uint64_t>(i)));
    const Denoiser f = make(w);
    const Tensor sample = sample_fast(f, {t_a, 128}, ns, sample_steps, rng);
    for (int64_t t = 0; t < t_a; ++t)
      for (int64_t j = 0; j < 128; ++j)
        if (w.availability[static_cast<size_t>(j)]) {
          const double d =
              sample.at(t * 128 + j) - w.chunk[static_cast<size_t>(t)][static_cast<size_t>(j)];
          total += d * d;
          ++count;
        }
  }
  if (count == 0) throw std::invalid_argument("monitor windows expose no slots");
  return total / static_cast<double>(count);
}

double monitor_mse(ParameterSet& ps, const ModelConfig& cfg,
                   const std::vector<TrainingWindow>& windows, const NoiseSchedule& ns,
                   int sample_steps, uint64_t seed) {
  return monitor_mse(
      [&ps, &cfg](const TrainingWindow& w) { return make_net_denoiser(ps, cfg, w); }, windows, ns,
      sample_steps, seed);
}

TrainResult train(const TrainConfig& cfg) {
  cfg.validate();
  const Vocabulary vocab = builtin_vocabulary();
  if (cfg.model.vocab != vocab.size())
    throw std::invalid_argument("model vocabulary size must match the builtin vocabulary (" +
                                std::to_string(vocab.size()) + ")");

  std::filesystem::create_directories(cfg.out_dir);
  const DatasetManifest manifest = make_manifest(cfg.datasets);

  LoaderConfig lc;
  lc.batch_size = cfg.batch_size;
  lc.t_a = cfg.model.t_a;
  lc.t_img = cfg.model.t_img;
  lc.seed = cfg.seed;
  lc.producers = cfg.producers;
  lc.augment = true;
  lc.snr_db = cfg.snr_db;
  lc.brightness_jitter = cfg.brightness_jitter;
  BatchLoader loader(manifest, lc);

  // monitor contexts: same datasets, independent un-augmented stream
  std::vector<TrainingWindow> monitor_windows;
  if (cfg.monitor_every > 0) {
    LoaderConfig mc = lc;
    mc.batch_size = cfg.monitor_windows;
    mc.seed = mix_seed(cfg.seed, 0x6d6f6e6974ull);
    mc.augment = false;
    mc.producers = 1;
    BatchLoader mloader(manifest, mc);
    monitor_windows = mloader.next_batch().items;
  }

  ParameterSet ps;
  if (!cfg.init_checkpoint.empty()) {
    Checkpoint ck = load_checkpoint(cfg.init_checkpoint);
    if (ck.config.to_json() != cfg.model.to_json())
      throw std::invalid_argument("checkpoint architecture differs from the configured model");
    ps = std::move(ck.params);
  } else {
    Rng init_rng(mix_seed(cfg.seed, 0x696e6974ull));
    init_model_params(ps, cfg.model, init_rng);
  }

  const NoiseSchedule ns = NoiseSchedule::squared_cosine(cfg.model.k_max);
  AdamW opt;
  opt.beta1 = cfg.beta1;
  opt.beta2 = cfg.beta2;
  opt.weight_decay = cfg.weight_decay;
  opt.eps = cfg.adam_eps;
  opt.init(ps);

  std::vector<Tensor> grads;
  for (int id = 0; id < ps.size(); ++id) grads.push_back(Tensor::zeros(ps.value(id).shape()));

  const std::string metrics_path = cfg.out_dir + "/metrics.csv";
  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot write metrics: " + metrics_path);
  metrics << metrics_header() << '\n';

  const int image_units = cfg.model.t_img * cfg.model.views;
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result;
  result.metrics_path = metrics_path;

  for (int step = 1; step <= cfg.total_steps; ++step) {
    const SampleBatch batch = loader.next_batch();
    for (Tensor& g : grads)
      for (int64_t i = 0; i < g.numel(); ++i) g.at(i) = 0.0;

    double loss_sum = 0.0;
    ForwardStats stats;
    for (size_t item = 0; item < batch.items.size(); ++item) {
      const TrainingWindow& w = batch.items[item];
      const uint64_t global_item =
          static_cast<uint64_t>(step - 1) * static_cast<uint64_t>(cfg.batch_size) + item;
      Rng irng(mix_seed(cfg.seed, global_item, 0x6c6f7373ull));
      const MaskDecisions mask = draw_modality_mask(image_units, cfg.mask_p, irng);

      Tensor a0({cfg.model.t_a, 128});
      Tensor avail({cfg.model.t_a, 128});
      for (int64_t t = 0; t < cfg.model.t_a; ++t)
        for (int64_t j = 0; j < 128; ++j) {
          a0.at(t * 128 + j) = w.chunk[static_cast<size_t>(t)][static_cast<size_t>(j)];
          avail.at(t * 128 + j) = w.availability[static_cast<size_t>(j)] ? 1.0 : 0.0;
        }

      NetInputs base = window_context(w);
      base.mask = &mask;
      Graph g;
      auto predict = [&](const Tensor& noisy, int k) {
        NetInputs in = base;
        in.chunk_packs = pack_noisy_chunk(noisy, w.availability);
        in.k = k;
        return rdt_forward(g, ps, cfg.model, in, &stats);
      };
      Node* loss = training_loss_graph(g, predict, a0, avail, ns, irng);
      loss_sum += loss->v().at(0);
      g.backward(g.scale(loss, 1.0 / static_cast<double>(cfg.batch_size)));
      g.add_param_grads(grads);
    }

    const double batch_loss = loss_sum / static_cast<double>(cfg.batch_size);
    if (!std::isfinite(batch_loss)) {
      metrics.flush();
      throw std::runtime_error("training diverged: non-finite loss at step " +
                               std::to_string(step));
    }
    opt.step(ps, grads, warmup_lr(cfg.lr, step, cfg.warmup_steps));

    MetricsRow row;
    row.step = step;
    row.loss = batch_loss;
    row.monitor_mse = std::nan("");
    row.max_attention_logit = stats.max_attention_logit;
    row.phase = cfg.phase;
    const bool monitor_now =
        cfg.monitor_every > 0 &&
        (step == 1 || step == cfg.total_steps || step % cfg.monitor_every == 0);
    if (monitor_now) {
      row.monitor_mse = monitor_mse(ps, cfg.model, monitor_windows, ns, cfg.monitor_sample_steps,
                                    mix_seed(cfg.seed, static_cast<uint64_t>(step), 0x6d6f6eull));
      if (step == 1) result.first_monitor = row.monitor_mse;
      result.final_monitor = row.monitor_mse;
    }
    row.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    metrics << format_row(row) << '\n';
    metrics.flush();

    if (step == 1) result.first_loss = batch_loss;
    result.final_loss = batch_loss;

    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.total_steps) {
      char name[40];
      std::snprintf(name, sizeof name, "/ckpt_%06d.bin", step);
      save_checkpoint(cfg.out_dir + name, cfg.model, ps, step);
    }
  }

  result.checkpoint_path = cfg.out_dir + "/ckpt_final.bin";
  save_checkpoint(result.checkpoint_path, cfg.model, ps, cfg.total_steps);
  result.loader_stats = loader.stats();
  return result;
}

}  // namespace dtp
