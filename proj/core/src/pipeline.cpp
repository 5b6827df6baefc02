#include "dtp/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace dtp {

namespace {

// max |delta| between consecutive states over populated value slots
double proprio_delta(const UnifiedVector& a, const UnifiedVector& b) {
  double d = 0.0;
  for (size_t i = 0; i < 128; ++i)
    if (a.mask[i] && b.mask[i]) d = std::max(d, std::fabs(b.values[i] - a.values[i]));
  return d;
}

template <typename T>
std::vector<T> take_indices(const std::vector<T>& v, const std::vector<int>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(v[static_cast<size_t>(i)]);
  return out;
}

}  // namespace

CleanResult clean_episode(const EpisodeRecord& e) {
  CleanResult r;
  e.validate();
  if (!e.success) {
    r.reason = "failure episode";
    return r;
  }

  const int len = e.length();
  // the static lead ends at the first step whose following delta is real motion
  int start = 0;
  while (start < len - 1 &&
         proprio_delta(e.z[static_cast<size_t>(start)], e.z[static_cast<size_t>(start) + 1]) <
             kStaticEps)
    ++start;

  const int trimmed = len - start;
  // the length floor applies to what survives trimming, else a long static
  // lead could smuggle a near-empty episode through
  if (trimmed < kMinCleanLength) {
    r.reason = "too short: " + std::to_string(trimmed) + " steps after trim";
    return r;
  }

  std::vector<int> idx;
  if (trimmed > kMaxCleanLength) {
    idx.reserve(kMaxCleanLength);
    for (int i = 0; i < kMaxCleanLength; ++i)
      idx.push_back(start + static_cast<int>(static_cast<int64_t>(i) * trimmed / kMaxCleanLength));
  } else {
    idx.reserve(static_cast<size_t>(trimmed));
    for (int i = start; i < len; ++i) idx.push_back(i);
  }

  r.accepted = true;
  r.episode = e;
  r.episode.z = take_indices(e.z, idx);
  r.episode.a = take_indices(e.a, idx);
  r.episode.images = take_indices(e.images, idx);
  return r;
}

std::vector<double> weight_datasets(const std::vector<int64_t>& sizes,
                                    const std::vector<double>& multipliers) {
  if (sizes.empty()) throw std::invalid_argument("no datasets to weight");
  if (!multipliers.empty() && multipliers.size() != sizes.size())
    throw std::invalid_argument("need one multiplier per dataset");
  std::vector<double> w(sizes.size());
  double total = 0.0;
  for (size_t j = 0; j < sizes.size(); ++j) {
    if (sizes[j] < 1) throw std::invalid_argument("dataset size must be >= 1");
    const double m = multipliers.empty() ? 1.0 : multipliers[j];
    if (m <= 0.0) throw std::invalid_argument("multipliers must be positive");
    w[j] = m * std::sqrt(static_cast<double>(sizes[j]));
    total += w[j];
  }
  for (double& x : w) x /= total;
  return w;
}

TrainingWindow extract_window(const EpisodeRecord& e, int t, int t_a, int t_img) {
  const int len = e.length();
  if (t < 0 || t >= len) throw std::out_of_range("window start outside episode");
  if (t_a < 1 || t_img < 1) throw std::invalid_argument("window extents must be positive");

  TrainingWindow w;
  w.frequency_hz = e.frequency_hz;
  w.image_size = e.image_size;
  w.views = e.views;
  w.proprio = pack_with_indicator(e.z[static_cast<size_t>(t)]);

  const size_t frame = static_cast<size_t>(e.views) * static_cast<size_t>(e.image_size) *
                       static_cast<size_t>(e.image_size);
  w.images.resize(static_cast<size_t>(t_img) * frame);
  for (int h = 0; h < t_img; ++h) {
    // history before the first frame repeats it
    const int src = std::max(0, t - (t_img - 1) + h);
    const auto& img = e.images[static_cast<size_t>(src)];
    for (size_t p = 0; p < frame; ++p)
      w.images[static_cast<size_t>(h) * frame + p] = static_cast<double>(img[p]) / 255.0;
  }

  w.chunk.reserve(static_cast<size_t>(t_a));
  for (int s = 0; s < t_a; ++s) {
    const int src = std::min(t + s, len - 1);  // past the end: hold the final action
    w.chunk.push_back(e.a[static_cast<size_t>(src)].values);
  }
  w.availability = e.a[static_cast<size_t>(t)].mask;
  return w;
}

void augment_proprio(std::array<double, 256>& pack, double snr_db, Rng& rng) {
  if (snr_db <= 0.0) throw std::invalid_argument("snr must be positive decibels");
  double sum2 = 0.0;
  int n = 0;
  for (size_t i = 0; i < 128; ++i)
    if (pack[128 + i] != 0.0) {
      sum2 += pack[i] * pack[i];
      ++n;
    }
  if (n == 0) return;
  const double sigma = std::sqrt(sum2 / n) * std::pow(10.0, -snr_db / 20.0);
  for (size_t i = 0; i < 128; ++i)
    if (pack[128 + i] != 0.0) pack[i] += sigma * rng.normal();
}

void augment_brightness(std::vector<double>& images, double jitter, Rng& rng) {
  if (jitter < 0.0 || jitter >= 1.0) throw std::invalid_argument("jitter must be in [0, 1)");
  if (images.empty()) return;
  // one factor per draw call covers the whole window; frames within a window
  // stay mutually consistent, matching a per-sample photometric transform
  const double f = rng.uniform(1.0 - jitter, 1.0 + jitter);
  for (double& v : images) v = std::clamp(v * f, 0.0, 1.0);
}

std::vector<int> choose_instruction(const InstructionVariants& v, const Vocabulary& vocab,
                                    Rng& rng) {
  if (v.original.empty() || v.expanded.empty() || v.simplified.empty())
    throw std::invalid_argument("instruction needs all three variant classes");
  const uint64_t cls = rng.uniform_int(3);
  std::string text;
  if (cls == 0)
    text = v.original;
  else if (cls == 1)
    text = v.expanded[rng.uniform_int(v.expanded.size())];
  else
    text = v.simplified;
  return vocab.encode(text);
}

DatasetManifest make_manifest(const std::vector<DatasetRef>& refs) {
  if (refs.empty()) throw std::invalid_argument("no datasets named");
  DatasetManifest m;
  std::vector<int64_t> sizes;
  std::vector<double> mult;
  for (const DatasetRef& r : refs) {
    std::ifstream in(r.path + "/manifest.json");
    if (!in) throw std::runtime_error("cannot open manifest in " + r.path);
    nlohmann::json j = nlohmann::json::parse(in);
    DatasetManifest::Entry e;
    e.name = r.name.empty() ? j.value("name", r.path) : r.name;
    e.path = r.path;
    for (const auto& ep : j.at("episodes")) e.files.push_back(ep.at("file").get<std::string>());
    e.episodes = static_cast<int64_t>(e.files.size());
    if (e.episodes == 0) throw std::runtime_error("dataset " + e.name + " lists no episodes");
    sizes.push_back(e.episodes);
    mult.push_back(r.multiplier);
    m.datasets.push_back(std::move(e));
  }
  m.weights = weight_datasets(sizes, mult);
  return m;
}

BatchLoader::BatchLoader(DatasetManifest manifest, LoaderConfig cfg)
    : manifest_(std::move(manifest)), cfg_(cfg), vocab_(builtin_vocabulary()) {
  if (cfg_.batch_size < 1 || cfg_.capacity < 1 || cfg_.producers < 1)
    throw std::invalid_argument("loader sizes must be positive");

  // decode and clean everything once; producers then sample purely in memory,
  // which keeps the deterministic stream independent of disk timing
  pool_.resize(manifest_.datasets.size());
  for (size_t d = 0; d < manifest_.datasets.size(); ++d) {
    const auto& entry = manifest_.datasets[d];
    for (const std::string& f : entry.files) {
      EpisodeRecord e;
      try {
        e = read_episode(entry.path + "/" + f);
      } catch (const std::exception&) {
        ++stats_.decode_failures;
        continue;
      }
      CleanResult c = clean_episode(e);
      if (!c.accepted) {
        ++stats_.rejected_episodes;
        continue;
      }
      pool_[d].push_back(std::move(c.episode));
    }
    if (pool_[d].empty())
      throw std::runtime_error("dataset " + entry.name + " has no usable episodes");
  }

  threads_.reserve(static_cast<size_t>(cfg_.producers));
  for (int i = 0; i < cfg_.producers; ++i)
    threads_.emplace_back(&BatchLoader::producer_loop, this, i);
}

BatchLoader::~BatchLoader() {
  {
    std::lock_guard<std::mutex> lk(mu_);
    closed_ = true;
  }
  can_push_.notify_all();
  can_pop_.notify_all();
  for (std::thread& t : threads_) t.join();
}

void BatchLoader::producer_loop(int index) {
  Rng rng(mix_seed(cfg_.seed, static_cast<uint64_t>(index), 0x70726f64ull));
  while (true) {
    // weighted dataset choice by inverse-cdf over the manifest weights
    const double u = rng.uniform();
    size_t d = 0;
    double acc = 0.0;
    for (; d + 1 < manifest_.weights.size(); ++d) {
      acc += manifest_.weights[d];
      if (u < acc) break;
    }
    const auto& eps = pool_[d];
    const EpisodeRecord& e = eps[rng.uniform_int(eps.size())];
    const int t = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(e.length())));

    TrainingWindow w = extract_window(e, t, cfg_.t_a, cfg_.t_img);
    w.dataset_index = static_cast<int>(d);
    w.instruction = choose_instruction(e.instructions, vocab_, rng);
    if (cfg_.augment) {
      augment_proprio(w.proprio, cfg_.snr_db, rng);
      augment_brightness(w.images, cfg_.brightness_jitter, rng);
    }

    std::unique_lock<std::mutex> lk(mu_);
    can_push_.wait(lk, [&] { return closed_ || queue_.size() < cfg_.capacity; });
    if (closed_) return;
    queue_.push_back(std::move(w));
    ++stats_.windows_emitted;
    lk.unlock();
    can_pop_.notify_one();
  }
}

TrainingWindow BatchLoader::next_window() {
  std::unique_lock<std::mutex> lk(mu_);
  can_pop_.wait(lk, [&] { return closed_ || !queue_.empty(); });
  if (queue_.empty()) throw std::runtime_error("loader closed");
  TrainingWindow w = std::move(queue_.front());
  queue_.pop_front();
  lk.unlock();
  can_push_.notify_one();
  return w;
}

SampleBatch BatchLoader::next_batch() {
  SampleBatch b;
  b.items.reserve(static_cast<size_t>(cfg_.batch_size));
  for (int i = 0; i < cfg_.batch_size; ++i) b.items.push_back(next_window());
  return b;
}

LoaderStats BatchLoader::stats() const {
  std::lock_guard<std::mutex> lk(mu_);
  return stats_;
}

}  // namespace dtp
