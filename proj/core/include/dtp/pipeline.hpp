#pragma once

#include <array>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "dtp/action_space.hpp"
#include "dtp/episode.hpp"
#include "dtp/rng.hpp"
#include "dtp/text.hpp"

namespace dtp {

// --- episode cleaning ---

// max per-populated-slot proprioception delta that still counts as "static"
constexpr double kStaticEps = 1e-4;
constexpr int kMinCleanLength = 32;
constexpr int kMaxCleanLength = 2048;

struct CleanResult {
  bool accepted = false;
  std::string reason;     // set when rejected
  EpisodeRecord episode;  // valid only when accepted
};

// Rejects failure-labeled episodes, trims the static lead, rejects episodes
// still shorter than kMinCleanLength after trimming, and stride-downsamples
// episodes longer than kMaxCleanLength. Idempotent on accepted output.
CleanResult clean_episode(const EpisodeRecord& e);

// --- dataset weighting ---

// p_j proportional to multiplier_j * sqrt(N_j), normalized to sum 1.
// multipliers may be empty (all 1) or one per dataset.
std::vector<double> weight_datasets(const std::vector<int64_t>& sizes,
                                    const std::vector<double>& multipliers = {});

// --- training windows ---

struct TrainingWindow {
  std::array<double, 256> proprio{};        // step-t state packed with indicator
  std::vector<double> images;               // t_img*views frames, each g*g, row-major in [0,1]
  std::vector<std::array<double, 128>> chunk;  // t_a future actions, tail repeats the last one
  std::array<uint8_t, 128> availability{};  // per-slot mask, shared by every chunk step
  std::vector<int> instruction;             // token ids in the builtin vocabulary
  double frequency_hz = 0.0;
  int image_size = 0;
  int views = 0;
  int dataset_index = 0;
};

// Slices one training item at step t: images from steps t-t_img+1..t (clamped
// to step 0), proprioception from t only, chunk a_{t..t+t_a-1} padded past the
// end by repeating the final action. Instruction is left empty.
TrainingWindow extract_window(const EpisodeRecord& e, int t, int t_a, int t_img = 2);

// Adds zero-mean Gaussian noise at the given signal-to-noise ratio to the
// populated value slots of a packed state; indicator half untouched.
void augment_proprio(std::array<double, 256>& pack, double snr_db, Rng& rng);

// Scales every frame's brightness by an independent factor in [1-jitter, 1+jitter],
// clamping back into [0,1].
void augment_brightness(std::vector<double>& images, double jitter, Rng& rng);

// Draws original / expanded / simplified with probability 1/3 each (uniform
// within the expanded list) and encodes it with the given vocabulary.
std::vector<int> choose_instruction(const InstructionVariants& v, const Vocabulary& vocab,
                                    Rng& rng);

// --- manifest ---

struct DatasetRef {
  std::string name;
  std::string path;        // directory holding manifest.json + episode files
  double multiplier = 1.0; // manual weight rescale applied before normalization
};

struct DatasetManifest {
  struct Entry {
    std::string name;
    std::string path;
    std::vector<std::string> files;  // episode files, relative to path
    int64_t episodes = 0;
  };
  std::vector<Entry> datasets;
  std::vector<double> weights;  // positive, sum to 1
};

// Reads each directory's manifest.json and computes sampling weights.
DatasetManifest make_manifest(const std::vector<DatasetRef>& refs);

// --- batch loader ---

struct LoaderConfig {
  int batch_size = 16;
  int t_a = 16;
  int t_img = 2;
  uint64_t seed = 0;
  size_t capacity = 64;  // bounded buffer size, in windows
  int producers = 1;     // determinism holds only for 1
  bool augment = true;
  double snr_db = 40.0;
  double brightness_jitter = 0.1;
};

struct LoaderStats {
  int64_t decode_failures = 0;    // files that failed to parse
  int64_t rejected_episodes = 0;  // episodes the cleaner refused
  int64_t windows_emitted = 0;
};

struct SampleBatch {
  std::vector<TrainingWindow> items;
};

// Producers decode + clean episodes once up front, then stream augmented
// windows through a bounded queue; the consumer assembles fixed-size batches.
// With one producer and a fixed seed the stream is byte-deterministic.
class BatchLoader {
 public:
  BatchLoader(DatasetManifest manifest, LoaderConfig cfg);
  ~BatchLoader();
  BatchLoader(const BatchLoader&) = delete;
  BatchLoader& operator=(const BatchLoader&) = delete;

  SampleBatch next_batch();      // blocks until batch_size windows arrive
  TrainingWindow next_window();  // blocks until one window arrives
  LoaderStats stats() const;

 private:
  void producer_loop(int index);

  DatasetManifest manifest_;
  LoaderConfig cfg_;
  Vocabulary vocab_;
  // episodes cleaned at startup, shared read-only by all producers
  std::vector<std::vector<EpisodeRecord>> pool_;
  LoaderStats stats_;

  mutable std::mutex mu_;
  std::condition_variable can_push_, can_pop_;
  std::deque<TrainingWindow> queue_;
  bool closed_ = false;
  std::vector<std::thread> threads_;
};

}  // namespace dtp
