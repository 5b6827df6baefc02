#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <doctest.h>

#include "dtp/pipeline.hpp"
#include "dtp/sim.hpp"

using namespace dtp;

namespace {

// synthetic dual-arm episode with strictly moving proprioception
EpisodeRecord moving_episode(int len, uint64_t seed = 7, bool success = true) {
  const RobotSchema schema = planar_dual_schema();
  EpisodeRecord e;
  e.schema_id = schema.id;
  e.task = "grasp_cube";
  e.expert_mode = "right";
  e.frequency_hz = 5;
  e.image_size = 8;
  e.views = 3;
  e.success = success;
  e.instructions = grasp_instructions(Hand::either);
  Rng rng(seed);
  const auto need = schema.slot_mask();
  for (int t = 0; t < len; ++t) {
    UnifiedVector z, a;
    for (int i = 0; i < 128; ++i)
      if (need[static_cast<size_t>(i)]) {
        z.set(i, 0.01 * t + 0.001 * i);
        a.set(i, 0.01 * (t + 1) + 0.001 * i);
      }
    e.z.push_back(z);
    e.a.push_back(a);
    std::vector<uint8_t> img(3 * 8 * 8);
    for (auto& p : img) p = static_cast<uint8_t>(rng.uniform_int(256));
    e.images.push_back(std::move(img));
  }
  return e;
}

void freeze_lead(EpisodeRecord& e, int frames) {
  for (int t = 1; t < frames; ++t) {
    e.z[static_cast<size_t>(t)] = e.z[0];
    e.images[static_cast<size_t>(t)] = e.images[0];
  }
}

bool records_equal(const EpisodeRecord& a, const EpisodeRecord& b) {
  if (a.length() != b.length()) return false;
  for (int t = 0; t < a.length(); ++t) {
    const size_t s = static_cast<size_t>(t);
    if (a.z[s].values != b.z[s].values || a.z[s].mask != b.z[s].mask) return false;
    if (a.a[s].values != b.a[s].values || a.a[s].mask != b.a[s].mask) return false;
    if (a.images[s] != b.images[s]) return false;
  }
  return a.success == b.success && a.frequency_hz == b.frequency_hz;
}

bool windows_equal(const TrainingWindow& a, const TrainingWindow& b) {
  return a.proprio == b.proprio && a.images == b.images && a.chunk == b.chunk &&
         a.availability == b.availability && a.instruction == b.instruction &&
         a.frequency_hz == b.frequency_hz && a.dataset_index == b.dataset_index;
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("cleaning rejects failures and too-short episodes") {
  CHECK_FALSE(clean_episode(moving_episode(40, 1, false)).accepted);
  CHECK_FALSE(clean_episode(moving_episode(31)).accepted);
  CHECK(clean_episode(moving_episode(32)).accepted);

  // long enough on paper, but the static lead eats it below the floor
  EpisodeRecord e = moving_episode(40);
  freeze_lead(e, 10);
  CHECK_FALSE(clean_episode(e).accepted);
}

TEST_CASE("cleaning trims the static lead exactly") {
  EpisodeRecord e = moving_episode(60);
  freeze_lead(e, 11);  // steps 0..10 identical; first motion is 10 -> 11
  CleanResult r = clean_episode(e);
  REQUIRE(r.accepted);
  CHECK(r.episode.length() == 50);
  CHECK(r.episode.z[0].values == e.z[10].values);
  CHECK(r.episode.images[0] == e.images[10]);
}

TEST_CASE("cleaning downsamples over-long episodes to the cap") {
  EpisodeRecord e = moving_episode(5000);
  CleanResult r = clean_episode(e);
  REQUIRE(r.accepted);
  CHECK(r.episode.length() == 2048);
  CHECK(r.episode.z[0].values == e.z[0].values);
  // stride preserves order and spans the whole episode
  CHECK(r.episode.z[2047].values[0] == e.z[4997].values[0]);
  double prev = r.episode.z[0].values[0];
  for (int t = 1; t < 2048; ++t) {
    CHECK(r.episode.z[static_cast<size_t>(t)].values[0] > prev);
    prev = r.episode.z[static_cast<size_t>(t)].values[0];
  }
}

TEST_CASE("cleaning a cleaned episode changes nothing") {
  for (int len : {32, 200, 3000}) {
    EpisodeRecord e = moving_episode(len);
    if (len > 40) freeze_lead(e, 5);
    CleanResult once = clean_episode(e);
    REQUIRE(once.accepted);
    CleanResult twice = clean_episode(once.episode);
    REQUIRE(twice.accepted);
    CHECK(records_equal(once.episode, twice.episode));
  }
}

TEST_CASE("dataset weights follow square-root sizes") {
  auto w = weight_datasets({100, 400});
  CHECK(w[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  w = weight_datasets({7, 7, 7});
  for (double x : w) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  CHECK(weight_datasets({123})[0] == doctest::Approx(1.0).epsilon(1e-12));

  // multipliers rescale before normalization
  w = weight_datasets({100, 400}, {4.0, 1.0});
  CHECK(w[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  CHECK_THROWS_AS(weight_datasets({}), std::invalid_argument);
  CHECK_THROWS_AS(weight_datasets({0, 5}), std::invalid_argument);
  CHECK_THROWS_AS(weight_datasets({1, 2}, {1.0, -1.0}), std::invalid_argument);
}

TEST_CASE("window extraction duplicates history at the start and holds the last action") {
  EpisodeRecord e = moving_episode(40);
  const size_t frame = 3 * 8 * 8;

  TrainingWindow w0 = extract_window(e, 0, 4, 2);
  for (size_t p = 0; p < frame; ++p)
    CHECK(w0.images[p] == w0.images[frame + p]);  // t-1 duplicates frame 0

  TrainingWindow wi = extract_window(e, 10, 4, 2);
  for (size_t p = 0; p < frame; ++p) {
    CHECK(wi.images[p] == static_cast<double>(e.images[9][p]) / 255.0);
    CHECK(wi.images[frame + p] == static_cast<double>(e.images[10][p]) / 255.0);
  }
  for (int s = 0; s < 4; ++s) CHECK(wi.chunk[static_cast<size_t>(s)] == e.a[10 + s].values);
  CHECK(wi.proprio == pack_with_indicator(e.z[10]));
  CHECK(wi.availability == e.a[10].mask);

  TrainingWindow we = extract_window(e, 39, 6, 2);
  for (int s = 0; s < 6; ++s) CHECK(we.chunk[static_cast<size_t>(s)] == e.a[39].values);

  CHECK_THROWS_AS(extract_window(e, 40, 4, 2), std::out_of_range);
  CHECK_THROWS_AS(extract_window(e, -1, 4, 2), std::out_of_range);
}

TEST_CASE("proprioception noise hits the configured signal-to-noise ratio") {
  // populated slots all at 1.0: rms 1, so 40 dB means sigma 0.01
  UnifiedVector z;
  for (int i : {0, 1, 10, 50, 51, 60}) z.set(i, 1.0);
  const auto clean = pack_with_indicator(z);

  Rng rng(99);
  double sum = 0.0, sum2 = 0.0;
  int n = 0;
  for (int rep = 0; rep < 20000; ++rep) {
    auto pack = clean;
    augment_proprio(pack, 40.0, rng);
    for (size_t i = 0; i < 128; ++i) {
      if (pack[128 + i] == 0.0) {
        CHECK(pack[i] == 0.0);  // unpopulated slots untouched
      } else {
        const double d = pack[i] - clean[i];
        sum += d;
        sum2 += d * d;
        ++n;
      }
    }
    for (size_t i = 128; i < 256; ++i) CHECK(pack[i] == clean[i]);  // indicators untouched
  }
  const double mean = sum / n;
  const double sigma = std::sqrt(sum2 / n - mean * mean);
  CHECK(std::fabs(sigma - 0.01) < 0.01 * 0.05);
  CHECK(std::fabs(mean) < 0.001);

  // all-masked vector is a no-op
  auto empty_pack = pack_with_indicator(UnifiedVector{});
  auto before = empty_pack;
  augment_proprio(empty_pack, 40.0, rng);
  CHECK(empty_pack == before);
}

TEST_CASE("brightness jitter scales frames within bounds and stays in range") {
  std::vector<double> img(64, 0.5);
  img[0] = 0.999;
  Rng rng(3);
  double lo = 1e9, hi = -1e9;
  for (int rep = 0; rep < 2000; ++rep) {
    auto j = img;
    augment_brightness(j, 0.1, rng);
    const double f = j[5] / 0.5;
    lo = std::min(lo, f);
    hi = std::max(hi, f);
    for (double v : j) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    // one factor per window keeps frames mutually consistent
    CHECK(j[40] == doctest::Approx(0.5 * f).epsilon(1e-12));
  }
  CHECK(lo >= 0.9);
  CHECK(hi <= 1.1);
  CHECK(lo < 0.91);
  CHECK(hi > 1.09);
}

TEST_CASE("instruction choice is uniform over the three classes") {
  const InstructionVariants v = pour_instructions(Hand::left, Level::two_thirds);
  const Vocabulary vocab = builtin_vocabulary();
  const auto orig = vocab.encode(v.original);
  const auto simp = vocab.encode(v.simplified);
  std::set<std::vector<int>> expanded;
  for (const auto& s : v.expanded) expanded.insert(vocab.encode(s));

  Rng rng(123);
  int n_orig = 0, n_exp = 0, n_simp = 0;
  std::set<std::vector<int>> seen_expanded;
  const int n = 30000;
  for (int i = 0; i < n; ++i) {
    const auto tok = choose_instruction(v, vocab, rng);
    if (tok == orig)
      ++n_orig;
    else if (tok == simp)
      ++n_simp;
    else {
      REQUIRE(expanded.count(tok) == 1);
      seen_expanded.insert(tok);
      ++n_exp;
    }
  }
  CHECK(std::fabs(n_orig / double(n) - 1.0 / 3.0) < 0.01);
  CHECK(std::fabs(n_exp / double(n) - 1.0 / 3.0) < 0.01);
  CHECK(std::fabs(n_simp / double(n) - 1.0 / 3.0) < 0.01);
  CHECK(seen_expanded.size() == expanded.size());

  // deterministic under a fixed seed
  Rng r1(5), r2(5);
  for (int i = 0; i < 50; ++i)
    CHECK(choose_instruction(v, vocab, r1) == choose_instruction(v, vocab, r2));

  InstructionVariants broken = v;
  broken.expanded.clear();
  CHECK_THROWS_AS(choose_instruction(broken, vocab, rng), std::invalid_argument);
}

TEST_CASE("batch loader streams weighted, augmented, deterministic windows") {
  const auto root = fresh_dir("dtp_loader_test");

  // 12 vs 48 episodes: sqrt weights are exactly 1/3 and 2/3
  DatasetSpec a;
  a.out_dir = (root / "a").string();
  a.name = "small";
  a.task = TaskKind::grasp_cube;
  a.episodes = 12;
  a.seed = 21;
  DatasetSpec b = a;
  b.out_dir = (root / "b").string();
  b.name = "big";
  b.episodes = 48;
  b.seed = 22;
  REQUIRE(generate_dataset(a).failures == 0);
  REQUIRE(generate_dataset(b).failures == 0);

  DatasetManifest m = make_manifest({{"small", a.out_dir, 1.0}, {"big", b.out_dir, 1.0}});
  CHECK(m.weights[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(m.datasets[1].episodes == 48);

  LoaderConfig cfg;
  cfg.batch_size = 8;
  cfg.t_a = 8;
  cfg.seed = 77;
  int counts[2] = {0, 0};
  {
    BatchLoader loader(m, cfg);
    const int total = 10000;
    for (int i = 0; i < total; ++i) {
      TrainingWindow w = loader.next_window();
      ++counts[w.dataset_index];
      REQUIRE(w.chunk.size() == 8);
      REQUIRE(w.images.size() == size_t(2 * 3 * 32 * 32));
      CHECK((w.frequency_hz == 5.0 || w.frequency_hz == 10.0));
      CHECK_FALSE(w.instruction.empty());
      for (size_t i2 = 0; i2 < 128; ++i2)
        if (!w.availability[i2])
          for (const auto& step : w.chunk) CHECK(step[i2] == 0.0);
    }
    CHECK(std::fabs(counts[0] / 10000.0 - 1.0 / 3.0) < 0.02);
    CHECK(std::fabs(counts[1] / 10000.0 - 2.0 / 3.0) < 0.02);
    CHECK(loader.stats().decode_failures == 0);
    CHECK(loader.stats().rejected_episodes == 0);
  }

  // identical stream regardless of buffer capacity; batches group the stream
  LoaderConfig c1 = cfg;
  c1.capacity = 1;
  LoaderConfig c64 = cfg;
  c64.capacity = 64;
  BatchLoader l1(m, c1), l2(m, c64);
  for (int i = 0; i < 6; ++i) {
    SampleBatch b1 = l1.next_batch(), b2 = l2.next_batch();
    REQUIRE(b1.items.size() == 8);
    for (size_t j = 0; j < 8; ++j) CHECK(windows_equal(b1.items[j], b2.items[j]));
  }

  std::filesystem::remove_all(root);
}

TEST_CASE("loader counts undecodable and rejected episodes instead of dying") {
  const auto root = fresh_dir("dtp_loader_skips");
  DatasetSpec a;
  a.out_dir = root.string();
  a.name = "mixed";
  a.task = TaskKind::grasp_cube;
  a.episodes = 6;
  a.seed = 5;
  REQUIRE(generate_dataset(a).failures == 0);

  // truncate one file so decoding fails
  {
    std::ifstream in(root / "ep_00000.bin", std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
    std::ofstream out(root / "ep_00000.bin", std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  // relabel another as a failure so the cleaner rejects it
  {
    EpisodeRecord e = read_episode((root / "ep_00001.bin").string());
    e.success = false;
    write_episode((root / "ep_00001.bin").string(), e);
  }

  DatasetManifest m = make_manifest({{"mixed", root.string(), 1.0}});
  LoaderConfig cfg;
  cfg.batch_size = 2;
  cfg.t_a = 4;
  cfg.seed = 1;
  BatchLoader loader(m, cfg);
  CHECK(loader.stats().decode_failures == 1);
  CHECK(loader.stats().rejected_episodes == 1);
  SampleBatch sb = loader.next_batch();
  CHECK(sb.items.size() == 2);

  std::filesystem::remove_all(root);
}
