// Microbenchmarks for the hot paths: dense numerics, the transformer
// forward/backward, the two samplers, rendering, and episode IO.
#include <benchmark/benchmark.h>

#include <filesystem>
#include <vector>

#include "dtp/diffusion.hpp"
#include "dtp/episode.hpp"
#include "dtp/graph.hpp"
#include "dtp/net.hpp"
#include "dtp/pipeline.hpp"
#include "dtp/sim.hpp"
#include "dtp/tensor.hpp"
#include "dtp/text.hpp"
#include "dtp/train.hpp"

namespace {

using namespace dtp;

Tensor random_tensor(std::vector<int64_t> shape, uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.normal();
  return t;
}

void bm_matmul(benchmark::State& state) {
  const int64_t n = state.range(0);
  const Tensor a = random_tensor({n, n}, 1);
  const Tensor b = random_tensor({n, n}, 2);
  for (auto _ : state) {
    Graph g(/*grad_enabled=*/false);
    Node* out = g.matmul(g.input(&a), g.input(&b));
    benchmark::DoNotOptimize(out->val->at(0));
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(bm_matmul)->Arg(64)->Arg(128)->Arg(256);

ModelConfig bench_model() {
  ModelConfig m;
  m.layers = 3;
  m.d_model = 64;
  m.heads = 4;
  m.t_a = 8;
  m.vocab = builtin_vocabulary().size();
  m.lang_embed = 32;
  m.image_size = 32;
  m.patch = 8;
  m.t_img = 1;
  m.views = 3;
  m.bands = 8;
  m.k_max = 1000;
  return m;
}

TrainingWindow bench_window(const ModelConfig& m) {
  TrainingWindow w;
  Rng rng(7);
  for (double& v : w.proprio) v = rng.normal();
  w.images.resize(static_cast<size_t>(m.t_img) * m.views * m.image_size * m.image_size);
  for (double& v : w.images) v = rng.uniform();
  w.availability.fill(0);
  for (int j : {0, 1, 10, 50, 51, 60}) w.availability[static_cast<size_t>(j)] = 1;
  w.instruction = builtin_vocabulary().encode("grasp the cube");
  w.frequency_hz = 10.0;
  w.image_size = m.image_size;
  w.views = m.views;
  w.chunk.resize(static_cast<size_t>(m.t_a));
  for (auto& row : w.chunk)
    for (int j : {0, 1, 10, 50, 51, 60}) row[static_cast<size_t>(j)] = rng.normal();
  return w;
}

void bm_forward(benchmark::State& state) {
  const ModelConfig m = bench_model();
  ParameterSet ps = init_params(m, 3);
  const TrainingWindow w = bench_window(m);
  const Denoiser f = make_net_denoiser(ps, m, w);
  const Tensor noisy = random_tensor({m.t_a, 128}, 11);
  for (auto _ : state) {
    const Tensor out = f(noisy, m.k_max / 2);
    benchmark::DoNotOptimize(out.at(0));
  }
}
BENCHMARK(bm_forward);

void bm_train_step(benchmark::State& state) {
  const ModelConfig m = bench_model();
  ParameterSet ps = init_params(m, 3);
  const TrainingWindow w = bench_window(m);
  std::vector<Tensor> grads(ps.size());
  for (size_t i = 0; i < ps.size(); ++i) grads[i] = Tensor(ps.tensor(i).shape);
  Rng rng(5);
  for (auto _ : state) {
    Graph g(/*grad_enabled=*/true);
    Node* loss = training_loss_graph(g, ps, m, w, rng);
    g.backward(loss);
    g.add_param_grads(grads);
    benchmark::DoNotOptimize(loss->val->at(0));
  }
}
BENCHMARK(bm_train_step);

void bm_sample(benchmark::State& state) {
  const ModelConfig m = bench_model();
  ParameterSet ps = init_params(m, 3);
  const TrainingWindow w = bench_window(m);
  const Denoiser f = make_net_denoiser(ps, m, w);
  const NoiseSchedule ns = NoiseSchedule::squared_cosine(m.k_max);
  const int steps = static_cast<int>(state.range(0));
  Rng rng(13);
  for (auto _ : state) {
    const Tensor out = sample_fast(f, {m.t_a, 128}, ns, steps, rng);
    benchmark::DoNotOptimize(out.at(0));
  }
}
BENCHMARK(bm_sample)->Arg(1)->Arg(5)->Arg(20);

void bm_render(benchmark::State& state) {
  const RobotSchema schema = planar_dual_schema();
  TaskSpec task;
  task.kind = TaskKind::grasp_cube;
  task.hand = Hand::either;
  const WorldState s = reset(task, 3);
  const int g = static_cast<int>(state.range(0));
  std::vector<uint8_t> img;
  for (auto _ : state) {
    render_views(s, schema, g, img);
    benchmark::DoNotOptimize(img.data());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<int64_t>(img.size()));
}
BENCHMARK(bm_render)->Arg(32)->Arg(64);

void bm_episode_io(benchmark::State& state) {
  const RobotSchema schema = planar_dual_schema();
  TaskSpec task;
  task.kind = TaskKind::grasp_cube;
  task.hand = Hand::either;
  const EpisodeRecord e = run_expert_episode(task, Hand::right, schema, 10, 32, 21);
  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / "dtp_bench_episode.bin";
  for (auto _ : state) {
    write_episode(path.string(), e);
    const EpisodeRecord back = read_episode(path.string());
    benchmark::DoNotOptimize(back.length());
  }
  std::filesystem::remove(path);
}
BENCHMARK(bm_episode_io);

}  // namespace

BENCHMARK_MAIN();
