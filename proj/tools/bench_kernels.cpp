// Parallel kernels against their serial references.
#include <benchmark/benchmark.h>

#include <omp.h>

#include <random>
#include <vector>

#include "omcl/experiment.hpp"
#include "omcl/mcl.hpp"
#include "omcl/sim.hpp"

using namespace omcl;

namespace {

struct Fixture {
  World world;
  Sequence seq;
  ParticleSet particles;
  ObservationSample obs;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    SceneSpec spec;
    spec.extent = Vec3(10, 10, 3);
    spec.resolution = 0.05;
    spec.objects = {{"chair", 6}, {"table", 4}, {"plant", 4}};
    World w = make_world(spec, 7, 512, default_intrinsics());
    SequenceConfig sc;
    sc.steps = 2;
    Sequence seq = simulate_sequence(w, sc);
    Rng rng(1);
    ParticleSet ps = init_particles(GaussianInit{seq.ground_truth[0], 0.3, 17.0}, 256, rng);
    Rng srng(2);
    ObservationSample obs = build_sampling_masks(seq.frames[0], w.intr, w.map.db(), 512, srng);
    return Fixture{std::move(w), std::move(seq), std::move(ps), std::move(obs)};
  }();
  return f;
}

void BM_WeighParallel(benchmark::State& state) {
  const Fixture& f = fixture();
  omp_set_num_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(weigh(f.particles, f.obs, f.world.map, 20.0));
  state.SetItemsProcessed(state.iterations() * f.particles.size() * f.obs.size());
}

void BM_WeighSerial(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(weigh_serial(f.particles, f.obs, f.world.map, 20.0));
  state.SetItemsProcessed(state.iterations() * f.particles.size() * f.obs.size());
}

void BM_RaytraceFirstHit(benchmark::State& state) {
  const Fixture& f = fixture();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  std::vector<Vec3> dirs(4096);
  for (Vec3& d : dirs) d = Vec3(n(rng), n(rng), 0.3 * n(rng)).normalized();
  const Vec3 o = f.seq.ground_truth[0].translation();
  for (auto _ : state) benchmark::DoNotOptimize(f.world.map.raytrace_first_hit(o, dirs, 20.0));
  state.SetItemsProcessed(state.iterations() * dirs.size());
}

}  // namespace

BENCHMARK(BM_WeighParallel)->Arg(1)->Arg(omp_get_num_procs())->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WeighSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RaytraceFirstHit)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
