// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only
// when every selected criterion passes. `--only 1,4` restricts the run.
#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "omcl/errors.hpp"
#include "omcl/eval.hpp"
#include "omcl/experiment.hpp"
#include "omcl/mcl.hpp"
#include "omcl/sim.hpp"
#include "oracles.hpp"

using namespace omcl;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Every ApeStats produced by any criterion, checked again by criterion 10.
std::vector<ApeStats> g_emitted;

void record(const TrackingRun& r) {
  g_emitted.push_back(r.ape);
  g_emitted.push_back(r.final_ape);
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("omcl_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool same_poses(const std::vector<Pose>& a, const std::vector<Pose>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].translation() != b[i].translation()) return false;
    if (a[i].rotation().coeffs() != b[i].rotation().coeffs()) return false;
  }
  return true;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

const char* kObjectLabels[] = {"chair", "table", "sofa", "bed", "cabinet", "plant", "tv", "lamp", "shelf", "desk"};

// ------------------------------------------------------------------ 1

Outcome ray_tracer_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  std::uniform_real_distribution<double> density(0.005, 0.05);
  fixture::RayComparison total;
  double trace_seconds = 0.0;
  for (int s = 0; s < 20; ++s) {
    const fixture::OccupancyScene scene = fixture::random_occupancy(rng, 64, density(rng));
    std::mt19937_64 ray_rng(rng());
    const auto c = fixture::compare_with_march(scene, ray_rng, 10000);
    total.compared += c.compared;
    total.excluded += c.excluded;
    total.mismatches += c.mismatches;

    // Library-only timing over the same ray distribution.
    std::mt19937_64 again(ray_rng());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n;
    const double extent = scene.side * scene.resolution;
    const auto tt = Clock::now();
    std::size_t hits = 0;
    for (int r = 0; r < 10000; ++r) {
      const Vec3 o = scene.origin + extent * Vec3(u(again), u(again), u(again));
      const Vec3 d = Vec3(n(again), n(again), n(again)).normalized();
      hits += scene.map.trace(o, d, fixture::exit_distance(scene, o, d)).hit;
    }
    trace_seconds += seconds_since(tt);
    if (hits == 0) return {false, "a scene produced no hits"};
  }
  const double total_seconds = seconds_since(t0);
  const bool pass = total.mismatches == 0 && total.compared > 0 && total_seconds < 60.0;
  return {pass, fmt("20 scenes x 1e4 rays: %zu compared, %zu excluded by tolerance, %zu mismatches; "
                    "%.1f s total including oracle, %.2f s tracer only",
                    total.compared, total.excluded, total.mismatches, total_seconds, trace_seconds)};
}

// ------------------------------------------------------------------ 2

Outcome weigh_equivalence() {
  std::mt19937_64 rng(2002);
  std::uniform_real_distribution<double> u(0.0, 1.0), density(0.01, 0.08);
  std::normal_distribution<double> n;
  double worst = 0.0;
  std::size_t rejected = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const fixture::OccupancyScene scene = fixture::random_occupancy(rng, 32, density(rng));
    const double extent = scene.side * scene.resolution;
    const std::size_t n_particles = 16 + rng() % 113, n_rays = 8 + rng() % 185;

    ParticleSet ps;
    double total = 0.0;
    for (std::size_t i = 0; i < n_particles; ++i) {
      const Vec3 t = scene.origin + extent * Vec3(u(rng), u(rng), u(rng));
      const Quat q(n(rng), n(rng), n(rng), n(rng));
      const double w = 0.05 + u(rng);
      ps.particles.push_back({Pose(t, q), w});
      total += w;
    }
    for (Particle& p : ps.particles) p.weight /= total;

    ObservationSample obs;
    obs.dim = scene.map.dim();
    for (std::size_t j = 0; j < n_rays; ++j) {
      obs.pixels.push_back({static_cast<std::uint32_t>(j), 0});
      obs.directions.push_back(Vec3(n(rng), n(rng), n(rng)).normalized());
      const FeatureVec f = fixture::random_unit(rng, obs.dim);
      obs.features.insert(obs.features.end(), f.values().begin(), f.values().end());
      obs.cluster.push_back(0);
    }
    // Mixing in copies of DB entries makes some similarities large.
    for (std::size_t j = 0; j < n_rays; j += 3) {
      const auto e = scene.map.db().entry(rng() % scene.map.db().size());
      std::copy(e.begin(), e.end(), obs.features.begin() + static_cast<std::ptrdiff_t>(j * obs.dim));
    }

    const double max_range = 0.3 + 2.0 * extent * u(rng);
    const WeighResult got = weigh(ps, obs, scene.map, max_range);

    std::vector<double> prior;
    for (const Particle& p : ps.particles) prior.push_back(p.weight);
    std::vector<std::vector<float>> pixel;
    for (std::size_t j = 0; j < n_rays; ++j) {
      const auto f = obs.feature(j);
      pixel.emplace_back(f.begin(), f.end());
    }
    auto cast = [&](std::size_t i, std::size_t j) -> std::optional<std::uint32_t> {
      const Eigen::Matrix4d m = oracle::pose_matrix(ps.particles[i].pose);
      const Vec3 dir = m.block<3, 3>(0, 0) * optical_to_body() * obs.directions[j];
      const RayHit h = scene.map.trace(m.block<3, 1>(0, 3), dir, max_range);
      if (!h.hit) return std::nullopt;
      return h.feature_index;
    };
    std::vector<double> like;
    const std::vector<double> want = oracle::scalar_weights(prior, n_rays, pixel, scene.map.db(), cast, &like);
    rejected += got.rejected;
    for (std::size_t i = 0; i < n_particles; ++i) {
      worst = std::max(worst, std::abs(got.particles.particles[i].weight - want[i]));
      worst = std::max(worst, std::abs(got.likelihood[i] - like[i]));
    }
  }
  return {worst <= 1e-6, fmt("100 instances, max |weight or likelihood difference| = %.3g (%zu all-zero resets)",
                             worst, rejected)};
}

// ------------------------------------------------------------------ 3

Outcome feature_db_invariant() {
  std::mt19937_64 rng(3003);
  std::uniform_real_distribution<double> tau_d(0.0, 1.2);
  std::size_t violations = 0, disagreements = 0, entries = 0;
  for (int trial = 0; trial < 100000; ++trial) {
    const double tau = tau_d(rng);
    const std::size_t dim = 2 + rng() % 15, len = 1 + rng() % 40;
    std::vector<FeatureVec> stream;
    for (std::size_t i = 0; i < len; ++i) {
      // Occasional near-duplicates exercise the merge path.
      if (i > 0 && rng() % 4 == 0) {
        const auto& base = stream[rng() % stream.size()];
        std::normal_distribution<double> jitter(0.0, 0.05);
        std::vector<double> v(dim);
        for (std::size_t k = 0; k < dim; ++k) v[k] = base[k] + jitter(rng);
        stream.push_back(FeatureVec::normalized(v));
      } else {
        stream.push_back(fixture::random_unit(rng, dim));
      }
    }
    const FeatureDbBuild b = build_feature_db_with_assignment(stream, tau);
    entries += b.db.size();
    if (!(oracle::min_pairwise_distance(b.db) > tau)) ++violations;
    const oracle::GreedyDb g = oracle::greedy_db(stream, tau);
    bool same = g.members.size() == b.db.size() && g.assignment == b.assignment;
    for (std::size_t m = 0; same && m < g.members.size(); ++m) {
      const auto e = b.db.entry(m);
      same = std::equal(e.begin(), e.end(), stream[g.members[m]].values().begin());
    }
    if (!same) ++disagreements;
  }
  return {violations == 0 && disagreements == 0,
          fmt("1e5 trials (%zu entries): %zu invariant violations, %zu oracle disagreements", entries, violations,
              disagreements)};
}

// ------------------------------------------------------------------ 4

constexpr std::size_t kDim = 512;
constexpr std::uint64_t kEncoderSeed = 7;

SceneSpec large_scene_spec() {
  SceneSpec s;
  s.extent = Vec3(20.0, 20.0, 3.0);
  s.resolution = 0.05;
  s.rooms_x = 3;
  s.rooms_y = 3;
  s.ceiling = true;
  s.seed = 11;
  for (const char* l : kObjectLabels) {
    ObjectClassSpec o;
    o.label = l;
    o.count = 4;
    s.objects.push_back(o);
  }
  return s;
}

// Per-component feature noise for a target ratio sigma·sqrt(dim).
double noise_for(double scaled) { return scaled / std::sqrt(static_cast<double>(kDim)); }

double sequence_consistency(const World& w, const Sequence& seq) {
  std::vector<ObservedFrame> frames;
  for (std::size_t k = 0; k < seq.frames.size(); ++k) frames.push_back({seq.ground_truth[k], &seq.frames[k]});
  return consistency_metrics(w.map, frames, w.intr, 256).accuracy;
}

Outcome tracking_convergence() {
  const World w = make_world(large_scene_spec(), kEncoderSeed, kDim, default_intrinsics());
  const double sigma = noise_for(4.0);
  std::vector<double> finals, consistency;
  std::size_t lost = 0;
  double slowest = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto t0 = Clock::now();
    TrackingConfig tc;
    tc.sequence.steps = 60;
    tc.sequence.seed = seed;
    tc.sequence.feature_noise_sigma = sigma;
    tc.sequence.odometry_noise = MotionNoise{0.10, 6.0};
    tc.mcl.particles = 1024;
    tc.mcl.rays = 2048;
    tc.mcl.motion = MotionNoise{0.10, 6.0};
    tc.mcl.seed = 1000 + seed;
    tc.planar = true;
    const Sequence seq = simulate_sequence(w, tc.sequence);
    const TrackingRun r = track_sequence(w, seq, tc);
    const double run_seconds = seconds_since(t0);
    record(r);
    finals.push_back(r.final_ape.rmse);
    consistency.push_back(sequence_consistency(w, seq));
    lost += r.track_lost;
    slowest = std::max(slowest, run_seconds);
    per_seed += fmt(" %.3f%s", r.final_ape.rmse, r.track_lost ? "(lost)" : "");
    std::printf("  [4] seed %2llu final RMSE %.3f m, consistency %.1f%%, %.0f s%s\n",
                static_cast<unsigned long long>(seed), r.final_ape.rmse, consistency.back(), run_seconds,
                r.track_lost ? ", track lost" : "");
    std::fflush(stdout);
  }
  double sq = 0.0;
  for (double f : finals) sq += f * f;
  const double pooled = std::sqrt(sq / static_cast<double>(finals.size()));
  const double worst = *std::max_element(finals.begin(), finals.end());
  const double min_cons = *std::min_element(consistency.begin(), consistency.end());
  const bool pass = worst <= 0.15 && lost == 0 && min_cons >= 80.0 && slowest <= 300.0;
  return {pass, fmt("final-segment RMSE per seed [m]:%s; worst %.3f, pooled %.3f (limit 0.15); %zu/10 lost; "
                    "consistency >= %.1f%%; slowest run %.0f s",
                    per_seed.c_str(), worst, pooled, lost, min_cons, slowest)};
}

// ------------------------------------------------------------------ 5

SceneSpec medium_scene_spec(std::uint64_t seed) {
  SceneSpec s;
  s.extent = Vec3(10.0, 10.0, 3.0);
  s.resolution = 0.05;
  s.rooms_x = 2;
  s.rooms_y = 2;
  s.ceiling = true;
  s.seed = seed;
  for (const char* l : kObjectLabels) {
    ObjectClassSpec o;
    o.label = l;
    o.count = 2;
    s.objects.push_back(o);
  }
  return s;
}

Outcome consistency_trend() {
  const World w = make_world(medium_scene_spec(5), kEncoderSeed, kDim, default_intrinsics());
  const double levels[] = {0.0, 128.0, 1024.0};
  std::size_t ordered = 0;
  std::vector<double> mean_cons(3, 0.0), mean_ape(3, 0.0);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    double cons[3], ape[3];
    for (int l = 0; l < 3; ++l) {
      TrackingConfig tc;
      tc.sequence.steps = 40;
      tc.sequence.seed = seed;
      tc.sequence.feature_noise_sigma = noise_for(levels[l]);
      tc.mcl.particles = 256;
      tc.mcl.rays = 512;
      tc.mcl.seed = 500 + seed;
      tc.planar = true;
      tc.warmup = 10;
      const Sequence seq = simulate_sequence(w, tc.sequence);
      const TrackingRun r = track_sequence(w, seq, tc);
      record(r);
      cons[l] = sequence_consistency(w, seq);
      ape[l] = r.ape.mean;
      mean_cons[l] += cons[l] / 10.0;
      mean_ape[l] += ape[l] / 10.0;
    }
    // Order the levels by measured consistency, highest first.
    int idx[3] = {0, 1, 2};
    std::sort(idx, idx + 3, [&](int a, int b) { return cons[a] > cons[b]; });
    const bool ok = ape[idx[0]] <= ape[idx[1]] && ape[idx[1]] <= ape[idx[2]];
    ordered += ok;
    std::printf("  [5] seed %2llu consistency %.1f/%.1f/%.1f%% -> mean APE %.3f/%.3f/%.3f m %s\n",
                static_cast<unsigned long long>(seed), cons[0], cons[1], cons[2], ape[0], ape[1], ape[2],
                ok ? "ordered" : "NOT ordered");
    std::fflush(stdout);
  }
  return {ordered >= 9, fmt("%zu/10 sweeps ordered (need 9); mean consistency %.1f/%.1f/%.1f%%, mean APE "
                            "%.3f/%.3f/%.3f m",
                            ordered, mean_cons[0], mean_cons[1], mean_cons[2], mean_ape[0], mean_ape[1],
                            mean_ape[2])};
}

// ------------------------------------------------------------------ 6

SceneSpec four_room_spec() {
  SceneSpec s;
  s.extent = Vec3(20.0, 20.0, 3.0);
  s.resolution = 0.05;
  s.rooms_x = 2;
  s.rooms_y = 2;
  s.ceiling = true;
  s.seed = 21;
  // Three classes per room, none shared between rooms.
  const char* labels[] = {"chair", "table", "sofa", "bed", "cabinet", "plant",
                          "tv",    "lamp",  "shelf", "desk", "sink", "stool"};
  for (int room = 0; room < 4; ++room)
    for (int c = 0; c < 3; ++c) {
      ObjectClassSpec o;
      o.label = labels[3 * room + c];
      o.count = 4;
      o.room = room;
      s.objects.push_back(o);
    }
  return s;
}

constexpr std::size_t kGlobalSteps = 80;

Outcome prompt_speedup() {
  const World w = make_world(four_room_spec(), kEncoderSeed, kDim, default_intrinsics());
  const std::vector<double> thresholds{1.0, 0.5, 0.25, 0.1};
  const std::size_t nt = thresholds.size();
  // steps[init][threshold]; a run that never converges counts as the full length.
  std::vector<std::vector<std::vector<double>>> steps(2, std::vector<std::vector<double>>(nt));
  std::size_t never[2] = {0, 0};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    for (int m = 0; m < 2; ++m) {
      GlobalConfig gc;
      gc.sequence.steps = kGlobalSteps;
      gc.sequence.seed = seed;
      gc.mcl.particles = 1024;
      gc.mcl.rays = 1024;
      gc.mcl.seed = 700 + seed;
      gc.init = m == 0 ? GlobalInit::kUniform : GlobalInit::kPrompt;
      gc.thresholds = thresholds;
      const GlobalRun g = run_global(w, gc);
      record(g.run);
      std::string line;
      for (std::size_t t = 0; t < nt; ++t) {
        const auto& c = g.convergence[t];
        steps[m][t].push_back(c ? static_cast<double>(*c) : static_cast<double>(kGlobalSteps));
        line += c ? fmt(" %zu", *c) : std::string(" -");
      }
      never[m] += !g.convergence[nt - 1];
      std::printf("  [6] seed %2llu %s steps to 1/0.5/0.25/0.1 m:%s%s\n", static_cast<unsigned long long>(seed),
                  m == 0 ? "uniform" : "prompt ", line.c_str(), g.prompt_fallback ? " (prompt fallback)" : "");
      std::fflush(stdout);
    }
  }
  std::string coarse;
  for (std::size_t t = 0; t + 1 < nt; ++t)
    coarse += fmt(" %.2g m %.1f/%.1f;", thresholds[t], median(steps[1][t]), median(steps[0][t]));
  const double mu = median(steps[0][nt - 1]), mp = median(steps[1][nt - 1]);
  const bool pass = mp <= 0.67 * mu;
  return {pass, fmt("median steps to 0.1 m: prompt %.1f, uniform %.1f, ratio %.2f (limit 0.67); "
                    "unconverged at 0.1 m: prompt %zu, uniform %zu (counted as %zu); "
                    "other thresholds prompt/uniform:%s",
                    mp, mu, mu > 0 ? mp / mu : 0.0, never[1], never[0], kGlobalSteps, coarse.c_str())};
}

// ------------------------------------------------------------------ 7

Outcome stratified_ablation() {
  const World w = make_world(medium_scene_spec(9), kEncoderSeed, kDim, default_intrinsics());
  double strat = 0.0, unif = 0.0;
  std::size_t strat_wins = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    TrackingConfig tc;
    tc.sequence.steps = 50;
    tc.sequence.seed = seed;
    tc.mcl.particles = 512;
    tc.mcl.rays = 256;
    tc.mcl.seed = 900 + seed;
    tc.planar = true;
    const Sequence seq = simulate_sequence(w, tc.sequence);
    double ape[2];
    for (int s = 0; s < 2; ++s) {
      tc.mcl.sampling = s == 0 ? SamplingStrategy::kStratified : SamplingStrategy::kUniform;
      const TrackingRun r = track_sequence(w, seq, tc);
      record(r);
      ape[s] = r.ape.mean;
    }
    strat += ape[0] / 10.0;
    unif += ape[1] / 10.0;
    strat_wins += ape[0] <= ape[1];
    std::printf("  [7] seed %2llu mean APE stratified %.3f m, uniform %.3f m\n",
                static_cast<unsigned long long>(seed), ape[0], ape[1]);
    std::fflush(stdout);
  }
  return {strat <= unif, fmt("256 rays, 10 paired seeds: mean APE stratified %.3f m, uniform %.3f m "
                             "(stratified better or equal in %zu/10)",
                             strat, unif, strat_wins)};
}

// ------------------------------------------------------------------ 8

struct PipelineOutput {
  DenseScene scene;
  std::string map_bytes;
  std::vector<float> frame_values;
  std::vector<Pose> odometry;
  std::vector<Pose> tracking;
  std::vector<Pose> tracking_uniform;
  std::vector<Pose> global;
  std::vector<Pose> global_prompt;
  std::string diagnostics;
  std::string runs_csv, results_csv;
};

ExperimentConfig small_experiment(const fs::path& out) {
  ExperimentConfig cfg;
  cfg.scene = medium_scene_spec(3);
  cfg.scene.extent = Vec3(6.0, 6.0, 2.6);
  cfg.scene.resolution = 0.1;
  for (auto& o : cfg.scene.objects) o.count = 1;
  cfg.dim = 32;
  cfg.steps = 8;
  cfg.seeds = {1, 2};
  cfg.feature_noise = {0.0, 0.05};
  cfg.particles = {64};
  cfg.rays = {64, 128};
  cfg.output_dir = out;
  return cfg;
}

PipelineOutput run_pipeline(int threads) {
  omp_set_num_threads(threads);
  PipelineOutput o;
  const World w = make_world(medium_scene_spec(3), kEncoderSeed, 64, default_intrinsics());
  o.scene = w.scene;
  const fs::path dir = scratch_dir("determinism_" + std::to_string(threads));
  save_map(w.map, dir / "map.omcl");
  o.map_bytes = slurp(dir / "map.omcl");

  SequenceConfig sc;
  sc.steps = 12;
  sc.seed = 4;
  sc.feature_noise_sigma = 0.05;
  const Sequence seq = simulate_sequence(w, sc);
  for (const auto& f : seq.frames) o.frame_values.insert(o.frame_values.end(), f.data.begin(), f.data.end());
  o.odometry = seq.odometry;

  TrackingConfig tc;
  tc.sequence = sc;
  tc.mcl.particles = 128;
  tc.mcl.rays = 256;
  tc.mcl.seed = 17;
  o.tracking = track_sequence(w, seq, tc).estimates;
  for (const auto& d : track_sequence(w, seq, tc).diagnostics) o.diagnostics += diagnostics_csv_row(d) + "\n";
  tc.mcl.sampling = SamplingStrategy::kUniform;
  tc.planar = true;
  o.tracking_uniform = track_sequence(w, seq, tc).estimates;

  GlobalConfig gc;
  gc.sequence = sc;
  gc.mcl = tc.mcl;
  gc.init = GlobalInit::kUniform;
  o.global = run_global(w, gc).run.estimates;
  gc.init = GlobalInit::kPrompt;
  o.global_prompt = run_global(w, gc).run.estimates;

  const ExperimentReport rep = run_experiment(small_experiment(dir / "report"));
  for (const SweepCell& c : rep.cells) {
    g_emitted.push_back(c.ape);
    g_emitted.push_back(c.final_ape);
  }
  o.runs_csv = slurp(dir / "report" / "runs.csv");
  o.results_csv = slurp(dir / "report" / "results.csv");
  fs::remove_all(dir);
  return o;
}

Outcome determinism() {
  const int available = omp_get_max_threads();
  const int counts[] = {1, 3, 8};
  const PipelineOutput ref = run_pipeline(counts[0]);
  std::vector<std::string> diffs;
  for (int i = 1; i < 3; ++i) {
    const PipelineOutput o = run_pipeline(counts[i]);
    auto check = [&](bool same, const char* what) {
      if (!same) diffs.push_back(fmt("%s differs at %d threads", what, counts[i]));
    };
    check(o.scene == ref.scene, "scene");
    check(o.map_bytes == ref.map_bytes, "saved map");
    check(o.frame_values == ref.frame_values, "rendered frames");
    check(same_poses(o.odometry, ref.odometry), "odometry");
    check(same_poses(o.tracking, ref.tracking), "tracking estimates");
    check(o.diagnostics == ref.diagnostics, "diagnostics");
    check(same_poses(o.tracking_uniform, ref.tracking_uniform), "planar uniform-sampling estimates");
    check(same_poses(o.global, ref.global), "uniform global estimates");
    check(same_poses(o.global_prompt, ref.global_prompt), "prompt global estimates");
    check(o.runs_csv == ref.runs_csv, "runs.csv");
    check(o.results_csv == ref.results_csv, "results.csv");
  }
  omp_set_num_threads(available);
  std::string detail = "scene, map file, frames, odometry, tracking, global runs and sweep reports at 1/3/8 threads: ";
  if (diffs.empty()) {
    detail += "all bitwise identical";
  } else {
    for (const auto& d : diffs) detail += d + "; ";
  }
  return {diffs.empty(), detail};
}

// ------------------------------------------------------------------ 9

Outcome serialization() {
  std::mt19937_64 rng(9009);
  std::uniform_real_distribution<double> density(0.0, 0.1);
  const fs::path dir = scratch_dir("serialization");
  std::size_t failures = 0, voxels = 0;
  for (int m = 0; m < 100; ++m) {
    OctreeLanguageMap map{1.0, Vec3::Zero(), 1};
    if (m % 10 == 9) {
      // Some maps carry grounded labels.
      SceneSpec s = medium_scene_spec(100 + m);
      s.extent = Vec3(5.0, 5.0, 2.4);
      s.resolution = 0.1;
      s.rooms_x = s.rooms_y = 1;
      s.objects.resize(4);
      for (auto& o : s.objects) o.count = 1;
      const DenseScene scene = generate_scene(s);
      map = build_scene_map(scene, kEncoderSeed, 16, 0.05);
      const GroundingResult g = ground_db(map.db(), scene.labels(), kEncoderSeed, 0.5);
      map.apply_grounding_remap(g.remap, g.grounded);
    } else {
      map = fixture::random_occupancy(rng, 8 + static_cast<int>(rng() % 57), density(rng)).map;
    }
    voxels += map.voxel_count();
    const fs::path p = dir / ("map" + std::to_string(m) + ".omcl");
    save_map(map, p);
    const OctreeLanguageMap back = load_map(p);
    save_map(back, dir / "again.omcl");
    if (!(back == map) || slurp(p) != slurp(dir / "again.omcl")) ++failures;
  }
  // Corrupt the magic of a valid file.
  std::string bytes = slurp(dir / "map0.omcl");
  bytes[0] = static_cast<char>(bytes[0] ^ 0x5a);
  {
    std::ofstream out(dir / "bad.omcl", std::ios::binary);
    out << bytes;
  }
  bool rejected = false;
  try {
    (void)load_map(dir / "bad.omcl");
  } catch (const FormatError&) {
    rejected = true;
  } catch (const std::exception&) {
  }
  fs::remove_all(dir);
  return {failures == 0 && rejected,
          fmt("100 maps (%zu voxels): %zu round-trip failures; corrupted magic %s", voxels, failures,
              rejected ? "rejected with FormatError" : "NOT rejected with FormatError")};
}

// ------------------------------------------------------------------ 10

Outcome metric_consistency() {
  // A tracking run and a sweep of its own so the check never sees an empty set.
  const fs::path dir = scratch_dir("metrics");
  const ExperimentReport rep = run_experiment(small_experiment(dir));
  for (const SweepCell& c : rep.cells) {
    g_emitted.push_back(c.ape);
    g_emitted.push_back(c.final_ape);
  }
  fs::remove_all(dir);

  double worst = 0.0;
  for (const ApeStats& s : g_emitted) {
    const double r2 = s.rmse * s.rmse, m2 = s.mean * s.mean + s.std * s.std;
    const double n_r2 = static_cast<double>(s.count) * r2;
    if (r2 > 0) worst = std::max(worst, std::abs(r2 - m2) / r2);
    if (s.sse > 0 || n_r2 > 0) worst = std::max(worst, std::abs(s.sse - n_r2) / std::max(s.sse, n_r2));
  }

  ConfusionMatrix m(2);
  m.add(0, 0, 3);
  m.add(0, 1, 1);
  m.add(1, 0, 1);
  m.add(1, 1, 3);
  const ConsistencyStats c = consistency_from_confusion(m);
  const bool hand = c.accuracy == 75.0 && c.iou == 60.0;
  return {worst <= 1e-6 && hand, fmt("%zu ApeStats checked, worst relative identity residual %.3g; "
                                     "[[3,1],[1,3]] -> accuracy %.4g%% IoU %.4g%%",
                                     g_emitted.size(), worst, c.accuracy, c.iou)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"omcl acceptance suite"};
  std::vector<int> only;
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "ray-tracer oracle equivalence", ray_tracer_equivalence},
      {2, "weigh oracle equivalence", weigh_equivalence},
      {3, "feature DB invariant", feature_db_invariant},
      {4, "synthetic tracking convergence", tracking_convergence},
      {5, "consistency to accuracy trend", consistency_trend},
      {6, "prompt initialization speedup", prompt_speedup},
      {7, "stratified sampling ablation", stratified_ablation},
      {8, "determinism", determinism},
      {9, "serialization", serialization},
      {10, "metric self-consistency", metric_consistency},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
