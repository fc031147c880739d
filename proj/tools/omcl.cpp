// Command-line front end: simulation, mapping, localization and evaluation.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "omcl/errors.hpp"
#include "omcl/eval.hpp"
#include "omcl/experiment.hpp"
#include "omcl/langmap.hpp"
#include "omcl/mcl.hpp"
#include "omcl/prompt_init.hpp"
#include "omcl/sim.hpp"

namespace fs = std::filesystem;
using namespace omcl;

namespace {

// Sequence directory layout written by `simulate` and read by the filters:
//   camera.txt          width height fx fy cx cy
//   groundtruth.txt     trajectory (t tx ty tz qx qy qz qw)
//   odometry.txt        noisy odometry integrated from the ground-truth start
//   frame_NNNNN.omci    per-pixel features
//   points_NNNNN.txt    per-pixel first-hit point "x y z" ("nan nan nan" when void)

std::string frame_name(std::size_t k, const char* prefix, const char* ext) {
  std::ostringstream o;
  o << prefix << std::setw(5) << std::setfill('0') << k << ext;
  return o.str();
}

void write_camera(const fs::path& p, const CameraIntrinsics& c) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  out << std::setprecision(17) << c.width << " " << c.height << " " << c.fx << " " << c.fy << " " << c.cx << " "
      << c.cy << "\n";
}

CameraIntrinsics read_camera(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  CameraIntrinsics c;
  if (!(in >> c.width >> c.height >> c.fx >> c.fy >> c.cx >> c.cy))
    throw FormatError(p.string() + ": expected 'width height fx fy cx cy'");
  c.validate();
  return c;
}

void write_points(const fs::path& p, const std::vector<Vec3>& pts) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  out << std::setprecision(9);
  for (const Vec3& v : pts) {
    if (std::isfinite(v.x()))
      out << v.x() << " " << v.y() << " " << v.z() << "\n";
    else
      out << "nan nan nan\n";
  }
}

std::vector<Vec3> read_points(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  std::vector<Vec3> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const char* s = line.c_str();
    char* end = nullptr;
    double v[3];
    for (double& x : v) {
      x = std::strtod(s, &end);
      if (end == s) throw FormatError(p.string() + ":" + std::to_string(n) + ": expected three numbers");
      s = end;
    }
    out.emplace_back(v[0], v[1], v[2]);
  }
  return out;
}

std::vector<Pose> poses_of(const std::vector<StampedPose>& t) {
  std::vector<Pose> out;
  for (const auto& s : t) out.push_back(s.pose);
  return out;
}

std::vector<StampedPose> stamped(const std::vector<Pose>& poses) {
  std::vector<StampedPose> out;
  for (std::size_t k = 0; k < poses.size(); ++k) out.push_back({static_cast<double>(k), poses[k]});
  return out;
}

struct LoadedSequence {
  CameraIntrinsics intr;
  std::vector<Pose> odometry;  // absolute noisy poses
  std::vector<FeatureImage> frames;
};

LoadedSequence load_sequence(const fs::path& dir) {
  LoadedSequence s;
  s.intr = read_camera(dir / "camera.txt");
  s.odometry = poses_of(read_trajectory(dir / "odometry.txt"));
  if (s.odometry.empty()) throw FormatError((dir / "odometry.txt").string() + ": no poses");
  for (std::size_t k = 0; k < s.odometry.size(); ++k) {
    FeatureImage img = read_feature_image(dir / frame_name(k, "frame_", ".omci"));
    if (img.width != s.intr.width || img.height != s.intr.height)
      throw FormatError(frame_name(k, "frame_", ".omci") + ": size does not match camera.txt");
    s.frames.push_back(std::move(img));
  }
  return s;
}

std::vector<double> parse_numbers(const std::string& text, std::size_t expected, const char* what) {
  std::istringstream in(text);
  std::vector<double> v;
  double x;
  while (in >> x) v.push_back(x);
  if (v.size() != expected || !in.eof())
    throw InvalidArgument(std::string(what) + ": expected " + std::to_string(expected) + " numbers");
  return v;
}

struct FilterOptions {
  std::size_t particles = 1024;
  std::size_t rays = 2048;
  std::string sampling = "stratified";
  double motion_t = 0.10;
  double motion_r = 6.0;
  double ess = 0.5;
  double max_range = 20.0;
  std::size_t centroids = 0;
  std::uint64_t seed = 1;
  bool planar = false;

  MclConfig config() const {
    MclConfig c;
    c.particles = particles;
    c.rays = rays;
    if (sampling == "stratified") c.sampling = SamplingStrategy::kStratified;
    else if (sampling == "uniform") c.sampling = SamplingStrategy::kUniform;
    else throw InvalidArgument("--sampling: expected stratified or uniform");
    c.motion = {motion_t, motion_r};
    c.ess_fraction = ess;
    c.max_range = max_range;
    c.centroid_subset = centroids;
    c.seed = seed;
    return c;
  }
};

void add_filter_options(CLI::App* app, FilterOptions& f) {
  app->add_option("--particles", f.particles, "Number of particles")->capture_default_str();
  app->add_option("--rays", f.rays, "Ray budget per frame")->capture_default_str();
  app->add_option("--sampling", f.sampling, "Ray sampling: stratified or uniform")->capture_default_str();
  app->add_option("--motion-sigma-t", f.motion_t, "Prediction noise, translation (m)")->capture_default_str();
  app->add_option("--motion-sigma-r", f.motion_r, "Prediction noise, rotation (deg)")->capture_default_str();
  app->add_option("--ess-fraction", f.ess, "Resample when ESS < fraction * n")->capture_default_str();
  app->add_option("--max-range", f.max_range, "Ray-cast range (m)")->capture_default_str();
  app->add_option("--centroids", f.centroids, "Random DB subset used as cluster centroids (0: all)")
      ->capture_default_str();
  app->add_option("--seed", f.seed, "Filter master seed")->capture_default_str();
  app->add_flag("--planar", f.planar, "Floor-plan mode: fixed height, yaw only");
}

void write_outputs(const fs::path& estimates, const fs::path& diagnostics, const std::vector<Pose>& est,
                   const std::vector<StepDiagnostics>& diag) {
  write_trajectory(estimates, stamped(est));
  if (!diagnostics.empty()) {
    std::ofstream out(diagnostics);
    if (!out) throw IoError("cannot write " + diagnostics.string());
    out << diagnostics_csv_header() << "\n";
    for (const auto& d : diag) out << diagnostics_csv_row(d) << "\n";
  }
}

std::vector<Pose> run_filter(const OctreeLanguageMap& map, const LoadedSequence& seq, const MclConfig& mcl,
                             ParticleSet ps, std::vector<StepDiagnostics>& diag) {
  std::vector<Pose> est;
  for (std::size_t k = 0; k < seq.frames.size(); ++k) {
    const Pose delta = k == 0 ? Pose::identity() : compose_pose(seq.odometry[k - 1].inverse(), seq.odometry[k]);
    StepResult r = mcl_step(ps, delta, seq.frames[k], seq.intr, map, mcl, k);
    ps = std::move(r.particles);
    est.push_back(r.estimate);
    diag.push_back(r.diagnostics);
  }
  return est;
}

std::string fmt_stats(const ApeStats& s) {
  std::ostringstream o;
  o << std::setprecision(6) << "rmse " << s.rmse << "\nstd " << s.std << "\nmean " << s.mean << "\nmedian "
    << s.median << "\nmin " << s.min << "\nmax " << s.max << "\nsse " << s.sse << "\ncount " << s.count << "\n";
  return o.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-vocabulary Monte Carlo localization on octree language maps"};
  app.require_subcommand(1);

  // ---- simulate
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic scene, trajectory and rendered frames");
  std::string sim_config, sim_out, sim_map;
  std::uint64_t sim_seed = 1;
  std::size_t sim_steps = 0;
  double sim_noise = -1.0;
  bool sim_points = false;
  sim->add_option("--config", sim_config, "Experiment INI file (scene, camera, map, odometry, trajectory sections)")
      ->required()->check(CLI::ExistingFile);
  sim->add_option("--out", sim_out, "Output sequence directory")->required();
  sim->add_option("--seed", sim_seed, "Trajectory / noise seed")->capture_default_str();
  sim->add_option("--steps", sim_steps, "Number of frames (default: run.steps)");
  sim->add_option("--noise", sim_noise, "Feature noise sigma (default: first run.feature_noise)");
  sim->add_option("--map-out", sim_map, "Also write the scene's language map");
  sim->add_flag("--points", sim_points, "Also write per-pixel hit points for `map build --frames`");

  // ---- map build / ground
  auto* map = app.add_subcommand("map", "Build or ground language maps");
  map->require_subcommand(1);
  auto* build = map->add_subcommand("build", "Voxelize frames or a feature cloud into a map file");
  std::string build_frames, build_cloud, build_out;
  double build_res = 0.05, build_tau = 0.1;
  auto* g_in = build->add_option_group("input");
  g_in->add_option("--frames", build_frames, "Sequence directory with frame_*.omci, points_*.txt, groundtruth.txt");
  g_in->add_option("--cloud", build_cloud, "Text feature cloud (OMCL-CLOUD F=<F> header, then x y z f1..fF)");
  g_in->require_option(1);
  build->add_option("--resolution", build_res, "Voxel size (m)")->capture_default_str();
  build->add_option("--tau", build_tau, "Feature DB separation: minimum cosine distance")->capture_default_str();
  build->add_option("--out", build_out, "Output map file")->required();

  auto* ground = map->add_subcommand("ground", "Replace the feature DB by encodings of class words");
  std::string ground_in, ground_out, ground_words;
  std::uint64_t ground_seed = 7;
  double ground_discard = 0.5;
  ground->add_option("--map", ground_in, "Input map")->required()->check(CLI::ExistingFile);
  ground->add_option("--prompts", ground_words, "Comma-separated class words")->required();
  ground->add_option("--encoder-seed", ground_seed, "Label encoder seed")->capture_default_str();
  ground->add_option("--discard", ground_discard, "Discard entries farther than this cosine distance")
      ->capture_default_str();
  ground->add_option("--out", ground_out, "Output map")->required();

  auto* project = map->add_subcommand("project", "Average columns into a floor-plan map");
  std::string project_in, project_out;
  project->add_option("--map", project_in, "Input map")->required()->check(CLI::ExistingFile);
  project->add_option("--out", project_out, "Output map")->required();

  // ---- localize
  auto* loc = app.add_subcommand("localize", "Track a sequence from a known approximate start pose");
  std::string loc_map, loc_seq, loc_est, loc_diag, loc_init;
  double loc_sig_t = 0.3, loc_sig_r = 17.0;
  FilterOptions loc_f;
  loc->add_option("--map", loc_map, "Map file")->required()->check(CLI::ExistingFile);
  loc->add_option("--frames", loc_seq, "Sequence directory (camera.txt, odometry.txt, frame_*.omci)")
      ->required()->check(CLI::ExistingDirectory);
  loc->add_option("--estimates", loc_est, "Output trajectory of estimates")->required();
  loc->add_option("--diagnostics", loc_diag, "Output per-step diagnostics CSV");
  loc->add_option("--init-pose", loc_init, "Start pose 'tx ty tz qx qy qz qw' (default: first odometry pose)");
  loc->add_option("--init-sigma-t", loc_sig_t, "Initial spread, translation (m)")->capture_default_str();
  loc->add_option("--init-sigma-r", loc_sig_r, "Initial spread, rotation (deg)")->capture_default_str();
  add_filter_options(loc, loc_f);

  // ---- global-localize
  auto* glob = app.add_subcommand("global-localize", "Localize without a start pose (planar)");
  std::string glob_map, glob_seq, glob_est, glob_diag, glob_prompt;
  bool glob_uniform = false;
  double glob_radius = 2.0, glob_rho = 0.9, glob_height = std::nan("");
  std::size_t glob_k = 500;
  std::uint64_t glob_encoder = 7;
  FilterOptions glob_f;
  glob->add_option("--map", glob_map, "Map file")->required()->check(CLI::ExistingFile);
  glob->add_option("--frames", glob_seq, "Sequence directory")->required()->check(CLI::ExistingDirectory);
  glob->add_option("--estimates", glob_est, "Output trajectory of estimates")->required();
  glob->add_option("--diagnostics", glob_diag, "Output per-step diagnostics CSV");
  auto* g_init = glob->add_option_group("initialization");
  g_init->add_option("--prompt", glob_prompt, "Comma-separated words describing the start location");
  g_init->add_flag("--uniform", glob_uniform, "Spread particles uniformly over the map footprint");
  g_init->require_option(1);
  glob->add_option("--radius", glob_radius, "Prompt neighborhood radius R (m)")->capture_default_str();
  glob->add_option("--rho", glob_rho, "Prompt cosine-similarity threshold")->capture_default_str();
  glob->add_option("--k", glob_k, "Matching voxels required per word")->capture_default_str();
  glob->add_option("--encoder-seed", glob_encoder, "Label encoder seed for prompt words")->capture_default_str();
  glob->add_option("--height", glob_height, "Camera height in world z (default: first odometry pose)");
  add_filter_options(glob, glob_f);

  // ---- eval
  auto* ev = app.add_subcommand("eval", "APE statistics, convergence steps and optional consistency");
  std::string ev_est, ev_gt, ev_map, ev_frames;
  std::vector<double> ev_thresholds{1.0, 0.5, 0.25, 0.1};
  std::size_t ev_budget = 1024;
  ev->add_option("--estimates", ev_est, "Estimated trajectory")->required()->check(CLI::ExistingFile);
  ev->add_option("--ground-truth", ev_gt, "Ground-truth trajectory")->required()->check(CLI::ExistingFile);
  ev->add_option("--thresholds", ev_thresholds, "Convergence thresholds (m)")->capture_default_str();
  ev->add_option("--map", ev_map, "Map for measurement-map consistency")->check(CLI::ExistingFile);
  ev->add_option("--frames", ev_frames, "Sequence directory for consistency (poses from groundtruth.txt)");
  ev->add_option("--samples", ev_budget, "Pixels per frame for consistency")->capture_default_str();

  // ---- sweep
  auto* sweep = app.add_subcommand("sweep", "Run an experiment config and write CSV reports");
  std::string sweep_config, sweep_out;
  sweep->add_option("--config", sweep_config, "Experiment INI file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", sweep_out, "Output directory (overrides output.dir)");
  sweep->footer(experiment_config_help());
  sim->footer(experiment_config_help());

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      ExperimentConfig cfg = load_experiment_config(sim_config);
      const World world = make_world(cfg.scene, cfg.encoder_seed, cfg.dim, cfg.camera, cfg.floorplan);
      SequenceConfig sc{sim_steps ? sim_steps : cfg.steps, sim_seed,
                        sim_noise >= 0.0 ? sim_noise : cfg.feature_noise.front(), cfg.odometry_noise, cfg.trajectory};
      const Sequence seq = simulate_sequence(world, sc);
      fs::create_directories(sim_out);
      write_camera(fs::path(sim_out) / "camera.txt", world.intr);
      write_trajectory(fs::path(sim_out) / "groundtruth.txt", stamped(seq.ground_truth));
      std::vector<Pose> odo{seq.ground_truth.front()};
      for (std::size_t k = 1; k < seq.odometry.size(); ++k) odo.push_back(compose_pose(odo.back(), seq.odometry[k]));
      write_trajectory(fs::path(sim_out) / "odometry.txt", stamped(odo));
      for (std::size_t k = 0; k < seq.frames.size(); ++k) {
        write_feature_image(fs::path(sim_out) / frame_name(k, "frame_", ".omci"), seq.frames[k]);
        if (sim_points) {
          RenderOptions ro;
          ro.encoder_seed = world.encoder_seed;
          ro.dim = 2;  // only the geometry is kept
          write_points(fs::path(sim_out) / frame_name(k, "points_", ".txt"),
                       render_observation(world.scene, seq.ground_truth[k], world.intr, ro).points);
        }
      }
      if (!sim_map.empty()) save_map(world.map, sim_map);
      std::cout << "wrote " << seq.frames.size() << " frames to " << sim_out << "\n";
    } else if (build->parsed()) {
      std::optional<OctreeLanguageMap> out;
      if (!build_cloud.empty()) {
        out = from_point_cloud(read_feature_cloud(build_cloud), build_res);
      } else {
        const fs::path dir(build_frames);
        const auto gt = read_trajectory(dir / "groundtruth.txt");
        for (std::size_t k = 0; k < gt.size(); ++k) {
          const FeatureImage img = read_feature_image(dir / frame_name(k, "frame_", ".omci"));
          const auto pts = read_points(dir / frame_name(k, "points_", ".txt"));
          if (pts.size() != img.pixel_count())
            throw FormatError(frame_name(k, "points_", ".txt") + ": pixel count does not match the frame");
          if (!out) out.emplace(build_res, Vec3::Zero(), img.dim);
          out->integrate(pts, img.data);
        }
        if (!out) throw InvalidArgument("map build: no frames in " + build_frames);
      }
      out->finalize(build_tau);
      save_map(*out, build_out);
      std::cout << "map: " << out->voxel_count() << " voxels, " << out->db().size() << " features; "
                << out->skipped_points() << " points without geometry skipped\n";
    } else if (ground->parsed()) {
      OctreeLanguageMap m = load_map(ground_in);
      const auto words = parse_prompt(ground_words);
      const GroundingResult g = ground_db(m.db(), words, ground_seed, ground_discard);
      m.apply_grounding_remap(g.remap, g.grounded);
      save_map(m, ground_out);
      std::cout << "grounded map: " << m.voxel_count() << " voxels, " << m.db().size() << " classes\n";
    } else if (project->parsed()) {
      save_map(load_map(project_in).project_floorplan(), project_out);
    } else if (loc->parsed()) {
      const OctreeLanguageMap m = load_map(loc_map);
      const LoadedSequence seq = load_sequence(loc_seq);
      Pose start = seq.odometry.front();
      if (!loc_init.empty()) {
        const auto v = parse_numbers(loc_init, 7, "--init-pose");
        start = Pose(Vec3(v[0], v[1], v[2]), Quat(v[6], v[3], v[4], v[5]));
      }
      const MclConfig mcl = loc_f.config();
      Rng rng = make_stream(mcl.seed, {0x1417});
      ParticleSet ps = init_particles(GaussianInit{start, loc_sig_t, loc_sig_r}, mcl.particles, rng, loc_f.planar,
                                      start.translation().z());
      std::vector<StepDiagnostics> diag;
      const auto est = run_filter(m, seq, mcl, std::move(ps), diag);
      write_outputs(loc_est, loc_diag, est, diag);
    } else if (glob->parsed()) {
      const OctreeLanguageMap m = load_map(glob_map);
      const LoadedSequence seq = load_sequence(glob_seq);
      const double z = std::isnan(glob_height) ? seq.odometry.front().translation().z() : glob_height;
      const MclConfig mcl = glob_f.config();
      Rng rng = make_stream(mcl.seed, {0x610b});
      ParticleSet ps;
      if (glob_uniform) {
        Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
        for (const auto& [key, idx] : m.voxels()) {
          lo = lo.cwiseMin(m.center_of(key));
          hi = hi.cwiseMax(m.center_of(key));
        }
        ps = init_particles(UniformInit{Vec3(lo.x(), lo.y(), z), Vec3(hi.x(), hi.y(), z), -std::numbers::pi,
                                        std::numbers::pi},
                            mcl.particles, rng, true, z);
      } else {
        PromptSpec prompt{parse_prompt(glob_prompt), glob_radius, glob_rho, glob_k};
        prompt.validate();
        const FeatureVec floor_code = encode_label(kFloorLabel, glob_encoder, m.db().dim());
        const auto floors = floor_voxels(m, floor_code, glob_rho);
        if (floors.empty()) throw StateError("global-localize: the map has no floor voxels");
        const auto align = prompt_alignment(m, floors, prompt, glob_encoder);
        SeedResult seeded = seed_particles(m, align, mcl.particles, z - m.center_of(floors.front()).z(), rng);
        if (seeded.fallback) std::cerr << "warning: no floor voxel matched every prompt word; using best matches\n";
        ps = std::move(seeded.particles);
        ps.planar = true;
        ps.fixed_height = z;
        for (Particle& p : ps.particles) p.pose = clamp_planar(p.pose, z);
      }
      std::vector<StepDiagnostics> diag;
      const auto est = run_filter(m, seq, mcl, std::move(ps), diag);
      write_outputs(glob_est, glob_diag, est, diag);
    } else if (ev->parsed()) {
      const auto est = poses_of(read_trajectory(ev_est));
      const auto gt = poses_of(read_trajectory(ev_gt));
      const auto errors = translation_errors(est, gt);
      std::cout << fmt_stats(ape_stats_from_errors(errors));
      const auto conv = convergence_steps(errors, ev_thresholds);
      for (std::size_t i = 0; i < conv.size(); ++i)
        std::cout << "converged_" << ev_thresholds[i] << " " << (conv[i] ? std::to_string(*conv[i]) : "NA") << "\n";
      if (!ev_map.empty() != !ev_frames.empty()) throw InvalidArgument("eval: --map and --frames go together");
      if (!ev_map.empty()) {
        const OctreeLanguageMap m = load_map(ev_map);
        const fs::path dir(ev_frames);
        const CameraIntrinsics intr = read_camera(dir / "camera.txt");
        const auto poses = poses_of(read_trajectory(dir / "groundtruth.txt"));
        std::vector<FeatureImage> imgs;
        for (std::size_t k = 0; k < poses.size(); ++k)
          imgs.push_back(read_feature_image(dir / frame_name(k, "frame_", ".omci")));
        std::vector<ObservedFrame> frames;
        for (std::size_t k = 0; k < poses.size(); ++k) frames.push_back({poses[k], &imgs[k]});
        const ConsistencyStats c = consistency_metrics(m, frames, intr, ev_budget);
        std::cout << "consistency_accuracy " << c.accuracy << "\nconsistency_precision " << c.precision
                  << "\nconsistency_recall " << c.recall << "\nconsistency_iou " << c.iou << "\ncorrespondences "
                  << c.correspondences << "\nmisses " << c.misses << "\n";
      }
    } else if (sweep->parsed()) {
      ExperimentConfig cfg = load_experiment_config(sweep_config);
      if (!sweep_out.empty()) cfg.output_dir = sweep_out;
      const ExperimentReport r = run_experiment(cfg);
      for (const auto& f : r.files) std::cout << "wrote " << f.string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "omcl: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
