#include "omcl/experiment.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "omcl/errors.hpp"
#include "omcl/rng.hpp"

namespace omcl {

CameraIntrinsics default_intrinsics() { return CameraIntrinsics{64.0, 64.0, 64.0, 48.0, 128, 96}; }

World make_world(const SceneSpec& spec, std::uint64_t encoder_seed, std::size_t dim, const CameraIntrinsics& intr,
                 bool floorplan) {
  intr.validate();
  DenseScene scene = generate_scene(spec);
  OctreeLanguageMap map = build_scene_map(scene, encoder_seed, dim, 0.1);
  if (floorplan) map = map.project_floorplan();
  return World{std::move(scene), std::move(map), intr, encoder_seed, dim};
}

Sequence simulate_sequence(const World& world, const SequenceConfig& cfg) {
  Sequence seq;
  seq.ground_truth = generate_trajectory(world.scene, cfg.steps, cfg.seed, cfg.trajectory);
  seq.odometry.reserve(cfg.steps);
  seq.frames.reserve(cfg.steps);
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    if (k == 0) {
      seq.odometry.push_back(Pose::identity());
    } else {
      const Pose delta = compose_pose(seq.ground_truth[k - 1].inverse(), seq.ground_truth[k]);
      Rng rng = make_stream(cfg.seed, {k, 0x0d0});
      seq.odometry.push_back(perturb_pose(delta, cfg.odometry_noise.sigma_t, cfg.odometry_noise.sigma_r_deg, rng));
    }
    RenderOptions ro;
    ro.feature_noise_sigma = cfg.feature_noise_sigma;
    ro.noise_seed = derive_seed(cfg.seed, {k, 0xf7});
    ro.encoder_seed = world.encoder_seed;
    ro.dim = world.dim;
    seq.frames.push_back(render_observation(world.scene, seq.ground_truth[k], world.intr, ro).features);
  }
  return seq;
}

namespace {

TrackingRun filter_sequence(const World& world, const Sequence& seq, const MclConfig& mcl, ParticleSet ps,
                            std::size_t warmup, double loss_threshold) {
  if (seq.frames.size() != seq.ground_truth.size() || seq.odometry.size() != seq.ground_truth.size())
    throw InvalidArgument("tracking: sequence parts differ in length");
  TrackingRun run;
  run.ground_truth = seq.ground_truth;
  for (std::size_t k = 0; k < seq.frames.size(); ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    StepResult r = mcl_step(ps, seq.odometry[k], seq.frames[k], world.intr, world.map, mcl, k);
    run.filter_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ps = std::move(r.particles);
    run.estimates.push_back(r.estimate);
    run.diagnostics.push_back(r.diagnostics);
  }
  run.errors = translation_errors(run.estimates, run.ground_truth);
  run.ape = ape_stats_from_errors(run.errors);
  const std::size_t from = std::min(warmup, run.errors.size() - 1);
  run.final_ape = ape_stats_from_errors(std::span<const double>(run.errors).subspan(from));
  run.track_lost = std::any_of(run.errors.begin() + static_cast<std::ptrdiff_t>(from), run.errors.end(),
                               [&](double e) { return e > loss_threshold; });
  return run;
}

}  // namespace

TrackingRun track_sequence(const World& world, const Sequence& seq, const TrackingConfig& cfg) {
  if (seq.ground_truth.empty()) throw InvalidArgument("tracking: empty sequence");
  Rng rng = make_stream(cfg.mcl.seed, {0x1417});
  const Pose& start = seq.ground_truth.front();
  ParticleSet ps = init_particles(GaussianInit{start, cfg.init_sigma_t, cfg.init_sigma_r_deg}, cfg.mcl.particles, rng,
                                  cfg.planar, start.translation().z());
  return filter_sequence(world, seq, cfg.mcl, std::move(ps), cfg.warmup, cfg.track_loss_threshold);
}

TrackingRun run_tracking(const World& world, const TrackingConfig& cfg) {
  return track_sequence(world, simulate_sequence(world, cfg.sequence), cfg);
}

std::vector<std::string> room_object_labels(const DenseScene& scene, int room) {
  if (room < 0 || room >= static_cast<int>(scene.rooms().size())) throw InvalidArgument("room index out of range");
  const RoomBox& rb = scene.rooms()[room];
  const double res = scene.resolution();
  std::set<int> found;
  const int i0 = static_cast<int>(std::floor(rb.x0 / res)), i1 = static_cast<int>(std::ceil(rb.x1 / res));
  const int j0 = static_cast<int>(std::floor(rb.y0 / res)), j1 = static_cast<int>(std::ceil(rb.y1 / res));
  const int floor = scene.label_index(kFloorLabel), wall = scene.label_index(kWallLabel);
  for (int j = std::max(0, j0); j < std::min(scene.ny(), j1); ++j)
    for (int i = std::max(0, i0); i < std::min(scene.nx(), i1); ++i) {
      if (scene.nz() < 2) continue;
      const int l = scene.label_at(i, j, 1);
      if (l >= 0 && l != floor && l != wall) found.insert(l);
    }
  std::vector<std::string> out;
  for (int l : found) out.push_back(scene.labels()[l]);
  return out;
}

std::vector<std::string> start_prompt_words(const World& world, std::span<const VoxelKey> floors, const Pose& start,
                                            const PromptSpec& prompt) {
  const Vec3 p = start.translation();
  const int room = world.scene.room_of(p.x(), p.y());
  if (room < 0) throw StateError("global: start pose is not inside a room");
  PromptSpec candidates = prompt;
  candidates.words = room_object_labels(world.scene, room);
  if (candidates.words.empty()) throw StateError("global: start room has no objects to prompt with");
  if (floors.empty()) throw StateError("global: map has no floor voxels");
  // Floor voxel closest to the start in the ground plane.
  const VoxelKey* below = &floors.front();
  double best = std::numeric_limits<double>::infinity();
  for (const VoxelKey& k : floors) {
    const Vec3 c = world.map.center_of(k);
    const double d = (c.head<2>() - p.head<2>()).squaredNorm();
    if (d < best) {
      best = d;
      below = &k;
    }
  }
  const FloorAlignment a = prompt_alignment(world.map, std::span(below, 1), candidates, world.encoder_seed).front();
  std::vector<std::string> words;
  for (std::size_t w = 0; w < a.counts.size(); ++w)
    if (a.counts[w] >= prompt.k) words.push_back(candidates.words[w]);
  if (words.empty()) {
    const auto most = std::max_element(a.counts.begin(), a.counts.end());
    words.push_back(candidates.words[static_cast<std::size_t>(most - a.counts.begin())]);
  }
  return words;
}

GlobalRun run_global(const World& world, const GlobalConfig& cfg) {
  const Sequence seq = simulate_sequence(world, cfg.sequence);
  const Pose& start = seq.ground_truth.front();
  const double z = start.translation().z();
  Rng rng = make_stream(cfg.mcl.seed, {0x610b});
  GlobalRun out;
  ParticleSet ps;
  if (cfg.init == GlobalInit::kUniform) {
    const double res = world.scene.resolution();
    UniformInit u{Vec3(0.0, 0.0, z), Vec3(world.scene.nx() * res, world.scene.ny() * res, z), -std::numbers::pi,
                  std::numbers::pi};
    ps = init_particles(u, cfg.mcl.particles, rng, true, z);
    out.support = static_cast<std::size_t>(world.scene.nx()) * world.scene.ny();
  } else {
    PromptSpec prompt = cfg.prompt;
    const FeatureVec floor_code = encode_label(kFloorLabel, world.encoder_seed, world.dim);
    const auto floors = floor_voxels(world.map, floor_code, prompt.rho);
    if (prompt.words.empty()) prompt.words = start_prompt_words(world, floors, start, prompt);
    const auto align = prompt_alignment(world.map, floors, prompt, world.encoder_seed);
    const double floor_center_z = world.map.center_of(floors.empty() ? VoxelKey{} : floors.front()).z();
    SeedResult seeded = seed_particles(world.map, align, cfg.mcl.particles, z - floor_center_z, rng);
    out.prompt_fallback = seeded.fallback;
    out.support = seeded.support.size();
    ps = std::move(seeded.particles);
    ps.planar = true;
    ps.fixed_height = z;
    for (Particle& p : ps.particles) p.pose = clamp_planar(p.pose, z);
  }
  out.run = filter_sequence(world, seq, cfg.mcl, std::move(ps), 0, std::numeric_limits<double>::infinity());
  out.convergence = convergence_steps(out.run.errors, cfg.thresholds, cfg.persistence);
  return out;
}

// ---------------------------------------------------------------- config

namespace {

using boost::property_tree::ptree;

template <typename T>
std::vector<T> parse_list(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::vector<T> out;
  std::string tok;
  while (in >> tok) {
    std::istringstream one(tok);
    T v{};
    if (!(one >> v) || !one.eof()) throw ConfigError(key + ": cannot parse '" + tok + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(key + ": empty value");
  return out;
}

class Section {
 public:
  Section(const ptree* node, std::string name) : node_(node), name_(std::move(name)) {}

  std::optional<std::string> raw(const std::string& key) const {
    if (!node_) return std::nullopt;
    const auto v = node_->get_optional<std::string>(ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    return *v;
  }
  template <typename T>
  T get(const std::string& key, T fallback) const {
    const auto r = raw(key);
    if (!r) return fallback;
    const auto v = parse_list<T>(*r, path(key));
    if (v.size() != 1) throw ConfigError(path(key) + ": expected a single value");
    return v.front();
  }
  template <typename T>
  std::vector<T> list(const std::string& key, std::vector<T> fallback) const {
    const auto r = raw(key);
    return r ? parse_list<T>(*r, path(key)) : fallback;
  }
  Vec3 vec3(const std::string& key, const Vec3& fallback) const {
    const auto r = raw(key);
    if (!r) return fallback;
    const auto v = parse_list<double>(*r, path(key));
    if (v.size() != 3) throw ConfigError(path(key) + ": expected 3 numbers");
    return Vec3(v[0], v[1], v[2]);
  }
  bool flag(const std::string& key, bool fallback) const {
    const auto r = raw(key);
    if (!r) return fallback;
    if (*r == "true" || *r == "1" || *r == "yes") return true;
    if (*r == "false" || *r == "0" || *r == "no") return false;
    throw ConfigError(path(key) + ": expected true or false");
  }
  std::string path(const std::string& key) const { return name_ + "." + key; }

 private:
  const ptree* node_;
  std::string name_;
};

Section section(const ptree& root, const std::string& name) {
  for (const auto& [k, v] : root)
    if (k == name) return Section(&v, name);
  return Section(nullptr, name);
}

const std::set<std::string>& known_keys(const std::string& section) {
  static const std::map<std::string, std::set<std::string>> keys{
      {"scene", {"extent", "resolution", "rooms_x", "rooms_y", "wall_thickness", "door_width", "door_height", "ceiling", "seed"}},
      {"camera", {"width", "height", "fx", "fy", "cx", "cy"}},
      {"map", {"dim", "encoder_seed", "floorplan"}},
      {"run", {"mode", "steps", "seeds", "feature_noise"}},
      {"filter",
       {"particles", "rays", "sampling", "motion_sigma_t", "motion_sigma_r_deg", "ess_fraction", "estimate_radius_t",
        "estimate_radius_r_deg", "max_range", "centroid_subset", "planar"}},
      {"odometry", {"sigma_t", "sigma_r_deg"}},
      {"trajectory", {"camera_height", "step_length", "yaw_sigma_deg", "clearance", "start_room"}},
      {"prompt", {"words", "radius", "rho", "k"}},
      {"output", {"dir"}},
      {"object", {"count", "size_min", "size_max", "room"}},
  };
  static const std::set<std::string> none;
  const auto it = keys.find(section);
  return it == keys.end() ? none : it->second;
}

}  // namespace

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  ptree root;
  try {
    boost::property_tree::read_ini(path.string(), root);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const auto& [name, node] : root) {
    const std::string kind = name.rfind("object:", 0) == 0 ? "object" : name;
    const auto& keys = known_keys(kind);
    if (keys.empty()) throw ConfigError("config: unknown section [" + name + "]");
    if (node.empty() && !node.data().empty()) throw ConfigError("config: key '" + name + "' outside a section");
    for (const auto& [key, value] : node)
      if (!keys.count(key)) throw ConfigError("config: unknown key " + name + "." + key);
  }

  ExperimentConfig c;
  const Section scene = section(root, "scene");
  c.scene.extent = scene.vec3("extent", c.scene.extent);
  c.scene.resolution = scene.get("resolution", c.scene.resolution);
  c.scene.rooms_x = scene.get("rooms_x", c.scene.rooms_x);
  c.scene.rooms_y = scene.get("rooms_y", c.scene.rooms_y);
  c.scene.wall_thickness = scene.get("wall_thickness", c.scene.wall_thickness);
  c.scene.door_width = scene.get("door_width", c.scene.door_width);
  c.scene.door_height = scene.get("door_height", c.scene.door_height);
  c.scene.ceiling = scene.flag("ceiling", c.scene.ceiling);
  c.scene.seed = scene.get<std::uint64_t>("seed", c.scene.seed);
  for (const auto& [name, node] : root) {
    if (name.rfind("object:", 0) != 0) continue;
    const Section o(&node, name);
    ObjectClassSpec cls;
    cls.label = name.substr(7);
    cls.count = o.get<std::size_t>("count", 1);
    cls.size_min = o.vec3("size_min", cls.size_min);
    cls.size_max = o.vec3("size_max", cls.size_max);
    cls.room = o.get("room", cls.room);
    c.scene.objects.push_back(cls);
  }
  try {
    c.scene.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  const Section cam = section(root, "camera");
  c.camera.width = cam.get("width", c.camera.width);
  c.camera.height = cam.get("height", c.camera.height);
  c.camera.fx = cam.get("fx", c.camera.fx);
  c.camera.fy = cam.get("fy", c.camera.fy);
  c.camera.cx = cam.get("cx", c.camera.cx);
  c.camera.cy = cam.get("cy", c.camera.cy);
  try {
    c.camera.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("config: camera: ") + e.what());
  }

  const Section map = section(root, "map");
  c.dim = map.get("dim", c.dim);
  if (c.dim == 0) throw ConfigError("map.dim: must be positive");
  c.encoder_seed = map.get<std::uint64_t>("encoder_seed", c.encoder_seed);
  c.floorplan = map.flag("floorplan", c.floorplan);

  const Section run = section(root, "run");
  const std::string mode = run.get<std::string>("mode", "tracking");
  if (mode == "tracking") c.mode = RunMode::kTracking;
  else if (mode == "global_uniform") c.mode = RunMode::kGlobalUniform;
  else if (mode == "global_prompt") c.mode = RunMode::kGlobalPrompt;
  else throw ConfigError("run.mode: expected tracking, global_uniform or global_prompt");
  c.steps = run.get("steps", c.steps);
  if (c.steps < 2) throw ConfigError("run.steps: at least 2");
  c.seeds = run.list<std::uint64_t>("seeds", c.seeds);
  c.feature_noise = run.list<double>("feature_noise", c.feature_noise);
  for (double s : c.feature_noise)
    if (!(s >= 0.0)) throw ConfigError("run.feature_noise: must be nonnegative");

  const Section filter = section(root, "filter");
  c.particles = filter.list<std::size_t>("particles", c.particles);
  c.rays = filter.list<std::size_t>("rays", c.rays);
  for (std::size_t v : c.particles)
    if (v == 0) throw ConfigError("filter.particles: must be positive");
  for (std::size_t v : c.rays)
    if (v == 0) throw ConfigError("filter.rays: must be positive");
  c.sampling.clear();
  for (const std::string& s : filter.list<std::string>("sampling", {"stratified"})) {
    if (s == "stratified") c.sampling.push_back(SamplingStrategy::kStratified);
    else if (s == "uniform") c.sampling.push_back(SamplingStrategy::kUniform);
    else throw ConfigError("filter.sampling: expected stratified or uniform, got '" + s + "'");
  }
  c.mcl.motion.sigma_t = filter.get("motion_sigma_t", c.mcl.motion.sigma_t);
  c.mcl.motion.sigma_r_deg = filter.get("motion_sigma_r_deg", c.mcl.motion.sigma_r_deg);
  c.mcl.ess_fraction = filter.get("ess_fraction", c.mcl.ess_fraction);
  c.mcl.estimate_radius_t = filter.get("estimate_radius_t", c.mcl.estimate_radius_t);
  c.mcl.estimate_radius_r_deg = filter.get("estimate_radius_r_deg", c.mcl.estimate_radius_r_deg);
  c.mcl.max_range = filter.get("max_range", c.mcl.max_range);
  c.mcl.centroid_subset = filter.get("centroid_subset", c.mcl.centroid_subset);
  c.planar = filter.flag("planar", c.planar);

  const Section odo = section(root, "odometry");
  c.odometry_noise.sigma_t = odo.get("sigma_t", c.odometry_noise.sigma_t);
  c.odometry_noise.sigma_r_deg = odo.get("sigma_r_deg", c.odometry_noise.sigma_r_deg);

  const Section traj = section(root, "trajectory");
  c.trajectory.camera_height = traj.get("camera_height", c.trajectory.camera_height);
  c.trajectory.step_length = traj.get("step_length", c.trajectory.step_length);
  c.trajectory.yaw_sigma_deg = traj.get("yaw_sigma_deg", c.trajectory.yaw_sigma_deg);
  c.trajectory.clearance = traj.get("clearance", c.trajectory.clearance);
  c.trajectory.start_room = traj.get("start_room", c.trajectory.start_room);

  const Section prompt = section(root, "prompt");
  if (const auto w = prompt.raw("words")) c.prompt.words = parse_prompt(*w);
  c.prompt.radius = prompt.get("radius", c.prompt.radius);
  c.prompt.rho = prompt.get("rho", c.prompt.rho);
  c.prompt.k = prompt.get("k", c.prompt.k);
  if (!c.prompt.words.empty()) {
    try {
      c.prompt.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("prompt: ") + e.what());
    }
  }

  c.output_dir = section(root, "output").get<std::string>("dir", c.output_dir.string());
  return c;
}

std::string experiment_config_help() {
  return R"(Experiment config (INI). List values are space-separated and each list is a sweep axis.
  [scene]      extent = X Y Z (m), resolution (m), rooms_x, rooms_y, wall_thickness (m),
               door_width (m), door_height (m), ceiling (true/false), seed
  [object:<label>]  count, size_min = X Y Z, size_max = X Y Z, room (-1: any)
  [camera]     width, height, fx, fy, cx, cy   (default 128x96, fx = fy = 64)
  [map]        dim (feature size, default 512), encoder_seed, floorplan (true/false)
  [run]        mode = tracking | global_uniform | global_prompt, steps, seeds (list),
               feature_noise (list, per-component sigma)
  [filter]     particles (list), rays (list), sampling (list of stratified/uniform),
               motion_sigma_t (m), motion_sigma_r_deg, ess_fraction, estimate_radius_t (m),
               estimate_radius_r_deg, max_range (m), centroid_subset (0: whole DB),
               planar (true/false: particles at the true camera height, yaw only)
  [odometry]   sigma_t (m), sigma_r_deg   (noise added to ground-truth increments)
  [trajectory] camera_height, step_length, yaw_sigma_deg, clearance, start_room
  [prompt]     words (comma list; empty: start-room objects near the start), radius (m), rho, k
  [output]     dir
)";
}

const char* sampling_name(SamplingStrategy s) { return s == SamplingStrategy::kStratified ? "stratified" : "uniform"; }

// ---------------------------------------------------------------- sweeps

namespace {

std::string fmt(double v) {
  std::ostringstream o;
  o << std::setprecision(10) << v;
  return o.str();
}

std::string fmt_opt(const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : "NA"; }

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("failed writing " + p.string());
}

const std::vector<double> kThresholds{1.0, 0.5, 0.25, 0.1};

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  const World world = make_world(cfg.scene, cfg.encoder_seed, cfg.dim, cfg.camera, cfg.floorplan);
  std::vector<SweepSetting> settings;
  for (double noise : cfg.feature_noise)
    for (std::size_t n : cfg.particles)
      for (std::size_t r : cfg.rays)
        for (SamplingStrategy s : cfg.sampling) settings.push_back({noise, n, r, s});

  ExperimentReport report;
  report.cells.resize(settings.size() * cfg.seeds.size());
  const std::ptrdiff_t n_cells = static_cast<std::ptrdiff_t>(report.cells.size());
  // Cells are independent; nested regions inside a cell run single-threaded.
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t c = 0; c < n_cells; ++c) {
    const SweepSetting& st = settings[static_cast<std::size_t>(c) / cfg.seeds.size()];
    const std::uint64_t seed = cfg.seeds[static_cast<std::size_t>(c) % cfg.seeds.size()];
    SequenceConfig sc{cfg.steps, seed, st.feature_noise, cfg.odometry_noise, cfg.trajectory};
    MclConfig mcl = cfg.mcl;
    mcl.particles = st.particles;
    mcl.rays = st.rays;
    mcl.sampling = st.sampling;
    mcl.seed = derive_seed(seed, {0x6d636c});
    SweepCell cell;
    cell.setting = st;
    cell.seed = seed;
    cell.steps = cfg.steps;
    const Sequence seq = simulate_sequence(world, sc);
    if (cfg.mode == RunMode::kTracking) {
      TrackingConfig tc;
      tc.sequence = sc;
      tc.mcl = mcl;
      tc.planar = cfg.planar || cfg.floorplan;
      tc.warmup = std::min<std::size_t>(tc.warmup, cfg.steps / 2);
      const TrackingRun r = track_sequence(world, seq, tc);
      cell.ape = r.ape;
      cell.final_ape = r.final_ape;
      cell.track_lost = r.track_lost;
      cell.filter_seconds = r.filter_seconds;
      cell.convergence = convergence_steps(r.errors, kThresholds);
    } else {
      GlobalConfig gc;
      gc.sequence = sc;
      gc.mcl = mcl;
      gc.init = cfg.mode == RunMode::kGlobalPrompt ? GlobalInit::kPrompt : GlobalInit::kUniform;
      gc.prompt = cfg.prompt;
      gc.thresholds = kThresholds;
      const GlobalRun g = run_global(world, gc);
      cell.ape = g.run.ape;
      cell.final_ape = g.run.final_ape;
      cell.filter_seconds = g.run.filter_seconds;
      cell.convergence = g.convergence;
    }
    std::vector<ObservedFrame> frames;
    for (std::size_t k = 0; k < seq.frames.size(); ++k) frames.push_back({seq.ground_truth[k], &seq.frames[k]});
    cell.consistency = consistency_metrics(world.map, frames, world.intr, 256);
    report.cells[static_cast<std::size_t>(c)] = std::move(cell);
  }

  std::filesystem::create_directories(cfg.output_dir);
  std::ostringstream runs, results, timing;
  runs << "feature_noise,particles,rays,sampling,seed,rmse,std,mean,median,min,max,sse,final_rmse,track_lost,"
          "consistency_accuracy,consistency_precision,consistency_recall,consistency_iou,conv_1.0,conv_0.5,conv_0.25,"
          "conv_0.1\n";
  results << "feature_noise,particles,rays,sampling,seeds,mean_rmse,min_rmse,max_rmse,mean_final_rmse,lost_runs,"
             "mean_consistency_accuracy,mean_consistency_iou,median_conv_0.1\n";
  timing << "feature_noise,particles,rays,sampling,seed,filter_seconds,steps,fps\n";
  for (const SweepCell& c : report.cells) {
    const std::string key = fmt(c.setting.feature_noise) + "," + std::to_string(c.setting.particles) + "," +
                            std::to_string(c.setting.rays) + "," + sampling_name(c.setting.sampling);
    runs << key << "," << c.seed << "," << fmt(c.ape.rmse) << "," << fmt(c.ape.std) << "," << fmt(c.ape.mean) << ","
         << fmt(c.ape.median) << "," << fmt(c.ape.min) << "," << fmt(c.ape.max) << "," << fmt(c.ape.sse) << ","
         << fmt(c.final_ape.rmse) << "," << (c.track_lost ? 1 : 0) << "," << fmt(c.consistency.accuracy) << ","
         << fmt(c.consistency.precision) << "," << fmt(c.consistency.recall) << "," << fmt(c.consistency.iou);
    for (const auto& v : c.convergence) runs << "," << fmt_opt(v);
    runs << "\n";
    timing << key << "," << c.seed << "," << fmt(c.filter_seconds) << "," << c.steps << ","
           << fmt(c.filter_seconds > 0 ? static_cast<double>(c.steps) / c.filter_seconds : 0.0) << "\n";
  }
  for (std::size_t s = 0; s < settings.size(); ++s) {
    const auto first = report.cells.begin() + static_cast<std::ptrdiff_t>(s * cfg.seeds.size());
    const std::vector<SweepCell> group(first, first + static_cast<std::ptrdiff_t>(cfg.seeds.size()));
    double sum = 0.0, sum_final = 0.0, acc = 0.0, iou = 0.0, lo = group.front().ape.rmse, hi = lo;
    std::size_t lost = 0;
    std::vector<double> conv;
    for (const SweepCell& c : group) {
      sum += c.ape.rmse;
      sum_final += c.final_ape.rmse;
      lo = std::min(lo, c.ape.rmse);
      hi = std::max(hi, c.ape.rmse);
      lost += c.track_lost;
      acc += c.consistency.accuracy;
      iou += c.consistency.iou;
      // Unconverged runs count as the full run length.
      conv.push_back(c.convergence.back() ? static_cast<double>(*c.convergence.back()) : static_cast<double>(c.steps));
    }
    std::sort(conv.begin(), conv.end());
    const std::size_t m = conv.size() / 2;
    const double median = conv.size() % 2 ? conv[m] : 0.5 * (conv[m - 1] + conv[m]);
    const double n = static_cast<double>(group.size());
    const SweepSetting& st = settings[s];
    results << fmt(st.feature_noise) << "," << st.particles << "," << st.rays << "," << sampling_name(st.sampling)
            << "," << group.size() << "," << fmt(sum / n) << "," << fmt(lo) << "," << fmt(hi) << ","
            << fmt(sum_final / n) << "," << lost << "," << fmt(acc / n) << "," << fmt(iou / n) << "," << fmt(median)
            << "\n";
  }
  for (const auto& [name, text] : {std::pair{"runs.csv", runs.str()}, std::pair{"results.csv", results.str()},
                                   std::pair{"timing.csv", timing.str()}}) {
    const auto p = cfg.output_dir / name;
    write_file(p, text);
    report.files.push_back(p);
  }
  return report;
}

}  // namespace omcl
