#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "omcl/eval.hpp"
#include "omcl/mcl.hpp"
#include "omcl/prompt_init.hpp"
#include "omcl/sim.hpp"

namespace omcl {

/// Simulated environment shared by the runs of an experiment.
struct World {
  DenseScene scene;
  OctreeLanguageMap map;
  CameraIntrinsics intr;
  std::uint64_t encoder_seed = 0;
  std::size_t dim = 0;
};

/// 128×96 pinhole camera with a 90° horizontal field of view.
CameraIntrinsics default_intrinsics();

World make_world(const SceneSpec& spec, std::uint64_t encoder_seed, std::size_t dim, const CameraIntrinsics& intr,
                 bool floorplan = false);

/// Ground truth, noisy odometry increments and rendered frames for one sequence.
struct Sequence {
  std::vector<Pose> ground_truth;
  std::vector<Pose> odometry;  // odometry[k]: noisy increment from k-1 to k; identity at k = 0
  std::vector<FeatureImage> frames;
};

struct SequenceConfig {
  std::size_t steps = 60;
  std::uint64_t seed = 1;
  double feature_noise_sigma = 0.0;
  MotionNoise odometry_noise{0.10, 6.0};
  TrajectorySpec trajectory;
};

Sequence simulate_sequence(const World& world, const SequenceConfig& cfg);

struct TrackingConfig {
  SequenceConfig sequence;
  MclConfig mcl;
  double init_sigma_t = 0.3;
  double init_sigma_r_deg = 17.0;
  bool planar = false;
  std::size_t warmup = 20;           // steps excluded from the final segment and the loss check
  double track_loss_threshold = 1.0;  // meters
};

struct TrackingRun {
  std::vector<Pose> ground_truth;
  std::vector<Pose> estimates;
  std::vector<StepDiagnostics> diagnostics;
  std::vector<double> errors;
  ApeStats ape;        // all steps
  ApeStats final_ape;  // steps >= warmup
  bool track_lost = false;
  double filter_seconds = 0.0;  // wall clock inside the filter, rendering excluded
};

/// Filters a sequence produced by simulate_sequence() (or loaded from disk).
TrackingRun track_sequence(const World& world, const Sequence& seq, const TrackingConfig& cfg);
TrackingRun run_tracking(const World& world, const TrackingConfig& cfg);

enum class GlobalInit { kUniform, kPrompt };

struct GlobalConfig {
  SequenceConfig sequence;
  MclConfig mcl;
  GlobalInit init = GlobalInit::kUniform;
  PromptSpec prompt;
  std::vector<double> thresholds{1.0, 0.5, 0.25, 0.1};
  std::size_t persistence = 3;
};

struct GlobalRun {
  TrackingRun run;
  std::vector<std::optional<std::size_t>> convergence;  // per threshold
  bool prompt_fallback = false;
  std::size_t support = 0;  // floor voxels used for seeding
};

/// Planar global localization: particles start uniformly over the scene
/// footprint or over prompt-matching floor voxels, at the true camera height.
GlobalRun run_global(const World& world, const GlobalConfig& cfg);

/// Distinct object labels of a room, in label-table order.
std::vector<std::string> room_object_labels(const DenseScene& scene, int room);

/// Prompt a user standing at `start` would give: the start room's object
/// labels with at least prompt.k matching voxels within prompt.radius of the
/// floor below the start (the single most frequent one when none qualifies).
std::vector<std::string> start_prompt_words(const World& world, std::span<const VoxelKey> floors, const Pose& start,
                                            const PromptSpec& prompt);

enum class RunMode { kTracking, kGlobalUniform, kGlobalPrompt };

/// Parsed experiment configuration; every list-valued key becomes a sweep axis.
struct ExperimentConfig {
  SceneSpec scene;
  CameraIntrinsics camera = default_intrinsics();
  std::size_t dim = 512;
  std::uint64_t encoder_seed = 7;
  bool floorplan = false;  // project the map; implies planar
  bool planar = false;
  RunMode mode = RunMode::kTracking;
  std::size_t steps = 60;
  std::vector<std::uint64_t> seeds{1};
  std::vector<double> feature_noise{0.0};
  std::vector<std::size_t> particles{1024};
  std::vector<std::size_t> rays{2048};
  std::vector<SamplingStrategy> sampling{SamplingStrategy::kStratified};
  MclConfig mcl;
  MotionNoise odometry_noise{0.10, 6.0};
  TrajectorySpec trajectory;
  PromptSpec prompt;  // empty words: start_prompt_words()
  std::filesystem::path output_dir = "report";
};

/// Reads an INI file; errors name the offending section.key.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// Description of every section and key, for --help.
std::string experiment_config_help();

struct SweepSetting {
  double feature_noise = 0.0;
  std::size_t particles = 0;
  std::size_t rays = 0;
  SamplingStrategy sampling = SamplingStrategy::kStratified;
};

struct SweepCell {
  SweepSetting setting;
  std::uint64_t seed = 0;
  ApeStats ape;
  ApeStats final_ape;
  bool track_lost = false;
  ConsistencyStats consistency;
  std::vector<std::optional<std::size_t>> convergence;
  double filter_seconds = 0.0;
  std::size_t steps = 0;
};

struct ExperimentReport {
  std::vector<SweepCell> cells;  // setting-major, then seed
  std::vector<std::filesystem::path> files;
};

/// Runs every (setting, seed) cell and writes runs.csv, results.csv (one row
/// per setting) and timing.csv into output_dir. Only timing.csv depends on
/// wall-clock time.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

const char* sampling_name(SamplingStrategy s);

}  // namespace omcl
