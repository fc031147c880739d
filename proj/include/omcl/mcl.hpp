#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "omcl/features.hpp"
#include "omcl/geometry.hpp"
#include "omcl/langmap.hpp"
#include "omcl/rng.hpp"

namespace omcl {

struct Particle {
  Pose pose;
  double weight = 0.0;
};

/// Weighted pose hypotheses; weights are nonnegative and sum to one.
/// In planar mode every pose sits at `fixed_height` with zero roll and pitch.
struct ParticleSet {
  std::vector<Particle> particles;
  bool planar = false;
  double fixed_height = 0.0;

  std::size_t size() const { return particles.size(); }
};

double effective_sample_size(const ParticleSet& ps);
/// Projects a pose onto the plane z = height, keeping only its yaw.
Pose clamp_planar(const Pose& p, double height);

struct GaussianInit {
  Pose center;
  double sigma_t = 0.0;
  double sigma_r_deg = 0.0;
};
struct UniformInit {
  Vec3 box_min = Vec3::Zero();
  Vec3 box_max = Vec3::Zero();
  double yaw_min = 0.0;
  double yaw_max = 0.0;  // radians
};
/// Particle i starts at poses[i % poses.size()].
struct SeededInit {
  std::vector<Pose> poses;
};
using InitMode = std::variant<GaussianInit, UniformInit, SeededInit>;

ParticleSet init_particles(const InitMode& mode, std::size_t n, Rng& rng, bool planar = false,
                           double fixed_height = 0.0);

struct MotionNoise {
  double sigma_t = 0.0;
  double sigma_r_deg = 0.0;
};

/// Applies the odometry increment to every particle with an independent noise
/// draw from the sub-stream (seed, step, particle index).
ParticleSet predict(const ParticleSet& ps, const Pose& odom_delta, const MotionNoise& noise, std::uint64_t seed,
                    std::uint64_t step);

/// Pixels chosen for one frame; identical for every particle.
struct ObservationSample {
  std::vector<Pixel> pixels;
  std::vector<Vec3> directions;  // optical frame, unit
  std::vector<float> features;   // size() rows of `dim`
  std::vector<std::uint32_t> cluster;
  std::size_t dim = 0;

  std::size_t size() const { return pixels.size(); }
  std::span<const float> feature(std::size_t j) const { return {features.data() + j * dim, dim}; }
};

/// Stratified sampling: pixels are clustered by their most similar centroid
/// and an equal quota, ceil(budget / nonempty clusters), is drawn without
/// replacement from each cluster (all of it when smaller).
ObservationSample build_sampling_masks(const FeatureImage& image, const CameraIntrinsics& intr,
                                       const FeatureDb& centroids, std::size_t rays_budget, Rng& rng);

/// Baseline: `rays_budget` distinct pixels uniformly over the whole image.
ObservationSample sample_uniform(const FeatureImage& image, const CameraIntrinsics& intr,
                                 std::size_t rays_budget, Rng& rng);

/// Random subset of `count` DB entries (all entries when count is 0 or too large),
/// preserving DB order.
FeatureDb select_centroids(const FeatureDb& db, std::size_t count, Rng& rng);

struct WeighResult {
  ParticleSet particles;
  std::vector<double> likelihood;  // L_i per particle
  double mean_likelihood = 0.0;
  double miss_ratio = 0.0;
  bool rejected = false;  // every product was 0; weights were reset to uniform
};

/// Measurement update: L_i is the mean cosine similarity between sample
/// features and the DB entries of the voxels their rays hit from particle i
/// (misses count as 0); w_i ∝ w_i · max(L_i, 0). Parallel over particles.
WeighResult weigh(const ParticleSet& ps, const ObservationSample& obs, const OctreeLanguageMap& map,
                  double max_range);

/// Serial reference for weigh(): same model, evaluated ray by ray with a
/// direct cosine per hit. Kept for tests and benchmarks.
WeighResult weigh_serial(const ParticleSet& ps, const ObservationSample& obs, const OctreeLanguageMap& map,
                         double max_range);

struct ResampleResult {
  ParticleSet particles;
  bool resampled = false;
};

/// Low-variance systematic resampling when ESS < ess_threshold_fraction · n.
ResampleResult resample(const ParticleSet& ps, double ess_threshold_fraction, Rng& rng);

/// Weighted mean of the particles within (radius_t, radius_r) of the
/// heaviest particle; quaternions are sign-aligned to it before averaging.
Pose estimate_pose(const ParticleSet& ps, double radius_t, double radius_r_deg);

enum class SamplingStrategy { kStratified, kUniform };

struct MclConfig {
  std::size_t particles = 1024;
  std::size_t rays = 2048;
  MotionNoise motion{0.10, 6.0};
  double ess_fraction = 0.5;
  double estimate_radius_t = 0.5;
  double estimate_radius_r_deg = 30.0;
  double max_range = 20.0;
  SamplingStrategy sampling = SamplingStrategy::kStratified;
  std::size_t centroid_subset = 0;  // 0: full DB as centroids
  std::uint64_t seed = 1;
};

struct StepDiagnostics {
  std::size_t step = 0;
  double ess = 0.0;  // after weighing, before resampling
  double mean_likelihood = 0.0;
  double miss_ratio = 0.0;
  bool rejected = false;
  bool resampled = false;
  Pose estimate;
};

struct StepResult {
  ParticleSet particles;
  Pose estimate;
  StepDiagnostics diagnostics;
};

/// One filter iteration: predict, sample, weigh, estimate, resample.
/// The estimate is taken from the weighted set before resampling.
StepResult mcl_step(const ParticleSet& ps, const Pose& odom_delta, const FeatureImage& image,
                    const CameraIntrinsics& intr, const OctreeLanguageMap& map, const MclConfig& config,
                    std::uint64_t step_index);

std::string diagnostics_csv_header();
std::string diagnostics_csv_row(const StepDiagnostics& d);

}  // namespace omcl
