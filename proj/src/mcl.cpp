#include "omcl/mcl.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "omcl/errors.hpp"

namespace omcl {

double effective_sample_size(const ParticleSet& ps) {
  double sq = 0.0;
  for (const Particle& p : ps.particles) sq += p.weight * p.weight;
  return sq > 0.0 ? 1.0 / sq : 0.0;
}

Pose clamp_planar(const Pose& p, double height) {
  const Vec3& t = p.translation();
  return Pose::from_yaw(Vec3(t.x(), t.y(), height), p.yaw());
}

ParticleSet init_particles(const InitMode& mode, std::size_t n, Rng& rng, bool planar, double fixed_height) {
  if (n == 0) throw InvalidArgument("init_particles: particle count must be >= 1");
  ParticleSet ps;
  ps.planar = planar;
  ps.fixed_height = fixed_height;
  ps.particles.resize(n);
  const double w = 1.0 / static_cast<double>(n);

  if (const auto* g = std::get_if<GaussianInit>(&mode)) {
    for (Particle& p : ps.particles) p = {perturb_pose(g->center, g->sigma_t, g->sigma_r_deg, rng), w};
  } else if (const auto* u = std::get_if<UniformInit>(&mode)) {
    auto uniform = [&rng](double lo, double hi) {
      return lo == hi ? lo : std::uniform_real_distribution<double>(std::min(lo, hi), std::max(lo, hi))(rng);
    };
    for (Particle& p : ps.particles) {
      const Vec3 t(uniform(u->box_min.x(), u->box_max.x()), uniform(u->box_min.y(), u->box_max.y()),
                   uniform(u->box_min.z(), u->box_max.z()));
      p = {Pose::from_yaw(t, uniform(u->yaw_min, u->yaw_max)), w};
    }
  } else {
    const auto& s = std::get<SeededInit>(mode);
    if (s.poses.empty()) throw InvalidArgument("init_particles: seeded mode without poses");
    for (std::size_t i = 0; i < n; ++i) ps.particles[i] = {s.poses[i % s.poses.size()], w};
  }
  if (planar)
    for (Particle& p : ps.particles) p.pose = clamp_planar(p.pose, fixed_height);
  return ps;
}

ParticleSet predict(const ParticleSet& ps, const Pose& odom_delta, const MotionNoise& noise, std::uint64_t seed,
                    std::uint64_t step) {
  ParticleSet out = ps;
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(ps.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    Rng rng = make_stream(seed, {step, 1, static_cast<std::uint64_t>(i)});
    const Pose delta = perturb_pose(odom_delta, noise.sigma_t, noise.sigma_r_deg, rng);
    Pose p = compose_pose(ps.particles[i].pose, delta);
    if (ps.planar) p = clamp_planar(p, ps.fixed_height);
    out.particles[i].pose = p;
  }
  return out;
}

namespace {

ObservationSample make_sample(const FeatureImage& image, const CameraIntrinsics& intr,
                              std::vector<Pixel> pixels, std::vector<std::uint32_t> cluster) {
  ObservationSample obs;
  obs.dim = image.dim;
  obs.directions = pixel_rays(intr, pixels);
  obs.features.reserve(pixels.size() * image.dim);
  for (const Pixel& px : pixels) {
    const auto f = image.at(px.u, px.v);
    obs.features.insert(obs.features.end(), f.begin(), f.end());
  }
  obs.pixels = std::move(pixels);
  obs.cluster = std::move(cluster);
  return obs;
}

void check_image(const FeatureImage& image, const CameraIntrinsics& intr) {
  if (image.pixel_count() == 0) throw InvalidArgument("sampling: empty image");
  if (image.width != intr.width || image.height != intr.height)
    throw InvalidArgument("sampling: image size does not match the camera intrinsics");
}

// First `m` entries of a uniformly random permutation of `items`.
template <typename T>
void partial_shuffle(std::vector<T>& items, std::size_t m, Rng& rng) {
  for (std::size_t i = 0; i < m && i + 1 < items.size(); ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, items.size() - 1);
    std::swap(items[i], items[pick(rng)]);
  }
}

}  // namespace

ObservationSample build_sampling_masks(const FeatureImage& image, const CameraIntrinsics& intr,
                                       const FeatureDb& centroids, std::size_t rays_budget, Rng& rng) {
  check_image(image, intr);
  if (rays_budget == 0) throw InvalidArgument("sampling: ray budget must be >= 1");
  if (centroids.empty()) throw InvalidArgument("sampling: no centroids");

  const std::size_t n_pix = image.pixel_count();
  std::vector<std::uint32_t> assignment(n_pix);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(n_pix);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    assignment[i] = static_cast<std::uint32_t>(nearest_feature(centroids, image.pixel(i)).index);

  std::vector<std::vector<std::uint32_t>> members(centroids.size());
  for (std::size_t i = 0; i < n_pix; ++i) members[assignment[i]].push_back(static_cast<std::uint32_t>(i));
  const std::size_t nonempty =
      std::count_if(members.begin(), members.end(), [](const auto& m) { return !m.empty(); });
  const std::size_t quota = (rays_budget + nonempty - 1) / nonempty;

  std::vector<Pixel> pixels;
  std::vector<std::uint32_t> cluster;
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto& m = members[c];
    if (m.empty()) continue;
    const std::size_t take = std::min(quota, m.size());
    partial_shuffle(m, take, rng);
    for (std::size_t i = 0; i < take; ++i) {
      pixels.push_back({m[i] % image.width, m[i] / image.width});
      cluster.push_back(static_cast<std::uint32_t>(c));
    }
  }
  return make_sample(image, intr, std::move(pixels), std::move(cluster));
}

ObservationSample sample_uniform(const FeatureImage& image, const CameraIntrinsics& intr, std::size_t rays_budget,
                                 Rng& rng) {
  check_image(image, intr);
  if (rays_budget == 0) throw InvalidArgument("sampling: ray budget must be >= 1");
  std::vector<std::uint32_t> idx(image.pixel_count());
  std::iota(idx.begin(), idx.end(), 0u);
  const std::size_t take = std::min(rays_budget, idx.size());
  partial_shuffle(idx, take, rng);
  std::vector<Pixel> pixels;
  for (std::size_t i = 0; i < take; ++i) pixels.push_back({idx[i] % image.width, idx[i] / image.width});
  return make_sample(image, intr, std::move(pixels), std::vector<std::uint32_t>(take, 0));
}

FeatureDb select_centroids(const FeatureDb& db, std::size_t count, Rng& rng) {
  if (count == 0 || count >= db.size()) return db;
  std::vector<std::size_t> idx(db.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  partial_shuffle(idx, count, rng);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  FeatureDb out(db.dim(), db.tau());
  for (std::size_t i : idx) out.append_unchecked(db.entry(i), db.label(i));
  return out;
}

namespace {

void finish_weights(const ParticleSet& ps, WeighResult& r) {
  r.particles = ps;
  double total = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) total += ps.particles[i].weight * std::max(r.likelihood[i], 0.0);
  const double n = static_cast<double>(ps.size());
  if (!(total > 0.0)) {
    r.rejected = true;
    for (Particle& p : r.particles.particles) p.weight = 1.0 / n;
  } else {
    for (std::size_t i = 0; i < ps.size(); ++i)
      r.particles.particles[i].weight = ps.particles[i].weight * std::max(r.likelihood[i], 0.0) / total;
  }
  r.mean_likelihood = std::accumulate(r.likelihood.begin(), r.likelihood.end(), 0.0) / n;
}

void check_weigh_inputs(const ParticleSet& ps, const ObservationSample& obs, const OctreeLanguageMap& map) {
  if (!map.finalized()) throw StateError("weigh: map is not finalized");
  if (obs.size() == 0) throw InvalidArgument("weigh: empty observation");
  if (ps.size() == 0) throw InvalidArgument("weigh: empty particle set");
  if (obs.dim != map.dim()) throw InvalidArgument("weigh: observation and map feature dimensions differ");
}

// World <- optical rotation of a particle's camera.
Eigen::Matrix3d camera_rotation(const Pose& p) { return p.rotation().toRotationMatrix() * optical_to_body(); }

constexpr std::size_t kMaxSimilarityTable = std::size_t{1} << 24;

}  // namespace

WeighResult weigh(const ParticleSet& ps, const ObservationSample& obs, const OctreeLanguageMap& map,
                  double max_range) {
  check_weigh_inputs(ps, obs, map);
  const FeatureDb& db = map.db();
  const std::size_t n_rays = obs.size();
  const std::size_t k = db.size();

  // Sample features are shared by all particles, so their similarity to every
  // DB entry is computed once; each ray hit then costs a table lookup.
  const bool use_table = n_rays * k <= kMaxSimilarityTable;
  std::vector<double> table;
  if (use_table) {
    table.resize(n_rays * k);
    const std::ptrdiff_t nr = static_cast<std::ptrdiff_t>(n_rays);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < nr; ++j)
      for (std::size_t e = 0; e < k; ++e) table[j * k + e] = cosine_similarity(obs.feature(j), db.entry(e));
  }

  WeighResult r;
  r.likelihood.assign(ps.size(), 0.0);
  std::vector<std::size_t> misses(ps.size(), 0);
  const std::ptrdiff_t np = static_cast<std::ptrdiff_t>(ps.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < np; ++i) {
    const Pose& pose = ps.particles[i].pose;
    const Eigen::Matrix3d rot = camera_rotation(pose);
    double sum = 0.0;
    std::size_t miss = 0;
    for (std::size_t j = 0; j < n_rays; ++j) {
      const RayHit h = map.trace_unchecked(pose.translation(), rot * obs.directions[j], max_range);
      if (!h.hit) {
        ++miss;
        continue;
      }
      sum += use_table ? table[j * k + h.feature_index] : cosine_similarity(obs.feature(j), db.entry(h.feature_index));
    }
    r.likelihood[i] = sum / static_cast<double>(n_rays);
    misses[i] = miss;
  }
  finish_weights(ps, r);
  r.miss_ratio = static_cast<double>(std::accumulate(misses.begin(), misses.end(), std::size_t{0})) /
                 static_cast<double>(n_rays * ps.size());
  return r;
}

WeighResult weigh_serial(const ParticleSet& ps, const ObservationSample& obs, const OctreeLanguageMap& map,
                         double max_range) {
  check_weigh_inputs(ps, obs, map);
  const FeatureDb& db = map.db();
  WeighResult r;
  r.likelihood.assign(ps.size(), 0.0);
  std::size_t misses = 0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Pose& pose = ps.particles[i].pose;
    const Eigen::Matrix3d rot = camera_rotation(pose);
    double sum = 0.0;
    for (std::size_t j = 0; j < obs.size(); ++j) {
      const RayHit h = map.trace_unchecked(pose.translation(), rot * obs.directions[j], max_range);
      if (h.hit)
        sum += cosine_similarity(obs.feature(j), db.entry(h.feature_index));
      else
        ++misses;
    }
    r.likelihood[i] = sum / static_cast<double>(obs.size());
  }
  finish_weights(ps, r);
  r.miss_ratio = static_cast<double>(misses) / static_cast<double>(obs.size() * ps.size());
  return r;
}

ResampleResult resample(const ParticleSet& ps, double ess_threshold_fraction, Rng& rng) {
  const std::size_t n = ps.size();
  if (n == 0) throw InvalidArgument("resample: empty particle set");
  if (!(effective_sample_size(ps) < ess_threshold_fraction * static_cast<double>(n))) return {ps, false};

  ResampleResult out;
  out.resampled = true;
  out.particles.planar = ps.planar;
  out.particles.fixed_height = ps.fixed_height;
  out.particles.particles.reserve(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  const double r = std::uniform_real_distribution<double>(0.0, inv_n)(rng);
  double c = ps.particles[0].weight;
  std::size_t i = 0;
  for (std::size_t m = 0; m < n; ++m) {
    const double u = r + static_cast<double>(m) * inv_n;
    while (u > c && i + 1 < n) c += ps.particles[++i].weight;
    out.particles.particles.push_back({ps.particles[i].pose, inv_n});
  }
  return out;
}

Pose estimate_pose(const ParticleSet& ps, double radius_t, double radius_r_deg) {
  if (ps.size() == 0) throw InvalidArgument("estimate_pose: empty particle set");
  std::size_t best = 0;
  for (std::size_t i = 1; i < ps.size(); ++i)
    if (ps.particles[i].weight > ps.particles[best].weight) best = i;
  const Pose& ref = ps.particles[best].pose;
  const double radius_r = radius_r_deg * kDegToRad;

  double wsum = 0.0;
  Vec3 t = Vec3::Zero();
  Eigen::Vector4d q = Eigen::Vector4d::Zero();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Particle& p = ps.particles[i];
    if (i != best && (translation_distance(p.pose, ref) > radius_t ||
                      rotation_distance(p.pose.rotation(), ref.rotation()) > radius_r))
      continue;
    wsum += p.weight;
    t += p.weight * p.pose.translation();
    Eigen::Vector4d c = p.pose.rotation().coeffs();
    if (c.dot(ref.rotation().coeffs()) < 0.0) c = -c;
    q += p.weight * c;
  }
  if (!(wsum > 0.0)) return ref;
  t /= wsum;
  Quat mean(q[3], q[0], q[1], q[2]);
  if (!(mean.norm() > 0.0)) return Pose(t, ref.rotation());
  Pose est(t, mean);
  if (ps.planar) est = clamp_planar(est, ps.fixed_height);
  return est;
}

StepResult mcl_step(const ParticleSet& ps, const Pose& odom_delta, const FeatureImage& image,
                    const CameraIntrinsics& intr, const OctreeLanguageMap& map, const MclConfig& config,
                    std::uint64_t step_index) {
  const ParticleSet predicted = predict(ps, odom_delta, config.motion, config.seed, step_index);

  Rng sample_rng = make_stream(config.seed, {step_index, 2});
  ObservationSample obs;
  if (config.sampling == SamplingStrategy::kStratified) {
    if (config.centroid_subset == 0) {
      obs = build_sampling_masks(image, intr, map.db(), config.rays, sample_rng);
    } else {
      const FeatureDb centroids = select_centroids(map.db(), config.centroid_subset, sample_rng);
      obs = build_sampling_masks(image, intr, centroids, config.rays, sample_rng);
    }
  } else {
    obs = sample_uniform(image, intr, config.rays, sample_rng);
  }

  WeighResult weighed = weigh(predicted, obs, map, config.max_range);
  StepResult out;
  out.estimate = estimate_pose(weighed.particles, config.estimate_radius_t, config.estimate_radius_r_deg);

  Rng resample_rng = make_stream(config.seed, {step_index, 3});
  const double ess = effective_sample_size(weighed.particles);
  ResampleResult rs = resample(weighed.particles, config.ess_fraction, resample_rng);
  out.particles = std::move(rs.particles);

  out.diagnostics = {step_index, ess, weighed.mean_likelihood, weighed.miss_ratio, weighed.rejected, rs.resampled,
                     out.estimate};
  return out;
}

std::string diagnostics_csv_header() {
  return "step,ess,mean_L,miss_ratio,est_x,est_y,est_z,est_qx,est_qy,est_qz,est_qw";
}

std::string diagnostics_csv_row(const StepDiagnostics& d) {
  std::ostringstream os;
  os << std::setprecision(10) << d.step << ',' << d.ess << ',' << d.mean_likelihood << ',' << d.miss_ratio;
  const Vec3& t = d.estimate.translation();
  const Quat& q = d.estimate.rotation();
  os << ',' << t.x() << ',' << t.y() << ',' << t.z() << ',' << q.x() << ',' << q.y() << ',' << q.z() << ','
     << q.w();
  return os.str();
}

}  // namespace omcl
