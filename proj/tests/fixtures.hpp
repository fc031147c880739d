// Shared random-scene helpers for the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "omcl/features.hpp"
#include "omcl/langmap.hpp"
#include "oracles.hpp"

namespace fixture {

inline omcl::FeatureVec random_unit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> n;
  std::vector<double> v(dim);
  for (double& x : v) x = n(rng);
  return omcl::FeatureVec::normalized(v);
}

inline omcl::FeatureDb random_db(std::mt19937_64& rng, std::size_t entries, std::size_t dim) {
  omcl::FeatureDb db(dim, 0.0);
  for (std::size_t i = 0; i < entries; ++i) db.append_unchecked(random_unit(rng, dim));
  return db;
}

/// Dense occupancy cube `side`³ with the map built from it.
struct OccupancyScene {
  int side = 0;
  double resolution = 0;
  omcl::Vec3 origin;
  std::vector<std::uint8_t> occ;  // x fastest
  omcl::OctreeLanguageMap map{1.0, omcl::Vec3::Zero(), 1};

  bool occupied(const oracle::Key& k) const {
    for (int a = 0; a < 3; ++a)
      if (k[a] < 0 || k[a] >= side) return false;
    return occ[(k[2] * side + k[1]) * side + k[0]] != 0;
  }
};

inline OccupancyScene random_occupancy(std::mt19937_64& rng, int side, double density) {
  OccupancyScene s;
  s.side = side;
  std::uniform_real_distribution<double> res_d(0.02, 0.2), org_d(-3.0, 3.0), u01(0.0, 1.0);
  s.resolution = res_d(rng);
  s.origin = omcl::Vec3(org_d(rng), org_d(rng), org_d(rng));
  s.occ.assign(static_cast<std::size_t>(side) * side * side, 0);
  omcl::FeatureDb db = random_db(rng, 6, 8);
  std::uniform_int_distribution<std::uint32_t> idx_d(0, 5);
  std::vector<std::pair<omcl::VoxelKey, std::uint32_t>> vox;
  for (int z = 0; z < side; ++z)
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x)
        if (u01(rng) < density) {
          s.occ[(z * side + y) * side + x] = 1;
          vox.push_back({{x, y, z}, idx_d(rng)});
        }
  s.map = omcl::OctreeLanguageMap::from_finalized(s.resolution, s.origin, std::move(db), std::move(vox));
  return s;
}

/// Distance along (o, d) to where the ray leaves the scene cube.
inline double exit_distance(const OccupancyScene& s, const omcl::Vec3& o, const omcl::Vec3& d) {
  double t = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) continue;
    const double bound = s.origin[a] + (d[a] > 0 ? s.side * s.resolution : 0.0);
    t = std::min(t, (bound - o[a]) / d[a]);
  }
  return std::max(t, 0.0);
}

struct RayComparison {
  std::size_t compared = 0;
  std::size_t excluded = 0;  // within the boundary tolerance
  std::size_t mismatches = 0;
};

/// Traces `rays` random rays from inside the cube with the map and with the
/// marching oracle, comparing the first-hit voxel.
inline RayComparison compare_with_march(const OccupancyScene& s, std::mt19937_64& rng, int rays) {
  RayComparison c;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n;
  const double extent = s.side * s.resolution;
  const double tol = 1e-6 * s.resolution;
  auto occ = [&](const oracle::Key& k) { return s.occupied(k); };
  for (int r = 0; r < rays; ++r) {
    const omcl::Vec3 o = s.origin + extent * omcl::Vec3(u(rng), u(rng), u(rng));
    const omcl::Vec3 d = omcl::Vec3(n(rng), n(rng), n(rng)).normalized();
    const double range = exit_distance(s, o, d);
    const oracle::MarchResult want = oracle::march(occ, s.origin, s.resolution, o, d, range, tol);
    if (want.ambiguous) {
      ++c.excluded;
      continue;
    }
    ++c.compared;
    const omcl::RayHit got = s.map.trace(o, d, range);
    bool same = got.hit == want.hit;
    if (same && got.hit)
      same = got.voxel.x == want.voxel[0] && got.voxel.y == want.voxel[1] && got.voxel.z == want.voxel[2];
    if (!same) ++c.mismatches;
  }
  return c;
}

}  // namespace fixture
