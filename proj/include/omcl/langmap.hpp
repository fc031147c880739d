#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "omcl/features.hpp"
#include "omcl/geometry.hpp"

namespace omcl {

struct VoxelKey {
  std::int32_t x = 0, y = 0, z = 0;
  friend auto operator<=>(const VoxelKey&, const VoxelKey&) = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint32_t>(k.x);
    h = h * 0x9e3779b97f4a7c15ULL ^ static_cast<std::uint32_t>(k.y);
    h = h * 0x9e3779b97f4a7c15ULL ^ static_cast<std::uint32_t>(k.z);
    return static_cast<std::size_t>(mix64(h));
  }
};

/// First occupied voxel along a ray. `voxel`, `feature_index` and `range`
/// are meaningful only when `hit` is true.
struct RayHit {
  bool hit = false;
  VoxelKey voxel{};
  std::uint32_t feature_index = 0;
  double range = 0.0;
};

/// Immutable sparse voxel octree mapping voxel keys to 32-bit payloads.
/// Interior nodes have eight children; leaves are dense 8³ bricks. Empty
/// subtrees are not allocated, and lookups report the extent of the empty
/// cell they landed in so traversals can skip probing inside it.
class VoxelOctree {
 public:
  static constexpr std::uint32_t kEmpty = 0xffffffffu;
  static constexpr int kBrickBits = 3;
  static constexpr int kBrickSide = 1 << kBrickBits;

  VoxelOctree() = default;
  explicit VoxelOctree(std::span<const std::pair<VoxelKey, std::uint32_t>> voxels);

  std::uint32_t lookup(const VoxelKey& k) const;

  /// Region containing `k` over which the answer is known: either an
  /// all-empty cube, or the brick holding `k` (then `brick` is non-null).
  struct Probe {
    const std::uint32_t* brick = nullptr;
    VoxelKey lo{};
    std::int32_t size = 1;
  };
  Probe probe(const VoxelKey& k) const;

  bool empty() const { return nodes_.empty(); }
  const VoxelKey& base() const { return base_; }
  std::int32_t side() const { return side_; }
  std::size_t brick_count() const { return bricks_.size() / (kBrickSide * kBrickSide * kBrickSide); }

 private:
  VoxelKey base_{};
  std::int32_t side_ = 0;  // root cube edge in voxels
  int depth_ = 0;           // interior levels above the bricks
  std::vector<std::array<std::uint32_t, 8>> nodes_;  // child 0 means "none"
  std::vector<std::uint32_t> bricks_;
};

/// Sparse voxel map of open-vocabulary features.
///
/// Lifecycle: while unfinalized, each occupied voxel holds a running-mean
/// accumulator. finalize() deduplicates the means into an attached FeatureDb
/// and each voxel then stores a DB index; the map is read-only afterwards
/// apart from grounding remaps, and safe to share across threads.
class OctreeLanguageMap {
 public:
  OctreeLanguageMap(double resolution, const Vec3& origin, std::size_t dim);

  double resolution() const { return resolution_; }
  const Vec3& origin() const { return origin_; }
  std::size_t dim() const { return dim_; }
  bool finalized() const { return finalized_; }

  VoxelKey key_of(const Vec3& p) const;
  Vec3 center_of(const VoxelKey& k) const;
  std::size_t voxel_count() const;

  // -- mapping (unfinalized) ------------------------------------------------

  /// Adds per-point features (one row of `dim` floats per point) into the
  /// running means of the voxels the points fall in. Non-finite points are
  /// skipped and tallied in skipped_points().
  void integrate(std::span<const Vec3> points, std::span<const float> features);
  void integrate_frame(std::span<const Vec3> points, std::span<const FeatureVec> features);
  std::size_t skipped_points() const { return skipped_points_; }

  struct AccumulatorView {
    std::span<const float> mean;
    std::uint32_t count = 0;
  };
  std::optional<AccumulatorView> accumulator(const VoxelKey& k) const;
  /// Accumulator keys in lexicographic order.
  std::vector<VoxelKey> accumulator_keys() const;

  /// Re-normalizes every mean, streams them in key order through the greedy
  /// deduplicating DB builder, and replaces accumulators by DB indices.
  /// Means with norm < 1e-8 are dropped. Returns the attached DB.
  const FeatureDb& finalize(double tau);

  // -- finalized ------------------------------------------------------------

  const FeatureDb& db() const;
  /// Occupied voxels with their DB index, sorted by key.
  const std::vector<std::pair<VoxelKey, std::uint32_t>>& voxels() const;
  std::optional<std::uint32_t> index_at(const VoxelKey& k) const;

  /// Rewrites voxel indices through `remap`; voxels with an absent entry are
  /// removed and the attached DB becomes `grounded`.
  void apply_grounding_remap(std::span<const std::optional<std::uint32_t>> remap, FeatureDb grounded);

  /// First occupied voxel along each ray (incremental grid traversal).
  std::vector<RayHit> raytrace_first_hit(const Vec3& origin, std::span<const Vec3> directions,
                                         double max_range) const;
  /// Single-ray form; `direction` must be unit-norm (checked).
  RayHit trace(const Vec3& origin, const Vec3& direction, double max_range) const;
  /// Traversal without the unit-norm check, for hot loops whose directions
  /// are unit by construction.
  RayHit trace_unchecked(const Vec3& origin, const Vec3& direction, double max_range) const;
  /// Instrumented traversal: calls `visit(key, entry_range)` for each voxel
  /// stepped through, up to and including the hit.
  RayHit trace_visit(const Vec3& origin, const Vec3& direction, double max_range,
                     const std::function<void(const VoxelKey&, double)>& visit) const;

  /// Vertical averaging: one voxel at z = 0 per occupied (x, y) column holding
  /// the DB entry nearest to the renormalized mean of the column's entries.
  OctreeLanguageMap project_floorplan() const;

  /// Builds a finalized map directly (used by the loader and projections).
  static OctreeLanguageMap from_finalized(double resolution, const Vec3& origin, FeatureDb db,
                                          std::vector<std::pair<VoxelKey, std::uint32_t>> voxels);

  const VoxelOctree& octree() const { return octree_; }

  friend bool operator==(const OctreeLanguageMap& a, const OctreeLanguageMap& b);

 private:
  void require_finalized(const char* what) const;
  void require_unfinalized(const char* what) const;
  void rebuild_octree();
  template <typename Visit>
  RayHit traverse(const Vec3& origin, const Vec3& direction, double max_range, Visit&& visit) const;

  double resolution_;
  Vec3 origin_;
  std::size_t dim_;
  bool finalized_ = false;
  std::size_t skipped_points_ = 0;

  // unfinalized state
  std::unordered_map<VoxelKey, std::uint32_t, VoxelKeyHash> slots_;
  std::vector<float> means_;  // slot * dim_
  std::vector<std::uint32_t> counts_;

  // finalized state
  FeatureDb db_;
  std::vector<std::pair<VoxelKey, std::uint32_t>> voxels_;
  VoxelOctree octree_;
};

struct CloudPoint {
  Vec3 position;
  FeatureVec feature;
};

/// Voxelizes a feature point cloud (equivalent to one integrate call).
/// Throws InvalidArgument on an empty cloud.
OctreeLanguageMap from_point_cloud(std::span<const CloudPoint> points, double resolution,
                                   const Vec3& origin = Vec3::Zero());

/// Binary map file ("OMCL", version 1, little-endian). The map must be
/// finalized.
void save_map(const OctreeLanguageMap& map, const std::filesystem::path& path);
OctreeLanguageMap load_map(const std::filesystem::path& path);

/// Text feature cloud: header `OMCL-CLOUD F=<F>`, then `x y z f1 ... fF`
/// per line. Features are normalized on read.
std::vector<CloudPoint> read_feature_cloud(const std::filesystem::path& path);
void write_feature_cloud(const std::filesystem::path& path, std::span<const CloudPoint> cloud);

}  // namespace omcl
