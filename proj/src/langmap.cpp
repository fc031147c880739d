#include "omcl/langmap.hpp"

#include <algorithm>
#include <type_traits>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "binary_io.hpp"
#include "omcl/errors.hpp"

namespace omcl {

// ---------------------------------------------------------------------------
// VoxelOctree

namespace {

constexpr std::int32_t floor_div(std::int32_t a, std::int32_t b) {
  return a >= 0 ? a / b : -((-a + b - 1) / b);
}

constexpr std::size_t kBrickVolume = VoxelOctree::kBrickSide * VoxelOctree::kBrickSide * VoxelOctree::kBrickSide;

inline std::size_t brick_local(std::int32_t rx, std::int32_t ry, std::int32_t rz) {
  return static_cast<std::size_t>((rx & 7) | ((ry & 7) << 3) | ((rz & 7) << 6));
}

inline unsigned child_slot(std::int32_t rx, std::int32_t ry, std::int32_t rz, int shift) {
  return static_cast<unsigned>(((rx >> shift) & 1) | (((ry >> shift) & 1) << 1) | (((rz >> shift) & 1) << 2));
}

}  // namespace

VoxelOctree::VoxelOctree(std::span<const std::pair<VoxelKey, std::uint32_t>> voxels) {
  if (voxels.empty()) return;
  VoxelKey lo = voxels.front().first, hi = lo;
  for (const auto& [k, _] : voxels) {
    lo = {std::min(lo.x, k.x), std::min(lo.y, k.y), std::min(lo.z, k.z)};
    hi = {std::max(hi.x, k.x), std::max(hi.y, k.y), std::max(hi.z, k.z)};
  }
  base_ = {floor_div(lo.x, kBrickSide) * kBrickSide, floor_div(lo.y, kBrickSide) * kBrickSide,
           floor_div(lo.z, kBrickSide) * kBrickSide};
  const std::int64_t extent =
      1 + std::max({std::int64_t{hi.x} - base_.x, std::int64_t{hi.y} - base_.y, std::int64_t{hi.z} - base_.z});
  std::int64_t side = 2 * kBrickSide;
  depth_ = 1;
  while (side < extent) {
    side *= 2;
    ++depth_;
  }
  if (side > (std::int64_t{1} << 30)) throw InvalidArgument("voxel extent too large for the octree");
  side_ = static_cast<std::int32_t>(side);

  nodes_.push_back({});
  for (const auto& [k, payload] : voxels) {
    const std::int32_t rx = k.x - base_.x, ry = k.y - base_.y, rz = k.z - base_.z;
    std::uint32_t node = 0;
    std::uint32_t brick = 0;
    for (int l = depth_; l >= 1; --l) {
      const unsigned ci = child_slot(rx, ry, rz, l - 1 + kBrickBits);
      std::uint32_t child = nodes_[node][ci];
      if (l > 1) {
        if (child == 0) {
          child = static_cast<std::uint32_t>(nodes_.size());
          nodes_.push_back({});
          nodes_[node][ci] = child;
        }
        node = child;
      } else {
        if (child == 0) {
          child = static_cast<std::uint32_t>(bricks_.size() / kBrickVolume) + 1;
          bricks_.resize(bricks_.size() + kBrickVolume, kEmpty);
          nodes_[node][ci] = child;
        }
        brick = child - 1;
      }
    }
    bricks_[brick * kBrickVolume + brick_local(rx, ry, rz)] = payload;
  }
}

VoxelOctree::Probe VoxelOctree::probe(const VoxelKey& k) const {
  if (nodes_.empty()) return {nullptr, k, 1};
  const std::int32_t rx = k.x - base_.x, ry = k.y - base_.y, rz = k.z - base_.z;
  if (rx < 0 || ry < 0 || rz < 0 || rx >= side_ || ry >= side_ || rz >= side_) return {nullptr, k, 1};
  std::uint32_t node = 0;
  for (int l = depth_; l >= 1; --l) {
    const int shift = l - 1 + kBrickBits;
    const std::uint32_t child = nodes_[node][child_slot(rx, ry, rz, shift)];
    if (child == 0) {
      const std::int32_t mask = ~((std::int32_t{1} << shift) - 1);
      return {nullptr, {base_.x + (rx & mask), base_.y + (ry & mask), base_.z + (rz & mask)}, std::int32_t{1} << shift};
    }
    if (l == 1) {
      const std::int32_t mask = ~(kBrickSide - 1);
      return {bricks_.data() + (child - 1) * kBrickVolume,
              {base_.x + (rx & mask), base_.y + (ry & mask), base_.z + (rz & mask)},
              kBrickSide};
    }
    node = child;
  }
  return {nullptr, k, 1};
}

std::uint32_t VoxelOctree::lookup(const VoxelKey& k) const {
  const Probe p = probe(k);
  if (!p.brick) return kEmpty;
  return p.brick[brick_local(k.x - p.lo.x, k.y - p.lo.y, k.z - p.lo.z)];
}

// ---------------------------------------------------------------------------
// OctreeLanguageMap

OctreeLanguageMap::OctreeLanguageMap(double resolution, const Vec3& origin, std::size_t dim)
    : resolution_(resolution), origin_(origin), dim_(dim) {
  if (!(resolution > 0.0) || !std::isfinite(resolution)) throw InvalidArgument("map resolution must be positive");
  if (!origin.allFinite()) throw InvalidArgument("map origin must be finite");
}

VoxelKey OctreeLanguageMap::key_of(const Vec3& p) const {
  const Vec3 g = (p - origin_) / resolution_;
  return {static_cast<std::int32_t>(std::floor(g.x())), static_cast<std::int32_t>(std::floor(g.y())),
          static_cast<std::int32_t>(std::floor(g.z()))};
}

Vec3 OctreeLanguageMap::center_of(const VoxelKey& k) const {
  return origin_ + resolution_ * Vec3(k.x + 0.5, k.y + 0.5, k.z + 0.5);
}

std::size_t OctreeLanguageMap::voxel_count() const { return finalized_ ? voxels_.size() : counts_.size(); }

void OctreeLanguageMap::require_finalized(const char* what) const {
  if (!finalized_) throw StateError(std::string(what) + ": map is not finalized");
}

void OctreeLanguageMap::require_unfinalized(const char* what) const {
  if (finalized_) throw StateError(std::string(what) + ": map is already finalized");
}

void OctreeLanguageMap::integrate(std::span<const Vec3> points, std::span<const float> features) {
  require_unfinalized("integrate");
  if (features.size() != points.size() * dim_)
    throw InvalidArgument("integrate: points and features differ in length");
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3& p = points[i];
    if (!p.allFinite()) {
      ++skipped_points_;
      continue;
    }
    const VoxelKey k = key_of(p);
    auto [it, inserted] = slots_.try_emplace(k, static_cast<std::uint32_t>(counts_.size()));
    const std::size_t slot = it->second;
    const float* f = features.data() + i * dim_;
    if (inserted) {
      counts_.push_back(1);
      means_.insert(means_.end(), f, f + dim_);
      continue;
    }
    const std::uint32_t c = ++counts_[slot];
    float* m = means_.data() + slot * dim_;
    for (std::size_t d = 0; d < dim_; ++d) {
      const double md = m[d];
      m[d] = static_cast<float>(md + (static_cast<double>(f[d]) - md) / c);
    }
  }
}

void OctreeLanguageMap::integrate_frame(std::span<const Vec3> points, std::span<const FeatureVec> features) {
  require_unfinalized("integrate_frame");
  if (points.size() != features.size()) throw InvalidArgument("integrate_frame: points and features differ in length");
  std::vector<float> flat;
  flat.reserve(features.size() * dim_);
  for (const FeatureVec& f : features) {
    if (f.dim() != dim_) throw InvalidArgument("integrate_frame: feature dimension mismatch");
    flat.insert(flat.end(), f.values().begin(), f.values().end());
  }
  integrate(points, flat);
}

std::optional<OctreeLanguageMap::AccumulatorView> OctreeLanguageMap::accumulator(const VoxelKey& k) const {
  require_unfinalized("accumulator");
  const auto it = slots_.find(k);
  if (it == slots_.end()) return std::nullopt;
  return AccumulatorView{{means_.data() + std::size_t{it->second} * dim_, dim_}, counts_[it->second]};
}

std::vector<VoxelKey> OctreeLanguageMap::accumulator_keys() const {
  std::vector<VoxelKey> keys;
  keys.reserve(slots_.size());
  for (const auto& [k, _] : slots_) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  return keys;
}

const FeatureDb& OctreeLanguageMap::finalize(double tau) {
  require_unfinalized("finalize");
  std::vector<std::pair<VoxelKey, std::uint32_t>> order;
  order.reserve(slots_.size());
  for (const auto& [k, slot] : slots_) order.emplace_back(k, slot);
  std::sort(order.begin(), order.end());

  FeatureDbBuilder builder(dim_, tau);
  std::vector<float> unit(dim_);
  voxels_.clear();
  voxels_.reserve(order.size());
  for (const auto& [k, slot] : order) {
    const std::span<const float> mean(means_.data() + std::size_t{slot} * dim_, dim_);
    const double n = norm(mean);
    if (!(n >= 1e-8)) continue;
    for (std::size_t d = 0; d < dim_; ++d) unit[d] = static_cast<float>(mean[d] / n);
    voxels_.emplace_back(k, builder.add(unit));
  }
  db_ = std::move(builder).release();

  slots_ = {};
  means_ = {};
  counts_ = {};
  finalized_ = true;
  rebuild_octree();
  return db_;
}

void OctreeLanguageMap::rebuild_octree() { octree_ = VoxelOctree(voxels_); }

const FeatureDb& OctreeLanguageMap::db() const {
  require_finalized("db");
  return db_;
}

const std::vector<std::pair<VoxelKey, std::uint32_t>>& OctreeLanguageMap::voxels() const {
  require_finalized("voxels");
  return voxels_;
}

std::optional<std::uint32_t> OctreeLanguageMap::index_at(const VoxelKey& k) const {
  require_finalized("index_at");
  const std::uint32_t v = octree_.lookup(k);
  if (v == VoxelOctree::kEmpty) return std::nullopt;
  return v;
}

void OctreeLanguageMap::apply_grounding_remap(std::span<const std::optional<std::uint32_t>> remap,
                                              FeatureDb grounded) {
  require_finalized("apply_grounding_remap");
  if (grounded.dim() != dim_ && !grounded.empty()) throw InvalidArgument("grounded DB dimension mismatch");
  std::vector<std::pair<VoxelKey, std::uint32_t>> kept;
  kept.reserve(voxels_.size());
  for (const auto& [k, idx] : voxels_) {
    if (idx >= remap.size()) throw CorruptionError("voxel feature index outside the grounding remap");
    if (!remap[idx]) continue;
    if (*remap[idx] >= grounded.size()) throw CorruptionError("grounding remap points outside the grounded DB");
    kept.emplace_back(k, *remap[idx]);
  }
  voxels_ = std::move(kept);
  db_ = std::move(grounded);
  rebuild_octree();
}

template <typename Visit>
RayHit OctreeLanguageMap::traverse(const Vec3& origin, const Vec3& direction, double max_range, Visit&& visit) const {
  RayHit miss;
  if (octree_.empty()) return miss;

  const double nudge = 1e-9 * resolution_;
  const Vec3 o = origin + direction * nudge;
  const double inv_res = 1.0 / resolution_;
  const double inf = std::numeric_limits<double>::infinity();
  constexpr bool kSkipEmpty = std::is_empty_v<std::remove_cvref_t<Visit>>;

  std::int32_t cur[3];
  std::int32_t step[3];
  double t_max[3];
  double t_delta[3];
  for (int a = 0; a < 3; ++a) {
    const double g = (o[a] - origin_[a]) * inv_res;
    if (!std::isfinite(g) || std::abs(g) > 1e9) return miss;
    cur[a] = static_cast<std::int32_t>(std::floor(g));
    const double d = direction[a];
    if (d > 0.0) {
      step[a] = 1;
      t_max[a] = ((cur[a] + 1) * resolution_ + origin_[a] - o[a]) / d;
      t_delta[a] = resolution_ / d;
    } else if (d < 0.0) {
      step[a] = -1;
      t_max[a] = (cur[a] * resolution_ + origin_[a] - o[a]) / d;
      t_delta[a] = -resolution_ / d;
    } else {
      step[a] = 0;
      t_max[a] = inf;
      t_delta[a] = inf;
    }
  }

  const VoxelKey root_lo = octree_.base();
  const std::int32_t root_side = octree_.side();
  VoxelOctree::Probe region{nullptr, {cur[0], cur[1], cur[2]}, 0};  // size 0: nothing known yet
  double t_entry = 0.0;
  for (;;) {
    const VoxelKey k{cur[0], cur[1], cur[2]};
    if (k.x < region.lo.x || k.y < region.lo.y || k.z < region.lo.z || k.x >= region.lo.x + region.size ||
        k.y >= region.lo.y + region.size || k.z >= region.lo.z + region.size) {
      region = octree_.probe(k);
      if (!region.brick && region.size == 1) {
        // Outside the root cube: stop once the ray is moving away from it.
        const std::int32_t lo[3] = {root_lo.x, root_lo.y, root_lo.z};
        for (int a = 0; a < 3; ++a) {
          if ((cur[a] < lo[a] && step[a] <= 0) || (cur[a] >= lo[a] + root_side && step[a] >= 0)) return miss;
        }
      }
    }
    const double range = t_entry == 0.0 ? 0.0 : t_entry + nudge;
    visit(k, range);
    if (region.brick) {
      const std::uint32_t payload =
          region.brick[brick_local(k.x - region.lo.x, k.y - region.lo.y, k.z - region.lo.z)];
      if (payload != VoxelOctree::kEmpty) return RayHit{true, k, payload, range};
    } else if constexpr (kSkipEmpty) {
      if (region.size > 1) {
        // Jump across the empty cube: advance every axis by the number of
        // boundary crossings before the exit boundary.
        const std::int32_t lo[3] = {region.lo.x, region.lo.y, region.lo.z};
        int exit_axis = -1;
        double t_exit = inf;
        for (int a = 0; a < 3; ++a) {
          if (step[a] == 0) continue;
          const std::int32_t last = step[a] > 0 ? lo[a] + region.size - 1 : lo[a];
          const double t = t_max[a] + std::abs(last - cur[a]) * t_delta[a];
          if (t < t_exit || (t == t_exit && a < exit_axis)) {
            t_exit = t;
            exit_axis = a;
          }
        }
        for (int a = 0; a < 3; ++a) {
          if (step[a] == 0) continue;
          const std::int32_t last = step[a] > 0 ? lo[a] + region.size - 1 : lo[a];
          if (a == exit_axis) {
            t_max[a] += std::abs(last - cur[a]) * t_delta[a];
            cur[a] = last;
          }
        }
        // Voxels strictly before t_exit on the other axes, resolving ties the
        // same way as single steps do.
        for (int a = 0; a < 3; ++a) {
          if (step[a] == 0 || a == exit_axis) continue;
          if (t_max[a] < t_exit || (t_max[a] == t_exit && a < exit_axis)) {
            const double n = std::floor((t_exit - t_max[a]) / t_delta[a]);
            std::int64_t m = static_cast<std::int64_t>(n) + 1;
            double tm = t_max[a] + static_cast<double>(m - 1) * t_delta[a];
            // Fix up floating-point rounding of the division.
            while (m > 1 && !(tm < t_exit || (tm == t_exit && a < exit_axis))) {
              --m;
              tm -= t_delta[a];
            }
            while (tm + t_delta[a] < t_exit || (tm + t_delta[a] == t_exit && a < exit_axis)) {
              ++m;
              tm += t_delta[a];
            }
            cur[a] += static_cast<std::int32_t>(m) * step[a];
            t_max[a] = tm + t_delta[a];
          }
        }
        t_entry = t_max[exit_axis];
        if (!(t_entry + nudge <= max_range)) return miss;
        cur[exit_axis] += step[exit_axis];
        t_max[exit_axis] += t_delta[exit_axis];
        continue;
      }
    }
    int axis;
    if (t_max[0] <= t_max[1] && t_max[0] <= t_max[2])
      axis = 0;
    else if (t_max[1] <= t_max[2])
      axis = 1;
    else
      axis = 2;
    t_entry = t_max[axis];
    if (!(t_entry + nudge <= max_range)) return miss;
    cur[axis] += step[axis];
    t_max[axis] += t_delta[axis];
  }
}

namespace {
struct NoVisit {
  void operator()(const VoxelKey&, double) const {}
};

void check_unit(const Vec3& d) {
  if (!(std::abs(d.norm() - 1.0) <= 1e-6)) throw InvalidArgument("ray direction is not unit-norm");
}
}  // namespace

RayHit OctreeLanguageMap::trace_unchecked(const Vec3& origin, const Vec3& direction, double max_range) const {
  return traverse(origin, direction, max_range, NoVisit{});
}

RayHit OctreeLanguageMap::trace(const Vec3& origin, const Vec3& direction, double max_range) const {
  require_finalized("raytrace");
  check_unit(direction);
  return traverse(origin, direction, max_range, NoVisit{});
}

RayHit OctreeLanguageMap::trace_visit(const Vec3& origin, const Vec3& direction, double max_range,
                                      const std::function<void(const VoxelKey&, double)>& visit) const {
  require_finalized("raytrace");
  check_unit(direction);
  return traverse(origin, direction, max_range, visit);
}

std::vector<RayHit> OctreeLanguageMap::raytrace_first_hit(const Vec3& origin, std::span<const Vec3> directions,
                                                          double max_range) const {
  require_finalized("raytrace_first_hit");
  for (const Vec3& d : directions) check_unit(d);
  std::vector<RayHit> hits(directions.size());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(directions.size());
#pragma omp parallel for schedule(static) if (n > 256)
  for (std::ptrdiff_t i = 0; i < n; ++i) hits[i] = traverse(origin, directions[i], max_range, NoVisit{});
  return hits;
}

OctreeLanguageMap OctreeLanguageMap::project_floorplan() const {
  require_finalized("project_floorplan");
  std::vector<std::pair<VoxelKey, std::uint32_t>> out;
  std::vector<double> sum(dim_);
  std::vector<float> mean(dim_);
  std::size_t i = 0;
  while (i < voxels_.size()) {
    // Lexicographic order keeps each (x, y) column contiguous.
    const VoxelKey col = voxels_[i].first;
    std::fill(sum.begin(), sum.end(), 0.0);
    std::size_t j = i;
    for (; j < voxels_.size() && voxels_[j].first.x == col.x && voxels_[j].first.y == col.y; ++j) {
      const auto e = db_.entry(voxels_[j].second);
      const double n = db_.entry_norm(voxels_[j].second);
      for (std::size_t d = 0; d < dim_; ++d) sum[d] += e[d] / n;
    }
    double sq = 0.0;
    for (double v : sum) sq += v * v;
    std::uint32_t idx = voxels_[i].second;
    if (sq > 0.0) {
      const double n = std::sqrt(sq);
      for (std::size_t d = 0; d < dim_; ++d) mean[d] = static_cast<float>(sum[d] / n);
      idx = static_cast<std::uint32_t>(nearest_feature(db_, mean).index);
    }
    out.emplace_back(VoxelKey{col.x, col.y, 0}, idx);
    i = j;
  }
  return from_finalized(resolution_, origin_, db_, std::move(out));
}

OctreeLanguageMap OctreeLanguageMap::from_finalized(double resolution, const Vec3& origin, FeatureDb db,
                                                    std::vector<std::pair<VoxelKey, std::uint32_t>> voxels) {
  OctreeLanguageMap m(resolution, origin, db.dim());
  std::sort(voxels.begin(), voxels.end());
  for (std::size_t i = 0; i < voxels.size(); ++i) {
    if (voxels[i].second >= db.size()) throw InvalidArgument("voxel index outside the feature DB");
    if (i > 0 && voxels[i].first == voxels[i - 1].first) throw InvalidArgument("duplicate voxel key");
  }
  m.db_ = std::move(db);
  m.voxels_ = std::move(voxels);
  m.finalized_ = true;
  m.rebuild_octree();
  return m;
}

bool operator==(const OctreeLanguageMap& a, const OctreeLanguageMap& b) {
  if (a.resolution_ != b.resolution_ || a.origin_ != b.origin_ || a.dim_ != b.dim_ || a.finalized_ != b.finalized_)
    return false;
  if (a.finalized_) return a.voxels_ == b.voxels_ && a.db_ == b.db_;
  if (a.counts_.size() != b.counts_.size()) return false;
  for (const auto& [k, slot] : a.slots_) {
    const auto it = b.slots_.find(k);
    if (it == b.slots_.end() || a.counts_[slot] != b.counts_[it->second]) return false;
    if (!std::equal(a.means_.begin() + slot * a.dim_, a.means_.begin() + (slot + 1) * a.dim_,
                    b.means_.begin() + it->second * b.dim_))
      return false;
  }
  return true;
}

OctreeLanguageMap from_point_cloud(std::span<const CloudPoint> points, double resolution, const Vec3& origin) {
  if (points.empty()) throw InvalidArgument("from_point_cloud: empty cloud");
  const std::size_t dim = points.front().feature.dim();
  OctreeLanguageMap map(resolution, origin, dim);
  std::vector<Vec3> pos;
  std::vector<float> flat;
  pos.reserve(points.size());
  flat.reserve(points.size() * dim);
  for (const CloudPoint& p : points) {
    if (p.feature.dim() != dim) throw InvalidArgument("from_point_cloud: mixed feature dimensions");
    pos.push_back(p.position);
    flat.insert(flat.end(), p.feature.values().begin(), p.feature.values().end());
  }
  map.integrate(pos, flat);
  return map;
}

// ---------------------------------------------------------------------------
// serialization

namespace {
constexpr char kMapMagic[4] = {'O', 'M', 'C', 'L'};
constexpr std::uint32_t kMapVersion = 1;
}  // namespace

void save_map(const OctreeLanguageMap& map, const std::filesystem::path& path) {
  if (!map.finalized()) throw StateError("save_map: map is not finalized");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open map file for writing: " + path.string());
  detail::LeWriter w(out);
  w.bytes(kMapMagic, 4);
  w.put(kMapVersion);
  w.put(map.resolution());
  for (int a = 0; a < 3; ++a) w.put(map.origin()[a]);
  const FeatureDb& db = map.db();
  w.put(static_cast<std::uint32_t>(map.dim()));
  w.put(static_cast<std::uint32_t>(db.size()));
  for (std::size_t i = 0; i < db.size(); ++i) {
    const std::string& label = db.label(i);
    if (label.size() > 0xffff) throw InvalidArgument("save_map: label longer than 65535 bytes");
    w.put(static_cast<std::uint16_t>(label.size()));
    w.bytes(label.data(), label.size());
    for (float v : db.entry(i)) w.put(v);
  }
  const auto& voxels = map.voxels();
  w.put(static_cast<std::uint64_t>(voxels.size()));
  for (const auto& [k, idx] : voxels) {
    w.put(k.x);
    w.put(k.y);
    w.put(k.z);
    w.put(idx);
  }
  if (!out) throw IoError("failed writing map file: " + path.string());
}

OctreeLanguageMap load_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open map file: " + path.string());
  detail::LeReader r(in, path.string());
  char magic[4];
  r.read(magic, 4);
  if (!std::equal(magic, magic + 4, kMapMagic)) throw FormatError(path.string() + ": not an OMCL map file (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kMapVersion) throw FormatError(path.string() + ": unsupported map version " + std::to_string(version));
  const double resolution = r.get<double>();
  Vec3 origin;
  for (int a = 0; a < 3; ++a) origin[a] = r.get<double>();
  const auto dim = r.get<std::uint32_t>();
  const auto db_size = r.get<std::uint32_t>();
  FeatureDb db(dim, 0.0);
  std::vector<float> values(dim);
  for (std::uint32_t i = 0; i < db_size; ++i) {
    const auto len = r.get<std::uint16_t>();
    std::string label(len, '\0');
    r.read(label.data(), len);
    for (float& v : values) v = r.get<float>();
    db.append_unchecked(values, std::move(label));
  }
  const auto count = r.get<std::uint64_t>();
  std::vector<std::pair<VoxelKey, std::uint32_t>> voxels;
  voxels.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 24)));
  for (std::uint64_t i = 0; i < count; ++i) {
    VoxelKey k;
    k.x = r.get<std::int32_t>();
    k.y = r.get<std::int32_t>();
    k.z = r.get<std::int32_t>();
    voxels.emplace_back(k, r.get<std::uint32_t>());
  }
  try {
    return OctreeLanguageMap::from_finalized(resolution, origin, std::move(db), std::move(voxels));
  } catch (const InvalidArgument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<CloudPoint> read_feature_cloud(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open feature cloud: " + path.string());
  std::string header;
  std::getline(in, header);
  std::size_t dim = 0;
  {
    std::istringstream hs(header);
    std::string tag, fld;
    hs >> tag >> fld;
    if (tag != "OMCL-CLOUD" || fld.rfind("F=", 0) != 0) throw FormatError(path.string() + ": missing OMCL-CLOUD header");
    try {
      dim = std::stoul(fld.substr(2));
    } catch (const std::exception&) {
      throw FormatError(path.string() + ": bad feature dimension in header");
    }
    if (dim < 1) throw FormatError(path.string() + ": bad feature dimension in header");
  }
  std::vector<CloudPoint> cloud;
  std::vector<double> f(dim);
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Vec3 p;
    bool ok = static_cast<bool>(ls >> p.x() >> p.y() >> p.z());
    for (std::size_t d = 0; ok && d < dim; ++d) ok = static_cast<bool>(ls >> f[d]);
    if (!ok) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected x y z and " +
                               std::to_string(dim) + " feature values");
    cloud.push_back({p, FeatureVec::normalized(std::span<const double>(f))});
  }
  return cloud;
}

void write_feature_cloud(const std::filesystem::path& path, std::span<const CloudPoint> cloud) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open feature cloud for writing: " + path.string());
  const std::size_t dim = cloud.empty() ? 0 : cloud.front().feature.dim();
  out << "OMCL-CLOUD F=" << dim << '\n' << std::setprecision(9);
  for (const CloudPoint& p : cloud) {
    out << std::setprecision(17) << p.position.x() << ' ' << p.position.y() << ' ' << p.position.z()
        << std::setprecision(9);
    for (float v : p.feature.values()) out << ' ' << v;
    out << '\n';
  }
  if (!out) throw IoError("failed writing feature cloud: " + path.string());
}

}  // namespace omcl
