#include "omcl/sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <numbers>

#include "binary_io.hpp"
#include "omcl/errors.hpp"
#include "omcl/rng.hpp"

namespace omcl {

void SceneSpec::validate() const {
  if (!(extent.x() > 0 && extent.y() > 0 && extent.z() > 0)) throw InvalidArgument("scene: extent must be positive");
  if (!(resolution > 0.0)) throw InvalidArgument("scene: resolution must be positive");
  if (rooms_x == 0 || rooms_y == 0) throw InvalidArgument("scene: room grid must be at least 1x1");
  if (!(wall_thickness > 0.0)) throw InvalidArgument("scene: wall thickness must be positive");
  if (!(door_width > 0.0) || !(door_height > 0.0)) throw InvalidArgument("scene: door size must be positive");
  const int rooms = static_cast<int>(rooms_x * rooms_y);
  for (const ObjectClassSpec& o : objects) {
    if (o.label.empty() || o.label == kFloorLabel || o.label == kWallLabel || o.label == kVoidLabel ||
        o.label == kCeilingLabel)
      throw InvalidArgument("scene: object label '" + o.label + "' is empty or reserved");
    if (o.room >= rooms) throw InvalidArgument("scene: object class '" + o.label + "' refers to a missing room");
    for (int a = 0; a < 3; ++a)
      if (!(o.size_min[a] > 0.0) || o.size_max[a] < o.size_min[a])
        throw InvalidArgument("scene: object class '" + o.label + "' has an invalid size range");
  }
}

DenseScene::DenseScene(int nx, int ny, int nz, double resolution)
    : nx_(nx), ny_(ny), nz_(nz), resolution_(resolution),
      cells_(static_cast<std::size_t>(nx) * ny * nz, std::int16_t{-1}) {}

std::array<int, 3> DenseScene::cell_of(const Vec3& p) const {
  return {static_cast<int>(std::floor(p.x() / resolution_)), static_cast<int>(std::floor(p.y() / resolution_)),
          static_cast<int>(std::floor(p.z() / resolution_))};
}

int DenseScene::label_at_point(const Vec3& p) const {
  const auto c = cell_of(p);
  return in_bounds(c[0], c[1], c[2]) ? label_at(c[0], c[1], c[2]) : -1;
}

int DenseScene::add_label(const std::string& l) {
  if (const int i = label_index(l); i >= 0) return i;
  labels_.push_back(l);
  return static_cast<int>(labels_.size()) - 1;
}

int DenseScene::label_index(const std::string& l) const {
  const auto it = std::find(labels_.begin(), labels_.end(), l);
  return it == labels_.end() ? -1 : static_cast<int>(it - labels_.begin());
}

int DenseScene::room_of(double x, double y) const {
  for (std::size_t r = 0; r < rooms_.size(); ++r)
    if (x >= rooms_[r].x0 && x < rooms_[r].x1 && y >= rooms_[r].y0 && y < rooms_[r].y1) return static_cast<int>(r);
  return -1;
}

bool DenseScene::column_free(int i, int j, double height) const {
  // The layer directly on the floor holds flat items (rugs, mats) that can
  // be walked over.
  const int top = std::min(nz_, static_cast<int>(std::ceil(height / resolution_)) + 1);
  for (int k = 2; k < top; ++k)
    if (label_at(i, j, k) >= 0) return false;
  return true;
}

std::vector<char> walkable_mask(const DenseScene& scene, double clearance, double height) {
  const int nx = scene.nx(), ny = scene.ny();
  std::vector<char> mask(static_cast<std::size_t>(nx) * ny, 1);
  const int r = static_cast<int>(std::ceil(clearance / scene.resolution()));
  std::vector<std::pair<int, int>> disc;
  for (int dx = -r; dx <= r; ++dx)
    for (int dy = -r; dy <= r; ++dy)
      if ((dx * dx + dy * dy) * scene.resolution() * scene.resolution() <= clearance * clearance)
        disc.emplace_back(dx, dy);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      if (scene.column_free(i, j, height)) continue;
      for (const auto& [dx, dy] : disc) {
        const int a = i + dx, b = j + dy;
        if (a >= 0 && b >= 0 && a < nx && b < ny) mask[static_cast<std::size_t>(b) * nx + a] = 0;
      }
    }
  // Keep `clearance` from the outer boundary as well.
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      if (std::min({i, j, nx - 1 - i, ny - 1 - j}) < r) mask[static_cast<std::size_t>(j) * nx + i] = 0;
  return mask;
}

std::size_t footprint_components(const DenseScene& scene, double clearance, double height) {
  const int nx = scene.nx(), ny = scene.ny();
  std::vector<char> mask = walkable_mask(scene, clearance, height);
  std::size_t components = 0;
  std::vector<int> stack;
  for (int start = 0; start < nx * ny; ++start) {
    if (!mask[start]) continue;
    ++components;
    mask[start] = 0;
    stack.push_back(start);
    while (!stack.empty()) {
      const int c = stack.back();
      stack.pop_back();
      const int i = c % nx, j = c / nx;
      const int nb[4][2] = {{i + 1, j}, {i - 1, j}, {i, j + 1}, {i, j - 1}};
      for (const auto& n : nb) {
        if (n[0] < 0 || n[1] < 0 || n[0] >= nx || n[1] >= ny) continue;
        const int id = n[1] * nx + n[0];
        if (mask[id]) {
          mask[id] = 0;
          stack.push_back(id);
        }
      }
    }
  }
  return components;
}

namespace {

struct Rect {
  double x0, y0, x1, y1;
  bool overlaps(const Rect& o, double gap) const {
    return x0 < o.x1 + gap && o.x0 < x1 + gap && y0 < o.y1 + gap && o.y0 < y1 + gap;
  }
};

constexpr double kObjectGap = 0.5;       // free space between objects
constexpr double kDoorKeepOut = 0.8;     // free space on both sides of a door
constexpr double kPlacementClearance = 0.35;
constexpr int kPlacementRetries = 200;

}  // namespace

DenseScene generate_scene(const SceneSpec& spec) {
  spec.validate();
  const double res = spec.resolution;
  const int nx = static_cast<int>(std::lround(spec.extent.x() / res));
  const int ny = static_cast<int>(std::lround(spec.extent.y() / res));
  const int nz = static_cast<int>(std::lround(spec.extent.z() / res));
  if (nx < 4 || ny < 4 || nz < 3) throw GenerationError("scene: extent too small for the resolution");
  DenseScene scene(nx, ny, nz, res);
  const int floor = scene.add_label(kFloorLabel);
  const int wall = scene.add_label(kWallLabel);
  Rng rng(derive_seed(spec.seed, {0x5ce11e}));

  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) scene.set_label(i, j, 0, floor);

  const int t = std::max(1, static_cast<int>(std::lround(spec.wall_thickness / res)));
  auto fill_wall_x = [&](int i0, int i1, int j0, int j1) {  // half-open cell ranges
    for (int k = 1; k < nz; ++k)
      for (int j = std::max(0, j0); j < std::min(ny, j1); ++j)
        for (int i = std::max(0, i0); i < std::min(nx, i1); ++i) scene.set_label(i, j, k, wall);
  };
  fill_wall_x(0, t, 0, ny);
  fill_wall_x(nx - t, nx, 0, ny);
  fill_wall_x(0, nx, 0, t);
  fill_wall_x(0, nx, ny - t, ny);

  const int rx = static_cast<int>(spec.rooms_x), ry = static_cast<int>(spec.rooms_y);
  std::vector<int> wx(rx + 1), wy(ry + 1);  // wall start cells; wx[0] outer, wx[rx] outer
  for (int a = 0; a <= rx; ++a) wx[a] = a == 0 ? 0 : a == rx ? nx - t : t + a * (nx - 2 * t) / rx - t / 2;
  for (int b = 0; b <= ry; ++b) wy[b] = b == 0 ? 0 : b == ry ? ny - t : t + b * (ny - 2 * t) / ry - t / 2;
  for (int a = 1; a < rx; ++a) fill_wall_x(wx[a], wx[a] + t, 0, ny);
  for (int b = 1; b < ry; ++b) fill_wall_x(0, nx, wy[b], wy[b] + t);

  for (int b = 0; b < ry; ++b)
    for (int a = 0; a < rx; ++a)
      scene.rooms().push_back({(wx[a] + t) * res, (wy[b] + t) * res, wx[a + 1] * res, wy[b + 1] * res});

  // One door per pair of adjacent rooms.
  std::vector<Rect> keep_out;
  const int door_cells = std::max(1, static_cast<int>(std::lround(spec.door_width / res)));
  const int door_top = std::min(nz, 1 + static_cast<int>(std::lround(spec.door_height / res)));
  auto carve = [&](int i0, int i1, int j0, int j1) {
    for (int k = 1; k < door_top; ++k)
      for (int j = j0; j < j1; ++j)
        for (int i = i0; i < i1; ++i) scene.set_label(i, j, k, -1);
  };
  auto door_start = [&](int lo, int hi) {  // cells [lo, hi) of the room side
    const int margin = std::max(1, static_cast<int>(std::lround(0.3 / res)));
    const int a = lo + margin, b = hi - margin - door_cells;
    if (b < a) throw GenerationError("scene: rooms too small for the door width");
    return std::uniform_int_distribution<int>(a, b)(rng);
  };
  for (int a = 1; a < rx; ++a)
    for (int b = 0; b < ry; ++b) {
      const int s = door_start(wy[b] + t, wy[b + 1]);
      carve(wx[a], wx[a] + t, s, s + door_cells);
      keep_out.push_back({(wx[a] - kDoorKeepOut / res) * res, s * res, (wx[a] + t) * res + kDoorKeepOut,
                          (s + door_cells) * res});
    }
  for (int b = 1; b < ry; ++b)
    for (int a = 0; a < rx; ++a) {
      const int s = door_start(wx[a] + t, wx[a + 1]);
      carve(s, s + door_cells, wy[b], wy[b] + t);
      keep_out.push_back({s * res, wy[b] * res - kDoorKeepOut, (s + door_cells) * res, (wy[b] + t) * res + kDoorKeepOut});
    }

  if (spec.ceiling) {
    const int ceiling = scene.add_label(kCeilingLabel);
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) scene.set_label(i, j, nz - 1, ceiling);
  }

  std::vector<Rect> placed;
  for (const ObjectClassSpec& cls : spec.objects) {
    const int label = scene.add_label(cls.label);
    for (std::size_t n = 0; n < cls.count; ++n) {
      bool ok = false;
      for (int attempt = 0; attempt < kPlacementRetries && !ok; ++attempt) {
        const int room = cls.room >= 0 ? cls.room
                                       : std::uniform_int_distribution<int>(0, static_cast<int>(scene.rooms().size()) - 1)(rng);
        const RoomBox& rb = scene.rooms()[room];
        Vec3 size;
        for (int d = 0; d < 3; ++d)
          size[d] = cls.size_min[d] == cls.size_max[d]
                        ? cls.size_min[d]
                        : std::uniform_real_distribution<double>(cls.size_min[d], cls.size_max[d])(rng);
        const double margin = 0.05;
        if (rb.x1 - rb.x0 - 2 * margin < size.x() || rb.y1 - rb.y0 - 2 * margin < size.y()) continue;
        const double x0 = std::uniform_real_distribution<double>(rb.x0 + margin, rb.x1 - margin - size.x())(rng);
        const double y0 = std::uniform_real_distribution<double>(rb.y0 + margin, rb.y1 - margin - size.y())(rng);
        const Rect r{x0, y0, x0 + size.x(), y0 + size.y()};
        if (std::any_of(placed.begin(), placed.end(), [&](const Rect& o) { return r.overlaps(o, kObjectGap); })) continue;
        if (std::any_of(keep_out.begin(), keep_out.end(), [&](const Rect& o) { return r.overlaps(o, 0.0); })) continue;

        const int i0 = static_cast<int>(std::floor(r.x0 / res)), i1 = static_cast<int>(std::ceil(r.x1 / res));
        const int j0 = static_cast<int>(std::floor(r.y0 / res)), j1 = static_cast<int>(std::ceil(r.y1 / res));
        const int k1 = std::min(nz, 1 + std::max(1, static_cast<int>(std::lround(size.z() / res))));
        std::vector<std::array<int, 3>> cells;
        for (int k = 1; k < k1; ++k)
          for (int j = j0; j < j1; ++j)
            for (int i = i0; i < i1; ++i) {
              if (scene.label_at(i, j, k) >= 0) continue;
              scene.set_label(i, j, k, label);
              cells.push_back({i, j, k});
            }
        if (footprint_components(scene, kPlacementClearance) != 1) {
          for (const auto& c : cells) scene.set_label(c[0], c[1], c[2], -1);
          continue;
        }
        placed.push_back(r);
        ok = true;
      }
      if (!ok)
        throw GenerationError("scene: could not place object '" + cls.label + "' after " +
                              std::to_string(kPlacementRetries) + " attempts");
    }
  }
  return scene;
}

std::vector<Pose> generate_trajectory(const DenseScene& scene, std::size_t steps, std::uint64_t seed,
                                      const TrajectorySpec& spec) {
  if (steps < 2) throw InvalidArgument("trajectory: at least 2 steps required");
  const std::vector<char> mask = walkable_mask(scene, spec.clearance);
  const double res = scene.resolution();
  auto free_at = [&](double x, double y) {
    const int i = static_cast<int>(std::floor(x / res)), j = static_cast<int>(std::floor(y / res));
    return i >= 0 && j >= 0 && i < scene.nx() && j < scene.ny() && mask[static_cast<std::size_t>(j) * scene.nx() + i];
  };

  std::vector<std::pair<int, int>> starts;
  for (int j = 0; j < scene.ny(); ++j)
    for (int i = 0; i < scene.nx(); ++i) {
      if (!mask[static_cast<std::size_t>(j) * scene.nx() + i]) continue;
      if (spec.start_room >= 0 && scene.room_of((i + 0.5) * res, (j + 0.5) * res) != spec.start_room) continue;
      starts.emplace_back(i, j);
    }
  if (starts.empty()) throw GenerationError("trajectory: no free space to start from");

  Rng rng(derive_seed(seed, {0x7a}));
  const auto s = starts[std::uniform_int_distribution<std::size_t>(0, starts.size() - 1)(rng)];
  double x = (s.first + 0.5) * res, y = (s.second + 0.5) * res;
  double yaw = std::uniform_real_distribution<double>(-std::numbers::pi, std::numbers::pi)(rng);
  const double z = scene.floor_height() + spec.camera_height;
  std::normal_distribution<double> turn(0.0, spec.yaw_sigma_deg * kDegToRad);
  std::uniform_real_distribution<double> stretch(0.8, 1.2);

  std::vector<Pose> path;
  path.reserve(steps);
  path.push_back(Pose::from_yaw(Vec3(x, y, z), yaw));
  while (path.size() < steps) {
    const double len = spec.step_length * stretch(rng);
    const double base = yaw + turn(rng);
    const double sign = std::uniform_int_distribution<int>(0, 1)(rng) ? 1.0 : -1.0;
    bool moved = false;
    for (int k = 0; k <= 12 && !moved; ++k) {
      for (double dir : {sign, -sign}) {
        const double h = base + dir * k * 15.0 * kDegToRad;
        const double nx = x + len * std::cos(h), ny = y + len * std::sin(h);
        if (free_at(nx, ny)) {
          x = nx;
          y = ny;
          yaw = h;
          moved = true;
          break;
        }
        if (k == 0) break;
      }
    }
    if (!moved) yaw += sign * 30.0 * kDegToRad;
    yaw = std::remainder(yaw, 2.0 * std::numbers::pi);
    path.push_back(Pose::from_yaw(Vec3(x, y, z), yaw));
  }
  return path;
}

RenderedFrame render_observation(const DenseScene& scene, const Pose& pose, const CameraIntrinsics& intr,
                                 const RenderOptions& opts) {
  intr.validate();
  const std::size_t dim = opts.dim;
  std::vector<FeatureVec> codes;
  for (const std::string& l : scene.labels()) codes.push_back(encode_label(l, opts.encoder_seed, dim));
  const FeatureVec void_code = encode_label(kVoidLabel, opts.encoder_seed, dim);

  RenderedFrame out;
  out.features = FeatureImage(intr.width, intr.height, static_cast<std::uint32_t>(dim));
  const std::size_t n_pix = out.features.pixel_count();
  out.labels.assign(n_pix, -1);
  out.points.assign(n_pix, Vec3::Constant(std::numeric_limits<double>::quiet_NaN()));

  const Eigen::Matrix3d rot = pose.rotation().toRotationMatrix() * optical_to_body();
  const Vec3 o = pose.translation();
  const double step = scene.resolution() / 10.0;
  const std::size_t max_steps = static_cast<std::size_t>(std::ceil(opts.max_range / step));
  const double sigma = opts.feature_noise_sigma;

  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(n_pix);
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t p = 0; p < n; ++p) {
    const double u = static_cast<double>(p % intr.width), v = static_cast<double>(p / intr.width);
    const Vec3 d = rot * Vec3((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0).normalized();
    int label = -1;
    Vec3 hit = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
    bool entered = false;
    for (std::size_t s = 0; s <= max_steps; ++s) {
      const Vec3 q = o + (static_cast<double>(s) * step) * d;
      const auto c = scene.cell_of(q);
      if (!scene.in_bounds(c[0], c[1], c[2])) {
        if (entered) break;  // a box is convex: once left, never re-entered
        continue;
      }
      entered = true;
      const int l = scene.label_at(c[0], c[1], c[2]);
      if (l >= 0) {
        label = l;
        hit = q;
        break;
      }
    }
    out.labels[p] = label;
    out.points[p] = hit;
    const FeatureVec& code = label >= 0 ? codes[label] : void_code;
    std::span<float> dst = out.features.pixel(static_cast<std::size_t>(p));
    if (sigma <= 0.0) {
      std::copy(code.values().begin(), code.values().end(), dst.begin());
      continue;
    }
    Rng rng = make_stream(opts.noise_seed, {static_cast<std::uint64_t>(p)});
    std::normal_distribution<double> normal(0.0, sigma);
    thread_local std::vector<double> buf;
    buf.resize(dim);
    double sq = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      buf[i] = code[i] + normal(rng);
      sq += buf[i] * buf[i];
    }
    const double nrm = std::sqrt(sq);
    for (std::size_t i = 0; i < dim; ++i) dst[i] = static_cast<float>(buf[i] / nrm);
  }
  return out;
}

std::vector<std::array<int, 3>> surface_cells(const DenseScene& scene) {
  std::vector<std::array<int, 3>> out;
  for (int k = 0; k < scene.nz(); ++k)
    for (int j = 0; j < scene.ny(); ++j)
      for (int i = 0; i < scene.nx(); ++i) {
        if (scene.label_at(i, j, k) < 0) continue;
        const int nb[6][3] = {{i + 1, j, k}, {i - 1, j, k}, {i, j + 1, k}, {i, j - 1, k}, {i, j, k + 1}, {i, j, k - 1}};
        for (const auto& c : nb) {
          if (scene.in_bounds(c[0], c[1], c[2]) ? scene.label_at(c[0], c[1], c[2]) < 0 : c[2] >= scene.nz()) {
            out.push_back({i, j, k});
            break;
          }
        }
      }
  return out;
}

OctreeLanguageMap build_scene_map(const DenseScene& scene, std::uint64_t encoder_seed, std::size_t dim, double tau) {
  // Every surface voxel carries its label's clean encoding, so the running
  // mean is that encoding; deduplicate the per-label codes directly instead of
  // holding a dim-wide accumulator per voxel.
  const auto cells = surface_cells(scene);
  std::vector<char> present(scene.labels().size(), 0);
  for (const auto& c : cells) present[scene.label_at(c[0], c[1], c[2])] = 1;
  FeatureDbBuilder builder(dim, tau);
  std::vector<std::uint32_t> label_to_entry(scene.labels().size(), 0);
  std::vector<std::string> entry_label;
  // Stream order is voxel-key order, matching the generic finalize().
  std::vector<std::pair<VoxelKey, std::uint32_t>> voxels;
  voxels.reserve(cells.size());
  for (const auto& c : cells) voxels.push_back({VoxelKey{c[0], c[1], c[2]}, static_cast<std::uint32_t>(scene.label_at(c[0], c[1], c[2]))});
  std::sort(voxels.begin(), voxels.end());
  std::vector<char> seen(scene.labels().size(), 0);
  for (auto& [key, label] : voxels) {
    if (!seen[label]) {
      seen[label] = 1;
      const FeatureVec code = encode_label(scene.labels()[label], encoder_seed, dim);
      const std::size_t before = builder.db().size();
      label_to_entry[label] = builder.add(code);
      if (builder.db().size() > before) entry_label.push_back(scene.labels()[label]);
    }
    label = label_to_entry[label];
  }
  FeatureDb built = std::move(builder).release();
  FeatureDb db(dim, tau);
  for (std::size_t i = 0; i < built.size(); ++i) db.append_unchecked(built.entry(i), entry_label[i]);
  return OctreeLanguageMap::from_finalized(scene.resolution(), Vec3::Zero(), std::move(db), std::move(voxels));
}

namespace {
constexpr char kImageMagic[4] = {'O', 'M', 'C', 'I'};
}

void write_feature_image(const std::filesystem::path& path, const FeatureImage& image) {
  if (image.data.size() != image.pixel_count() * image.dim) throw InvalidArgument("feature image: inconsistent size");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open feature image for writing: " + path.string());
  detail::LeWriter w(out);
  w.bytes(kImageMagic, 4);
  w.put(image.width);
  w.put(image.height);
  w.put(image.dim);
  if constexpr (std::endian::native == std::endian::little) {
    w.bytes(image.data.data(), image.data.size() * sizeof(float));
  } else {
    for (float v : image.data) w.put(v);
  }
  if (!out) throw IoError("failed writing feature image: " + path.string());
}

FeatureImage read_feature_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature image: " + path.string());
  detail::LeReader r(in, path.string());
  char magic[4];
  r.read(magic, 4);
  if (!std::equal(magic, magic + 4, kImageMagic)) throw FormatError(path.string() + ": not an OMCI feature image");
  const auto w = r.get<std::uint32_t>();
  const auto h = r.get<std::uint32_t>();
  const auto f = r.get<std::uint32_t>();
  if (std::uint64_t{w} * h * f > (std::uint64_t{1} << 32)) throw FormatError(path.string() + ": implausible image size");
  FeatureImage img(w, h, f);
  if constexpr (std::endian::native == std::endian::little) {
    r.read(img.data.data(), img.data.size() * sizeof(float));
  } else {
    for (float& v : img.data) v = r.get<float>();
  }
  return img;
}

}  // namespace omcl
