#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "omcl/features.hpp"
#include "omcl/geometry.hpp"
#include "omcl/langmap.hpp"

namespace omcl {

struct ObjectClassSpec {
  std::string label;
  std::size_t count = 0;
  Vec3 size_min{0.3, 0.3, 0.3};
  Vec3 size_max{0.8, 0.8, 1.0};
  int room = -1;  // room index (row-major over the room grid); -1: any room
};

/// Synthetic indoor world: a rooms_x × rooms_y grid of rooms inside `extent`,
/// separated by walls with one door per adjacent room pair, with boxy
/// objects standing on the floor.
struct SceneSpec {
  Vec3 extent{10.0, 10.0, 3.0};
  double resolution = 0.05;
  std::size_t rooms_x = 2;
  std::size_t rooms_y = 2;
  double wall_thickness = 0.1;
  double door_width = 1.0;
  double door_height = 2.1;
  bool ceiling = false;  // label the top layer "ceiling"
  std::vector<ObjectClassSpec> objects;
  std::uint64_t seed = 1;

  void validate() const;
};

inline constexpr const char* kFloorLabel = "floor";
inline constexpr const char* kWallLabel = "wall";
inline constexpr const char* kCeilingLabel = "ceiling";
inline constexpr const char* kVoidLabel = "void";

struct RoomBox {
  double x0, y0, x1, y1;  // interior, meters
  friend bool operator==(const RoomBox&, const RoomBox&) = default;
};

/// Dense labeled grid; cell (i, j, k) covers [i, i+1)·resolution etc. from
/// the world origin. Label index -1 is free space; labels()[0] is "floor".
class DenseScene {
 public:
  DenseScene() = default;
  DenseScene(int nx, int ny, int nz, double resolution);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nz() const { return nz_; }
  double resolution() const { return resolution_; }
  double floor_height() const { return resolution_; }  // top of the floor layer

  bool in_bounds(int i, int j, int k) const { return i >= 0 && j >= 0 && k >= 0 && i < nx_ && j < ny_ && k < nz_; }
  int label_at(int i, int j, int k) const { return cells_[index(i, j, k)]; }
  void set_label(int i, int j, int k, int label) { cells_[index(i, j, k)] = static_cast<std::int16_t>(label); }
  /// Label of the cell containing p, or -1 when free or out of bounds.
  int label_at_point(const Vec3& p) const;
  std::array<int, 3> cell_of(const Vec3& p) const;

  const std::vector<std::string>& labels() const { return labels_; }
  int add_label(const std::string& l);
  int label_index(const std::string& l) const;  // -1 when absent

  const std::vector<RoomBox>& rooms() const { return rooms_; }
  std::vector<RoomBox>& rooms() { return rooms_; }
  /// Index of the room containing (x, y), or -1.
  int room_of(double x, double y) const;

  /// Column (i, j) has no obstacle between the floor and `height` meters;
  /// the single layer resting on the floor is walkable (rugs, mats).
  bool column_free(int i, int j, double height) const;

  friend bool operator==(const DenseScene&, const DenseScene&) = default;

 private:
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * ny_ + j) * nx_ + i;
  }
  int nx_ = 0, ny_ = 0, nz_ = 0;
  double resolution_ = 0.0;
  std::vector<std::int16_t> cells_;
  std::vector<std::string> labels_;
  std::vector<RoomBox> rooms_;
};

/// Deterministic in spec.seed. Throws GenerationError when an object cannot
/// be placed (overlap or disconnected free space) after bounded retries.
DenseScene generate_scene(const SceneSpec& spec);

/// Obstacle-free footprint at walking height, eroded by `clearance`.
std::vector<char> walkable_mask(const DenseScene& scene, double clearance, double height = 2.0);
/// Number of 4-connected components of the walkable footprint.
std::size_t footprint_components(const DenseScene& scene, double clearance, double height = 2.0);

struct TrajectorySpec {
  double camera_height = 1.2;  // above the floor surface
  double step_length = 0.13;
  double yaw_sigma_deg = 9.0;
  double clearance = 0.35;
  int start_room = -1;
};

/// Level, collision-free camera path with ~0.13 m / ~8° per step.
std::vector<Pose> generate_trajectory(const DenseScene& scene, std::size_t steps, std::uint64_t seed,
                                      const TrajectorySpec& spec = {});

struct RenderedFrame {
  FeatureImage features;
  std::vector<int> labels;       // per pixel; -1 where the ray left the scene
  std::vector<Vec3> points;      // first labeled sample per pixel; NaN when void
};

struct RenderOptions {
  double feature_noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
  std::uint64_t encoder_seed = 0;
  std::size_t dim = 512;
  double max_range = 30.0;
};

/// Fine-step ray marching (resolution / 10) through the dense grid to the
/// first labeled cell; pixel feature = normalize(encode(label) + N(0, σ²)).
/// Per-pixel noise comes from the sub-stream (noise_seed, pixel index).
RenderedFrame render_observation(const DenseScene& scene, const Pose& pose, const CameraIntrinsics& intr,
                                 const RenderOptions& opts);

/// Labeled cells with at least one free 6-neighbor.
std::vector<std::array<int, 3>> surface_cells(const DenseScene& scene);

/// Map of every surface cell with its label's clean encoding, finalized with
/// tau and grounded onto the scene's label table.
OctreeLanguageMap build_scene_map(const DenseScene& scene, std::uint64_t encoder_seed, std::size_t dim, double tau);

/// Feature-image file: "OMCI", u32 width, u32 height, u32 F, then
/// width·height·F little-endian f32, row-major.
void write_feature_image(const std::filesystem::path& path, const FeatureImage& image);
FeatureImage read_feature_image(const std::filesystem::path& path);

}  // namespace omcl
