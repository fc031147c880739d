#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <vector>

#include "omcl/errors.hpp"
#include "omcl/eval.hpp"
#include "omcl/prompt_init.hpp"
#include "omcl/sim.hpp"
#include "oracles.hpp"

using namespace omcl;

namespace {

SceneSpec small_spec(std::uint64_t seed, bool objects = true) {
  SceneSpec s;
  s.extent = Vec3(8.0, 8.0, 2.6);
  s.resolution = 0.1;
  s.rooms_x = 2;
  s.rooms_y = 2;
  s.seed = seed;
  if (objects) {
    s.objects.push_back({"chair", 4});
    s.objects.push_back({"table", 3});
    s.objects.push_back({"plant", 2, Vec3(0.3, 0.3, 0.6), Vec3(0.5, 0.5, 1.2), 3});
  }
  return s;
}

}  // namespace

TEST_CASE("scene generation is deterministic and validated") {
  const DenseScene a = generate_scene(small_spec(3)), b = generate_scene(small_spec(3));
  CHECK(a == b);
  CHECK_FALSE(a == generate_scene(small_spec(4)));
  CHECK(a.labels()[0] == "floor");
  CHECK(a.rooms().size() == 4);
  SceneSpec bad = small_spec(1);
  bad.objects.push_back({"wall", 1});
  CHECK_THROWS_AS(generate_scene(bad), InvalidArgument);
  bad = small_spec(1);
  bad.objects[2].room = 9;
  CHECK_THROWS_AS(generate_scene(bad), InvalidArgument);
  bad = small_spec(1);
  bad.objects.push_back({"crate", 400, Vec3(0.8, 0.8, 0.5), Vec3(1.0, 1.0, 0.5)});
  CHECK_THROWS_AS(generate_scene(bad), GenerationError);
}

TEST_CASE("scene without objects holds only floor and walls") {
  const DenseScene s = generate_scene(small_spec(5, false));
  std::set<int> seen;
  for (int k = 0; k < s.nz(); ++k)
    for (int j = 0; j < s.ny(); ++j)
      for (int i = 0; i < s.nx(); ++i) seen.insert(s.label_at(i, j, k));
  CHECK(seen == std::set<int>{-1, s.label_index("floor"), s.label_index("wall")});
}

TEST_CASE("ceiling option labels exactly the top layer") {
  SceneSpec spec = small_spec(5, false);
  CHECK(generate_scene(spec).label_index(kCeilingLabel) == -1);
  spec.ceiling = true;
  const DenseScene s = generate_scene(spec);
  const int ceiling = s.label_index(kCeilingLabel);
  REQUIRE(ceiling >= 0);
  for (int k = 0; k < s.nz(); ++k)
    for (int j = 0; j < s.ny(); ++j)
      for (int i = 0; i < s.nx(); ++i) CHECK((s.label_at(i, j, k) == ceiling) == (k == s.nz() - 1));
  spec.objects.push_back({kCeilingLabel, 1});
  CHECK_THROWS_AS(generate_scene(spec), InvalidArgument);
}

TEST_CASE("walkable free space is one connected component") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const DenseScene s = generate_scene(small_spec(seed));
    CHECK(footprint_components(s, 0.35) == 1);
  }
}

TEST_CASE("objects land in their requested room") {
  const DenseScene s = generate_scene(small_spec(6));
  const int plant = s.label_index("plant");
  REQUIRE(plant >= 0);
  for (int k = 0; k < s.nz(); ++k)
    for (int j = 0; j < s.ny(); ++j)
      for (int i = 0; i < s.nx(); ++i)
        if (s.label_at(i, j, k) == plant) CHECK(s.room_of((i + 0.5) * s.resolution(), (j + 0.5) * s.resolution()) == 3);
}

TEST_CASE("trajectories stay in free space with the nominal step") {
  const DenseScene s = generate_scene(small_spec(7));
  const auto path = generate_trajectory(s, 200, 11);
  REQUIRE(path.size() == 200);
  CHECK(path == generate_trajectory(s, 200, 11));
  double total = 0.0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    const Vec3& t = path[i].translation();
    const auto c = s.cell_of(t);
    CHECK(s.label_at_point(t) == -1);
    CHECK(s.column_free(c[0], c[1], 2.0));
    CHECK(t.z() == doctest::Approx(s.floor_height() + 1.2));
    CHECK(std::abs(path[i].rotation().x()) <= 1e-12);
    CHECK(std::abs(path[i].rotation().y()) <= 1e-12);
    if (i > 0) total += (t - path[i - 1].translation()).norm();
  }
  const double mean = total / 199.0;
  CHECK(mean >= 0.10);
  CHECK(mean <= 0.16);
  TrajectorySpec in_room;
  in_room.start_room = 2;
  const auto p2 = generate_trajectory(s, 5, 3, in_room);
  CHECK(s.room_of(p2[0].translation().x(), p2[0].translation().y()) == 2);
}

TEST_CASE("rendering a wall at zero noise yields its exact encoding") {
  const DenseScene s = generate_scene(small_spec(8, false));
  const CameraIntrinsics intr{64, 64, 8, 6, 16, 12};
  RenderOptions o;
  o.encoder_seed = 7;
  o.dim = 64;
  const Pose p = Pose::from_yaw(Vec3(0.8, 1.5, 1.3), M_PI);  // facing the x = 0 perimeter wall
  const RenderedFrame f = render_observation(s, p, intr, o);
  const FeatureVec wall = encode_label("wall", 7, 64);
  for (std::size_t i = 0; i < f.features.pixel_count(); ++i) {
    CHECK(f.labels[i] == s.label_index("wall"));
    const auto px = f.features.pixel(i);
    CHECK(std::equal(px.begin(), px.end(), wall.values().begin()));
    CHECK(std::isfinite(f.points[i].x()));
  }
  CHECK(render_observation(s, p, intr, o).features == f.features);
}

TEST_CASE("noisy features match the analytic mean cosine") {
  const DenseScene s = generate_scene(small_spec(9, false));
  const CameraIntrinsics intr{80, 80, 50, 50, 100, 100};
  const double dim = 512;
  for (double scale : {0.1, 1.0}) {
    RenderOptions o;
    o.encoder_seed = 3;
    o.dim = 512;
    o.noise_seed = 77;
    o.feature_noise_sigma = scale / std::sqrt(dim);
    const Pose p = Pose::from_yaw(Vec3(2.0, 2.0, 1.3), 0.3);
    const RenderedFrame f = render_observation(s, p, intr, o);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < f.features.pixel_count(); ++i) {
      if (f.labels[i] < 0) continue;
      const FeatureVec clean = encode_label(s.labels()[f.labels[i]], 3, 512);
      sum += oracle::cosine(f.features.pixel(i), clean.values());
      ++n;
    }
    REQUIRE(n >= 9000);
    // In high dimension ‖n‖² concentrates at σ²F and f·n is negligible.
    const double expected = 1.0 / std::sqrt(1.0 + scale * scale);
    CHECK(std::abs(sum / n - expected) <= 0.02 * expected);
  }
}

TEST_CASE("scene map agrees with zero-noise renders and exposes the floor") {
  const DenseScene s = generate_scene(small_spec(10));
  const OctreeLanguageMap map = build_scene_map(s, 7, 64, 0.1);
  CHECK(map.db().size() == s.labels().size());
  const CameraIntrinsics intr{32, 32, 32, 24, 64, 48};
  const auto path = generate_trajectory(s, 20, 4);
  std::vector<RenderedFrame> frames;
  RenderOptions o;
  o.encoder_seed = 7;
  o.dim = 64;
  for (const Pose& p : path) frames.push_back(render_observation(s, p, intr, o));
  std::vector<ObservedFrame> obs;
  for (std::size_t i = 0; i < path.size(); ++i) obs.push_back({path[i], &frames[i].features});
  const ConsistencyStats c = consistency_metrics(map, obs, intr, 400);
  CHECK(c.accuracy >= 99.0);

  const auto floor = floor_voxels(map, encode_label("floor", 7, 64), 0.9);
  std::size_t truth = 0;
  const std::set<VoxelKey> fs(floor.begin(), floor.end());
  for (const auto& c3 : surface_cells(s))
    if (s.label_at(c3[0], c3[1], c3[2]) == s.label_index("floor")) {
      ++truth;
      CHECK(fs.count({c3[0], c3[1], c3[2]}) == 1);
    }
  CHECK(fs.size() == truth);
}

TEST_CASE("feature image files round-trip") {
  const auto dir = std::filesystem::temp_directory_path() / "omcl_test_sim";
  std::filesystem::create_directories(dir);
  FeatureImage img(5, 3, 4);
  std::mt19937 g(1);
  std::normal_distribution<float> n;
  for (float& x : img.data) x = n(g);
  write_feature_image(dir / "f.omci", img);
  CHECK(read_feature_image(dir / "f.omci") == img);
  std::filesystem::resize_file(dir / "f.omci", 20);
  CHECK_THROWS(read_feature_image(dir / "f.omci"));
  std::filesystem::remove_all(dir);
}
