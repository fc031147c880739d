#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "fixtures.hpp"
#include "omcl/errors.hpp"
#include "omcl/prompt_init.hpp"
#include "oracles.hpp"

using namespace omcl;

namespace {

constexpr std::uint64_t kSeed = 7;
constexpr std::size_t kDim = 64;

FeatureDb word_db(const std::vector<std::string>& words) {
  FeatureDb db(kDim, 0.0);
  for (const auto& w : words) db.append_unchecked(encode_label(w, kSeed, kDim), w);
  return db;
}

// Floor {0,0,0}; a sofa 0.2 m away; a second sofa 5 m away.
OctreeLanguageMap toy_map() {
  return OctreeLanguageMap::from_finalized(0.1, Vec3::Zero(), word_db({"floor", "sofa"}),
                                           {{{0, 0, 0}, 0}, {{2, 0, 0}, 1}, {{50, 0, 0}, 1}});
}

}  // namespace

TEST_CASE("prompt parsing and validation") {
  CHECK(parse_prompt("toilet, mirror ,towel,,sink ") == std::vector<std::string>{"toilet", "mirror", "towel", "sink"});
  CHECK(parse_prompt("").empty());
  PromptSpec p;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  p.words = {"a"};
  p.validate();
  p.rho = 1.5;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  p.rho = 0.9;
  p.radius = 0.0;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
}

TEST_CASE("floor voxels by label and by similarity") {
  const OctreeLanguageMap m = toy_map();
  const FeatureVec floor = encode_label("floor", kSeed, kDim);
  CHECK(floor_voxels(m, floor, 0.9) == std::vector<VoxelKey>{{0, 0, 0}});

  FeatureDb unlabeled(kDim, 0.0);
  unlabeled.append_unchecked(floor);
  unlabeled.append_unchecked(encode_label("sofa", kSeed, kDim));
  const OctreeLanguageMap u =
      OctreeLanguageMap::from_finalized(0.1, Vec3::Zero(), unlabeled, {{{0, 0, 0}, 0}, {{1, 0, 0}, 0}, {{2, 0, 0}, 1}});
  CHECK(floor_voxels(u, floor, 0.9) == std::vector<VoxelKey>{{0, 0, 0}, {1, 0, 0}});
  CHECK(floor_voxels(u, floor, 1.0 + 1e-9).empty());
}

TEST_CASE("alignment on the toy scene matches hand evaluation") {
  const OctreeLanguageMap m = toy_map();
  const std::vector<VoxelKey> floor{{0, 0, 0}};
  PromptSpec p{{"sofa"}, 0.5, 0.9, 1};
  auto a = prompt_alignment(m, floor, p, kSeed);
  REQUIRE(a.size() == 1);
  CHECK(a[0].counts == std::vector<std::size_t>{1});  // the far sofa lies outside R
  CHECK(a[0].score == 1.0);
  p.k = 2;
  CHECK(prompt_alignment(m, floor, p, kSeed)[0].score == 0.0);
  p.k = 1;
  p.words = {"sofa", "lamp"};
  a = prompt_alignment(m, floor, p, kSeed);
  CHECK(a[0].counts == std::vector<std::size_t>{1, 0});
  CHECK(a[0].score == 0.5);
  p.radius = 6.0;
  p.words = {"sofa"};
  p.k = 2;
  CHECK(prompt_alignment(m, floor, p, kSeed)[0].counts == std::vector<std::size_t>{2});
  p.k = 0;
  p.words = {"lamp", "bed"};
  for (const auto& x : prompt_alignment(m, floor, p, kSeed)) CHECK(x.score == 1.0);
}

TEST_CASE("alignment counts match a brute-force neighborhood scan") {
  std::mt19937_64 rng(3);
  const std::vector<std::string> words{"floor", "sofa", "lamp", "bed", "plant"};
  const FeatureDb db = word_db(words);
  std::uniform_int_distribution<int> c(0, 60), e(0, 4);
  std::map<VoxelKey, std::uint32_t> cells;
  for (int x = 0; x < 60; ++x)
    for (int y = 0; y < 60; ++y) cells[{x, y, 0}] = 0;
  while (cells.size() < 3600 + 800) cells.insert({{c(rng), c(rng), 1 + c(rng) % 20}, static_cast<std::uint32_t>(1 + e(rng) % 4)});
  const OctreeLanguageMap m =
      OctreeLanguageMap::from_finalized(0.1, Vec3(0.3, -0.2, 0.0), db, {cells.begin(), cells.end()});
  const std::vector<VoxelKey> floor = floor_voxels(m, encode_label("floor", kSeed, kDim), 0.9);
  CHECK(floor.size() == 3600);
  const PromptSpec p{{"sofa", "bed", "window"}, 0.73, 0.9, 12};  // no lattice distance equals R
  const auto got = prompt_alignment(m, floor, p, kSeed);
  REQUIRE(got.size() == floor.size());
  const std::set<VoxelKey> fs(floor.begin(), floor.end());
  std::vector<FeatureVec> enc;
  for (const auto& w : p.words) enc.push_back(encode_label(w, kSeed, kDim));
  for (std::size_t i = 0; i < floor.size(); i += 37) {
    std::vector<std::size_t> counts(p.words.size(), 0);
    const Vec3 fc = m.center_of(floor[i]);
    for (const auto& [k, idx] : m.voxels()) {
      if (fs.count(k) || (m.center_of(k) - fc).norm() > p.radius) continue;
      for (std::size_t w = 0; w < enc.size(); ++w) counts[w] += oracle::cosine(db.entry(idx), enc[w].values()) > p.rho;
    }
    CHECK(got[i].floor_voxel == floor[i]);
    CHECK(got[i].counts == counts);
    std::size_t met = 0;
    for (std::size_t x : counts) met += x >= p.k;
    CHECK(got[i].score == static_cast<double>(met) / 3.0);
  }
  // s never increases with k; an extra word can only remove full matches.
  PromptSpec looser = p, more = p;
  looser.k = 6;
  more.words.push_back("plant");
  const auto gl = prompt_alignment(m, floor, looser, kSeed);
  const auto gm = prompt_alignment(m, floor, more, kSeed);
  for (std::size_t i = 0; i < floor.size(); ++i) {
    CHECK(gl[i].score >= got[i].score);
    CHECK(((gm[i].score == 1.0) <= (got[i].score == 1.0)));
  }
}

TEST_CASE("seeding: forced support, fallback and even split") {
  const OctreeLanguageMap m = toy_map();
  Rng rng(4);
  std::vector<FloorAlignment> one{{{0, 0, 0}, {3}, 1.0}, {{1, 0, 0}, {0}, 0.0}};
  const SeedResult s = seed_particles(m, one, 100, 1.2, rng);
  CHECK_FALSE(s.fallback);
  CHECK(s.support == std::vector<VoxelKey>{{0, 0, 0}});
  for (const Particle& p : s.particles.particles) {
    CHECK(p.pose.translation().x() == doctest::Approx(0.05));
    CHECK(p.pose.translation().y() == doctest::Approx(0.05));
    CHECK(p.pose.translation().z() == doctest::Approx(1.25));
    CHECK(p.weight == doctest::Approx(0.01));
    const double y = p.pose.yaw();
    CHECK((y >= -M_PI && y <= M_PI));
  }

  std::vector<FloorAlignment> none{{{0, 0, 0}, {0, 1}, 0.5}, {{1, 0, 0}, {0, 0}, 0.0}};
  const SeedResult f = seed_particles(m, none, 10, 1.2, rng);
  CHECK(f.fallback);
  CHECK(f.support == std::vector<VoxelKey>{{0, 0, 0}});

  std::vector<FloorAlignment> two{{{0, 0, 0}, {5}, 1.0}, {{9, 0, 0}, {5}, 1.0}, {{4, 0, 0}, {0}, 0.0}};
  const SeedResult t = seed_particles(m, two, 10000, 1.0, rng);
  std::size_t left = 0;
  for (const Particle& p : t.particles.particles) left += p.pose.translation().x() < 0.5;
  CHECK(std::abs(static_cast<double>(left) / 10000.0 - 0.5) <= 0.03);
  CHECK_THROWS_AS(seed_particles(m, std::vector<FloorAlignment>{}, 10, 1.0, rng), InvalidArgument);
}
