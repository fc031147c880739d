#include "omcl/prompt_init.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <unordered_map>

#include "omcl/errors.hpp"

namespace omcl {

void PromptSpec::validate() const {
  if (words.empty()) throw InvalidArgument("prompt: at least one word is required");
  if (!(radius > 0.0)) throw InvalidArgument("prompt: radius must be positive");
  if (!(rho >= -1.0 && rho <= 1.0)) throw InvalidArgument("prompt: rho must lie in [-1, 1]");
  for (const std::string& w : words)
    if (w.empty()) throw InvalidArgument("prompt: empty word");
}

std::vector<std::string> parse_prompt(std::string_view s) {
  std::vector<std::string> words;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find(',', start);
    if (end == std::string_view::npos) end = s.size();
    std::string_view w = s.substr(start, end - start);
    while (!w.empty() && std::isspace(static_cast<unsigned char>(w.front()))) w.remove_prefix(1);
    while (!w.empty() && std::isspace(static_cast<unsigned char>(w.back()))) w.remove_suffix(1);
    if (!w.empty()) words.emplace_back(w);
    start = end + 1;
  }
  return words;
}

std::vector<VoxelKey> floor_voxels(const OctreeLanguageMap& map, std::span<const float> floor_feature,
                                   double floor_rho) {
  const FeatureDb& db = map.db();
  std::vector<char> is_floor(db.size(), 0);
  if (const auto labeled = db.find_label("floor")) {
    is_floor[*labeled] = 1;
  } else {
    for (std::size_t e = 0; e < db.size(); ++e) is_floor[e] = cosine_similarity(db.entry(e), floor_feature) > floor_rho;
  }
  std::vector<VoxelKey> out;
  for (const auto& [k, idx] : map.voxels())
    if (is_floor[idx]) out.push_back(k);
  return out;
}

double alignment_score(std::span<const std::size_t> counts, std::size_t k) {
  if (counts.empty()) return 0.0;
  std::size_t met = 0;
  for (std::size_t c : counts) met += c >= k;
  return static_cast<double>(met) / static_cast<double>(counts.size());
}

namespace {

struct CellKeyHash {
  std::size_t operator()(const std::array<std::int64_t, 3>& c) const noexcept {
    return static_cast<std::size_t>(derive_seed(static_cast<std::uint64_t>(c[0]),
                                                {static_cast<std::uint64_t>(c[1]), static_cast<std::uint64_t>(c[2])}));
  }
};

}  // namespace

std::vector<FloorAlignment> prompt_alignment(const OctreeLanguageMap& map, std::span<const VoxelKey> floor,
                                             const PromptSpec& prompt, std::uint64_t encoder_seed) {
  prompt.validate();
  const FeatureDb& db = map.db();
  const std::size_t m = prompt.words.size();

  // Word matches depend only on the DB entry, so evaluate them per entry.
  std::vector<std::vector<char>> match(db.size(), std::vector<char>(m, 0));
  for (std::size_t w = 0; w < m; ++w) {
    const FeatureVec word = encode_label(prompt.words[w], encoder_seed, map.dim());
    for (std::size_t e = 0; e < db.size(); ++e) match[e][w] = cosine_similarity(db.entry(e), word) > prompt.rho;
  }

  // Only surrounding voxels that match at least one word can change a count;
  // bin those at cell size R so each query inspects 27 cells.
  const std::set<VoxelKey> floor_set(floor.begin(), floor.end());
  struct Candidate {
    Vec3 center;
    std::uint32_t entry;
  };
  std::unordered_map<std::array<std::int64_t, 3>, std::vector<Candidate>, CellKeyHash> bins;
  auto cell_of = [&](const Vec3& p) {
    return std::array<std::int64_t, 3>{static_cast<std::int64_t>(std::floor(p.x() / prompt.radius)),
                                       static_cast<std::int64_t>(std::floor(p.y() / prompt.radius)),
                                       static_cast<std::int64_t>(std::floor(p.z() / prompt.radius))};
  };
  for (const auto& [k, idx] : map.voxels()) {
    if (floor_set.count(k)) continue;
    if (std::none_of(match[idx].begin(), match[idx].end(), [](char c) { return c != 0; })) continue;
    const Vec3 c = map.center_of(k);
    bins[cell_of(c)].push_back({c, idx});
  }

  std::vector<FloorAlignment> out(floor.size());
  const double r2 = prompt.radius * prompt.radius;
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(floor.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    FloorAlignment& a = out[i];
    a.floor_voxel = floor[i];
    a.counts.assign(m, 0);
    const Vec3 c = map.center_of(floor[i]);
    const auto cell = cell_of(c);
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = bins.find({cell[0] + dx, cell[1] + dy, cell[2] + dz});
          if (it == bins.end()) continue;
          for (const Candidate& cand : it->second) {
            if ((cand.center - c).squaredNorm() > r2) continue;
            for (std::size_t w = 0; w < m; ++w) a.counts[w] += match[cand.entry][w];
          }
        }
    a.score = alignment_score(a.counts, prompt.k);
  }
  return out;
}

SeedResult seed_particles(const OctreeLanguageMap& map, std::span<const FloorAlignment> alignments, std::size_t n,
                          double height, Rng& rng) {
  if (alignments.empty()) throw InvalidArgument("seed_particles: no floor alignments");
  if (n == 0) throw InvalidArgument("seed_particles: particle count must be >= 1");
  SeedResult out;
  double best = 0.0;
  for (const FloorAlignment& a : alignments) best = std::max(best, a.score);
  const double target = best == 1.0 ? 1.0 : best;
  out.fallback = best != 1.0;
  for (const FloorAlignment& a : alignments)
    if (a.score == target) out.support.push_back(a.floor_voxel);

  std::uniform_int_distribution<std::size_t> pick(0, out.support.size() - 1);
  std::uniform_real_distribution<double> yaw(0.0, 2.0 * std::numbers::pi);
  out.particles.particles.reserve(n);
  const double w = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 c = map.center_of(out.support[pick(rng)]);
    out.particles.particles.push_back({Pose::from_yaw(Vec3(c.x(), c.y(), c.z() + height), yaw(rng)), w});
  }
  return out;
}

}  // namespace omcl
