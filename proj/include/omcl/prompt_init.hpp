#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "omcl/langmap.hpp"
#include "omcl/mcl.hpp"

namespace omcl {

/// Words describing the start location plus the matching parameters.
struct PromptSpec {
  std::vector<std::string> words;
  double radius = 2.0;  // meters
  double rho = 0.9;     // cosine-similarity threshold
  std::size_t k = 500;  // surrounding voxels required per word

  void validate() const;
};

/// Splits "toilet,mirror,towel" into trimmed, nonempty words.
std::vector<std::string> parse_prompt(std::string_view comma_separated);

struct FloorAlignment {
  VoxelKey floor_voxel;
  std::vector<std::size_t> counts;  // per prompt word
  double score = 0.0;               // fraction of words with count >= k
};

/// Floor voxels: exact index match when the DB has an entry labeled "floor",
/// otherwise cosine similarity to `floor_feature` above `floor_rho`.
/// Returned in key order.
std::vector<VoxelKey> floor_voxels(const OctreeLanguageMap& map, std::span<const float> floor_feature,
                                   double floor_rho);

/// For each floor voxel, counts per word the non-floor voxels whose centers
/// lie within `radius` and whose entry is more similar than rho to the
/// word's encoding, then scores the voxel by the fraction of words reaching
/// k. Output follows the order of `floor`.
std::vector<FloorAlignment> prompt_alignment(const OctreeLanguageMap& map, std::span<const VoxelKey> floor,
                                             const PromptSpec& prompt, std::uint64_t encoder_seed);

double alignment_score(std::span<const std::size_t> counts, std::size_t k);

struct SeedResult {
  ParticleSet particles;
  bool fallback = false;  // no voxel matched every word; used the best-scoring ones
  std::vector<VoxelKey> support;
};

/// Particles uniformly over the floor voxels with score 1 (or, failing that,
/// the maximal score), at the voxel center raised by `height`, with uniform
/// yaw in [0, 2π).
SeedResult seed_particles(const OctreeLanguageMap& map, std::span<const FloorAlignment> alignments, std::size_t n,
                          double height, Rng& rng);

}  // namespace omcl
