#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "omcl/features.hpp"
#include "omcl/geometry.hpp"
#include "omcl/langmap.hpp"

namespace omcl {

/// Translation APE statistics; std is the population deviation, so
/// rmse² = mean² + std² and sse = n·rmse².
struct ApeStats {
  std::size_t count = 0;
  double rmse = 0.0;
  double std = 0.0;
  double mean = 0.0;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
  double sse = 0.0;
};

ApeStats ape_stats_from_errors(std::span<const double> errors);
/// Per-index translation error; no alignment. Throws on a length mismatch.
std::vector<double> translation_errors(std::span<const Pose> estimated, std::span<const Pose> ground_truth);
ApeStats ape_stats(std::span<const Pose> estimated, std::span<const Pose> ground_truth);

/// Largest relative violation of the two ApeStats identities.
double ape_identity_residual(const ApeStats& s);

/// Percentages. accuracy is the fraction of correct correspondences;
/// precision, recall and IoU are averaged over classes that occur (as
/// truth or prediction) at least once.
struct ConsistencyStats {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double iou = 0.0;
  std::uint64_t correspondences = 0;
  std::uint64_t misses = 0;
};

/// Square confusion matrix, rows = map (reference) class, columns = predicted.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes) : n_(classes), cells_(classes * classes, 0) {}
  std::size_t classes() const { return n_; }
  void add(std::size_t truth, std::size_t predicted, std::uint64_t count = 1);
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return cells_[truth * n_ + predicted]; }
  void merge(const ConfusionMatrix& o);

 private:
  std::size_t n_;
  std::vector<std::uint64_t> cells_;
};

ConsistencyStats consistency_from_confusion(const ConfusionMatrix& m, std::uint64_t misses = 0);

struct ObservedFrame {
  Pose pose;
  const FeatureImage* features = nullptr;
};

/// Samples a regular grid of about `sample_budget` pixels per frame, casts
/// each from the frame pose, and compares the hit voxel's DB index with the
/// pixel's nearest DB entry.
ConsistencyStats consistency_metrics(const OctreeLanguageMap& map, std::span<const ObservedFrame> frames,
                                     const CameraIntrinsics& intr, std::size_t sample_budget,
                                     double max_range = 30.0);

/// For each threshold, the first step whose error is below it and stays
/// below for `persistence` consecutive steps (fewer when the run ends).
std::vector<std::optional<std::size_t>> convergence_steps(std::span<const double> errors,
                                                          std::span<const double> thresholds,
                                                          std::size_t persistence = 3);

}  // namespace omcl
