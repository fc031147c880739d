#include "omcl/eval.hpp"

#include <algorithm>
#include <cmath>

#include "omcl/errors.hpp"

namespace omcl {

ApeStats ape_stats_from_errors(std::span<const double> errors) {
  ApeStats s;
  s.count = errors.size();
  if (errors.empty()) return s;
  const double n = static_cast<double>(errors.size());
  double sum = 0.0, sse = 0.0;
  for (double e : errors) {
    if (!(e >= 0.0)) throw InvalidArgument("ape: errors must be nonnegative and finite");
    sum += e;
    sse += e * e;
  }
  s.sse = sse;
  s.mean = sum / n;
  s.rmse = std::sqrt(sse / n);
  double var = 0.0;
  for (double e : errors) var += (e - s.mean) * (e - s.mean);
  s.std = std::sqrt(var / n);
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());
  s.min = sorted.front();
  s.max = sorted.back();
  const std::size_t m = sorted.size() / 2;
  s.median = sorted.size() % 2 ? sorted[m] : 0.5 * (sorted[m - 1] + sorted[m]);
  return s;
}

std::vector<double> translation_errors(std::span<const Pose> estimated, std::span<const Pose> ground_truth) {
  if (estimated.size() != ground_truth.size())
    throw InvalidArgument("ape: trajectories differ in length (" + std::to_string(estimated.size()) + " vs " +
                          std::to_string(ground_truth.size()) + ")");
  std::vector<double> e(estimated.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = translation_distance(estimated[i], ground_truth[i]);
  return e;
}

ApeStats ape_stats(std::span<const Pose> estimated, std::span<const Pose> ground_truth) {
  const auto e = translation_errors(estimated, ground_truth);
  return ape_stats_from_errors(e);
}

double ape_identity_residual(const ApeStats& s) {
  if (s.count == 0) return 0.0;
  auto rel = [](double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
    return std::abs(a - b) / scale;
  };
  if (s.rmse == 0.0 && s.mean == 0.0 && s.std == 0.0 && s.sse == 0.0) return 0.0;
  return std::max(rel(s.rmse * s.rmse, s.mean * s.mean + s.std * s.std),
                  rel(s.sse, static_cast<double>(s.count) * s.rmse * s.rmse));
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::uint64_t count) {
  if (truth >= n_ || predicted >= n_) throw InvalidArgument("confusion: class index out of range");
  cells_[truth * n_ + predicted] += count;
}

void ConfusionMatrix::merge(const ConfusionMatrix& o) {
  if (o.n_ != n_) throw InvalidArgument("confusion: class count mismatch");
  for (std::size_t i = 0; i < cells_.size(); ++i) cells_[i] += o.cells_[i];
}

ConsistencyStats consistency_from_confusion(const ConfusionMatrix& m, std::uint64_t misses) {
  ConsistencyStats s;
  s.misses = misses;
  const std::size_t n = m.classes();
  std::uint64_t total = 0, correct = 0;
  std::vector<std::uint64_t> row(n, 0), col(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const auto c = m.at(i, j);
      total += c;
      row[i] += c;
      col[j] += c;
      if (i == j) correct += c;
    }
  s.correspondences = total;
  if (total == 0) return s;
  s.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(total);
  double p = 0.0, r = 0.0, iou = 0.0;
  std::size_t classes = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double tp = static_cast<double>(m.at(k, k));
    const double fp = static_cast<double>(col[k]) - tp;
    const double fn = static_cast<double>(row[k]) - tp;
    if (tp + fp + fn == 0.0) continue;
    ++classes;
    p += tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
    r += tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
    iou += tp / (tp + fp + fn);
  }
  s.precision = 100.0 * p / static_cast<double>(classes);
  s.recall = 100.0 * r / static_cast<double>(classes);
  s.iou = 100.0 * iou / static_cast<double>(classes);
  return s;
}

ConsistencyStats consistency_metrics(const OctreeLanguageMap& map, std::span<const ObservedFrame> frames,
                                     const CameraIntrinsics& intr, std::size_t sample_budget, double max_range) {
  if (!map.finalized()) throw StateError("consistency: map is not finalized");
  intr.validate();
  if (sample_budget == 0) throw InvalidArgument("consistency: sample budget must be positive");
  const double area = static_cast<double>(intr.width) * intr.height;
  const std::uint32_t stride =
      std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::floor(std::sqrt(area / static_cast<double>(sample_budget)))));
  std::vector<Pixel> pixels;
  for (std::uint32_t v = stride / 2; v < intr.height; v += stride)
    for (std::uint32_t u = stride / 2; u < intr.width; u += stride) pixels.push_back({u, v});
  const std::vector<Vec3> optical = pixel_rays(intr, pixels);

  const FeatureDb& db = map.db();
  ConfusionMatrix total(db.size());
  std::uint64_t misses = 0;
  std::vector<Vec3> world(optical.size());
  for (const ObservedFrame& f : frames) {
    if (f.features == nullptr || f.features->width != intr.width || f.features->height != intr.height ||
        f.features->dim != db.dim())
      throw InvalidArgument("consistency: frame does not match the intrinsics or the map dimension");
    const Eigen::Matrix3d rot = f.pose.rotation().toRotationMatrix() * optical_to_body();
    for (std::size_t j = 0; j < optical.size(); ++j) world[j] = (rot * optical[j]).normalized();
    const auto hits = map.raytrace_first_hit(f.pose.translation(), world, max_range);
    for (std::size_t j = 0; j < hits.size(); ++j) {
      if (!hits[j].hit) {
        ++misses;
        continue;
      }
      const auto nearest = nearest_feature(db, f.features->at(pixels[j].u, pixels[j].v));
      total.add(hits[j].feature_index, nearest.index);
    }
  }
  return consistency_from_confusion(total, misses);
}

std::vector<std::optional<std::size_t>> convergence_steps(std::span<const double> errors,
                                                          std::span<const double> thresholds,
                                                          std::size_t persistence) {
  if (errors.empty()) throw InvalidArgument("convergence: empty run");
  if (persistence == 0) throw InvalidArgument("convergence: persistence must be positive");
  std::vector<std::optional<std::size_t>> out;
  out.reserve(thresholds.size());
  for (double th : thresholds) {
    if (!(th > 0.0)) throw InvalidArgument("convergence: thresholds must be positive");
    std::optional<std::size_t> found;
    std::size_t run = 0;
    for (std::size_t i = 0; i < errors.size(); ++i) {
      run = errors[i] < th ? run + 1 : 0;
      if (run == persistence) {
        found = i + 1 - persistence;
        break;
      }
    }
    // A streak still running at the end of the record counts.
    if (!found && run > 0) found = errors.size() - run;
    out.push_back(found);
  }
  return out;
}

}  // namespace omcl
