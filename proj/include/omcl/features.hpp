#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace omcl {

/// Unit-norm open-vocabulary feature vector.
///
/// Values are stored as f32 (the on-disk precision); all arithmetic on them
/// is carried out in f64.
class FeatureVec {
 public:
  FeatureVec() = default;

  /// Normalizes `values`; throws InvalidFeature for a zero or non-finite norm.
  static FeatureVec normalized(std::span<const double> values);
  static FeatureVec normalized(std::span<const float> values);

  std::size_t dim() const { return values_.size(); }
  std::span<const float> values() const { return values_; }
  operator std::span<const float>() const { return values_; }
  float operator[](std::size_t i) const { return values_[i]; }

  friend bool operator==(const FeatureVec&, const FeatureVec&) = default;

 private:
  explicit FeatureVec(std::vector<float> v) : values_(std::move(v)) {}
  std::vector<float> values_;
};

double dot(std::span<const float> a, std::span<const float> b);
double norm(std::span<const float> a);

/// (a·b)/(‖a‖‖b‖). Computed as dot(a, b) / (norm(a) * norm(b)) so callers that
/// cache norms reproduce it bit-for-bit.
double cosine_similarity(std::span<const float> a, std::span<const float> b);
inline double cosine_distance(std::span<const float> a, std::span<const float> b) {
  return 1.0 - cosine_similarity(a, b);
}

/// Deterministic stand-in for a text encoder: F standard-normal draws seeded
/// by hash(label, seed), normalized.
FeatureVec encode_label(std::string_view label, std::uint64_t seed, std::size_t dim);

/// Ordered set of mutually distinct features (pairwise cosine distance > tau)
/// with optional text labels. Entries are stored contiguously.
class FeatureDb {
 public:
  FeatureDb() = default;
  FeatureDb(std::size_t dim, double tau);

  std::size_t dim() const { return dim_; }
  double tau() const { return tau_; }
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }

  std::span<const float> entry(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  double entry_norm(std::size_t i) const { return norms_[i]; }
  const std::string& label(std::size_t i) const { return labels_[i]; }
  std::optional<std::size_t> find_label(std::string_view label) const;

  /// Appends without checking the separation invariant. Used by the
  /// deduplicating builder, by grounding, and by the map loader.
  std::size_t append_unchecked(std::span<const float> f, std::string label = {});

  /// Equality over dim, entries and labels; tau is not part of the identity
  /// (it is not persisted in map files).
  friend bool operator==(const FeatureDb& a, const FeatureDb& b) {
    return a.dim_ == b.dim_ && a.data_ == b.data_ && a.labels_ == b.labels_;
  }

 private:
  std::size_t dim_ = 0;
  double tau_ = 0.0;
  std::vector<float> data_;
  std::vector<double> norms_;
  std::vector<std::string> labels_;
};

struct NearestFeature {
  std::size_t index = 0;
  double similarity = 0.0;
};

/// Argmax cosine similarity; ties go to the lowest index. Throws NotFound on
/// an empty DB.
NearestFeature nearest_feature(const FeatureDb& db, std::span<const float> f);

/// Greedy stream-order deduplication: a feature becomes a new entry iff its
/// cosine distance to every current entry exceeds tau, otherwise it maps to
/// its cosine-closest entry.
class FeatureDbBuilder {
 public:
  FeatureDbBuilder(std::size_t dim, double tau);

  /// Returns the DB index the feature was assigned to.
  std::uint32_t add(std::span<const float> f);

  const FeatureDb& db() const { return db_; }
  FeatureDb release() && { return std::move(db_); }

 private:
  FeatureDb db_;
};

struct FeatureDbBuild {
  FeatureDb db;
  std::vector<std::uint32_t> assignment;  // one DB index per input feature
};

FeatureDbBuild build_feature_db_with_assignment(std::span<const FeatureVec> features, double tau);
FeatureDb build_feature_db(std::span<const FeatureVec> features, double tau);

struct GroundingResult {
  FeatureDb grounded;
  // remap[i]: grounded index for old entry i, or nullopt when discarded.
  std::vector<std::optional<std::uint32_t>> remap;
};

/// Replaces the DB by the encodings of `prompt_labels` and remaps old entries
/// to their most similar grounded entry. Entries whose best match is farther
/// than `discard_threshold` in cosine distance are discarded.
GroundingResult ground_db(const FeatureDb& db, std::span<const std::string> prompt_labels,
                          std::uint64_t encoder_seed, double discard_threshold);

/// Per-pixel feature grid, row-major (v * width + u). Pixel features are not
/// required to be unit norm (externally injected files may not be).
struct FeatureImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t dim = 0;
  std::vector<float> data;

  FeatureImage() = default;
  FeatureImage(std::uint32_t w, std::uint32_t h, std::uint32_t f)
      : width(w), height(h), dim(f), data(std::size_t{w} * h * f, 0.0f) {}

  std::size_t pixel_count() const { return std::size_t{width} * height; }
  std::span<const float> pixel(std::size_t idx) const { return {data.data() + idx * dim, dim}; }
  std::span<float> pixel(std::size_t idx) { return {data.data() + idx * dim, dim}; }
  std::span<const float> at(std::uint32_t u, std::uint32_t v) const {
    return pixel(std::size_t{v} * width + u);
  }

  friend bool operator==(const FeatureImage&, const FeatureImage&) = default;
};

}  // namespace omcl
