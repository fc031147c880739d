#include "omcl/features.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "omcl/errors.hpp"
#include "omcl/rng.hpp"

namespace omcl {

namespace {

template <typename T>
void normalize_into(std::span<const T> values, std::vector<float>& out) {
  double sq = 0.0;
  for (T v : values) sq += static_cast<double>(v) * static_cast<double>(v);
  const double n = std::sqrt(sq);
  if (!(n > 0.0) || !std::isfinite(n)) throw InvalidFeature("feature vector has zero or non-finite norm");
  out.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = static_cast<float>(static_cast<double>(values[i]) / n);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

FeatureVec FeatureVec::normalized(std::span<const double> values) {
  std::vector<float> out;
  normalize_into(values, out);
  return FeatureVec(std::move(out));
}

FeatureVec FeatureVec::normalized(std::span<const float> values) {
  std::vector<float> out;
  normalize_into(values, out);
  return FeatureVec(std::move(out));
}

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw InvalidArgument("feature dimension mismatch");
  // Four fixed lanes: a deterministic summation order that still pipelines.
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += static_cast<double>(a[i]) * b[i];
    s1 += static_cast<double>(a[i + 1]) * b[i + 1];
    s2 += static_cast<double>(a[i + 2]) * b[i + 2];
    s3 += static_cast<double>(a[i + 3]) * b[i + 3];
  }
  for (; i < n; ++i) s0 += static_cast<double>(a[i]) * b[i];
  return (s0 + s1) + (s2 + s3);
}

double norm(std::span<const float> a) { return std::sqrt(dot(a, a)); }

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw InvalidFeature("cosine similarity of a zero-norm vector");
  return dot(a, b) / (na * nb);
}

FeatureVec encode_label(std::string_view label, std::uint64_t seed, std::size_t dim) {
  if (label.empty()) throw InvalidArgument("encode_label: empty label");
  if (dim < 2) throw InvalidArgument("encode_label: dimension must be >= 2");
  Rng rng(derive_seed(seed, {fnv1a(label)}));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  for (double& x : v) x = normal(rng);
  return FeatureVec::normalized(std::span<const double>(v));
}

FeatureDb::FeatureDb(std::size_t dim, double tau) : dim_(dim), tau_(tau) {}

std::optional<std::size_t> FeatureDb::find_label(std::string_view label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == label) return i;
  return std::nullopt;
}

std::size_t FeatureDb::append_unchecked(std::span<const float> f, std::string label) {
  if (f.size() != dim_) throw InvalidArgument("feature dimension does not match DB");
  data_.insert(data_.end(), f.begin(), f.end());
  norms_.push_back(norm(f));
  labels_.push_back(std::move(label));
  return labels_.size() - 1;
}

NearestFeature nearest_feature(const FeatureDb& db, std::span<const float> f) {
  if (db.empty()) throw NotFound("nearest_feature: empty feature DB");
  const double nf = norm(f);
  if (!(nf > 0.0)) throw InvalidFeature("nearest_feature: zero-norm query");
  NearestFeature best{0, -2.0};
  for (std::size_t i = 0; i < db.size(); ++i) {
    const double s = dot(f, db.entry(i)) / (nf * db.entry_norm(i));
    if (s > best.similarity) best = {i, s};
  }
  return best;
}

FeatureDbBuilder::FeatureDbBuilder(std::size_t dim, double tau) : db_(dim, tau) {
  if (!(tau >= 0.0 && tau < 2.0)) throw InvalidArgument("tau must lie in [0, 2)");
}

std::uint32_t FeatureDbBuilder::add(std::span<const float> f) {
  if (!db_.empty()) {
    const NearestFeature nn = nearest_feature(db_, f);
    if (!(1.0 - nn.similarity > db_.tau())) return static_cast<std::uint32_t>(nn.index);
  } else if (!(norm(f) > 0.0)) {
    throw InvalidFeature("feature DB: zero-norm feature");
  }
  return static_cast<std::uint32_t>(db_.append_unchecked(f));
}

FeatureDbBuild build_feature_db_with_assignment(std::span<const FeatureVec> features, double tau) {
  const std::size_t dim = features.empty() ? 0 : features.front().dim();
  FeatureDbBuilder builder(dim, tau);
  FeatureDbBuild out;
  out.assignment.reserve(features.size());
  for (const FeatureVec& f : features) out.assignment.push_back(builder.add(f));
  out.db = std::move(builder).release();
  return out;
}

FeatureDb build_feature_db(std::span<const FeatureVec> features, double tau) {
  return build_feature_db_with_assignment(features, tau).db;
}

GroundingResult ground_db(const FeatureDb& db, std::span<const std::string> prompt_labels,
                          std::uint64_t encoder_seed, double discard_threshold) {
  if (prompt_labels.empty()) throw InvalidArgument("ground_db: no prompt labels");
  std::set<std::string_view> seen;
  for (const std::string& l : prompt_labels)
    if (!seen.insert(l).second) throw InvalidArgument("ground_db: duplicate prompt label '" + l + "'");

  GroundingResult out;
  out.grounded = FeatureDb(db.dim(), db.tau());
  for (const std::string& l : prompt_labels) out.grounded.append_unchecked(encode_label(l, encoder_seed, db.dim()), l);

  out.remap.reserve(db.size());
  for (std::size_t i = 0; i < db.size(); ++i) {
    const NearestFeature nn = nearest_feature(out.grounded, db.entry(i));
    if (1.0 - nn.similarity > discard_threshold)
      out.remap.emplace_back(std::nullopt);
    else
      out.remap.emplace_back(static_cast<std::uint32_t>(nn.index));
  }
  return out;
}

}  // namespace omcl
