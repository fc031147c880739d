#pragma once

#include <Eigen/Geometry>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "omcl/rng.hpp"

namespace omcl {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

/// Rigid transform world <- body. Body frame: x forward, y left, z up.
/// The rotation is kept unit-norm with a nonnegative scalar part.
class Pose {
 public:
  Pose() : t_(Vec3::Zero()), q_(Quat::Identity()) {}
  Pose(const Vec3& t, const Quat& q);

  static Pose identity() { return {}; }
  /// Level pose: rotation about world z only.
  static Pose from_yaw(const Vec3& t, double yaw);

  const Vec3& translation() const { return t_; }
  const Quat& rotation() const { return q_; }

  Vec3 transform(const Vec3& p) const { return q_ * p + t_; }
  Vec3 rotate(const Vec3& d) const { return q_ * d; }
  Pose inverse() const;
  double yaw() const;

  Eigen::Matrix4d matrix() const;

  friend bool operator==(const Pose& a, const Pose& b) {
    return a.t_ == b.t_ && a.q_.coeffs() == b.q_.coeffs();
  }

 private:
  Vec3 t_;
  Quat q_;
};

/// a∘b: b expressed in a's frame.
Pose compose_pose(const Pose& a, const Pose& b);

/// Geodesic rotation angle between the two orientations, radians in [0, π].
double rotation_distance(const Quat& a, const Quat& b);
double translation_distance(const Pose& a, const Pose& b);

/// Quaternion with nonnegative scalar part, normalized. Throws InvalidArgument
/// on a zero or non-finite input.
Quat canonical(const Quat& q);

struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  std::uint32_t width = 0, height = 0;

  /// Throws InvalidArgument unless fx, fy > 0 and the principal point lies in
  /// the image.
  void validate() const;
};

struct Pixel {
  std::uint32_t u = 0, v = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

/// Camera-frame unit directions normalize(((u−cx)/fx, (v−cy)/fy, 1)).
/// Optical frame: z forward, x right, y down.
std::vector<Vec3> pixel_rays(const CameraIntrinsics& intr, std::span<const Pixel> pixels);

/// Fixed rotation taking optical-frame directions into the body frame.
const Eigen::Matrix3d& optical_to_body();

/// Gaussian translation noise per axis plus a rotation by N(0, sigma_r²)
/// degrees about a uniformly random axis (applied in the body frame).
Pose perturb_pose(const Pose& p, double sigma_t, double sigma_r_deg, Rng& rng);

inline constexpr double kDegToRad = 0.017453292519943295;
inline constexpr double kRadToDeg = 57.29577951308232;

struct StampedPose {
  double t = 0.0;
  Pose pose;
};

/// `t tx ty tz qx qy qz qw`, one line per frame. Blank lines and lines
/// starting with '#' are ignored on read.
void write_trajectory(const std::filesystem::path& path, std::span<const StampedPose> traj);
std::vector<StampedPose> read_trajectory(const std::filesystem::path& path);

}  // namespace omcl
