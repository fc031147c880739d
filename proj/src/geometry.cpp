#include "omcl/geometry.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "omcl/errors.hpp"

namespace omcl {

Quat canonical(const Quat& q) {
  const double len = q.norm();
  if (!(len > 0.0) || !std::isfinite(len)) throw InvalidArgument("quaternion must be finite and nonzero");
  Quat n(q.coeffs() / len);
  if (n.w() < 0.0) n.coeffs() = -n.coeffs();
  return n;
}

Pose::Pose(const Vec3& t, const Quat& q) : t_(t), q_(canonical(q)) {}

Pose Pose::from_yaw(const Vec3& t, double yaw) {
  return Pose(t, Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ())));
}

Pose Pose::inverse() const {
  const Quat qi = q_.conjugate();
  return Pose(-(qi * t_), qi);
}

double Pose::yaw() const {
  const Vec3 fwd = q_ * Vec3::UnitX();
  return std::atan2(fwd.y(), fwd.x());
}

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = q_.toRotationMatrix();
  m.topRightCorner<3, 1>() = t_;
  return m;
}

Pose compose_pose(const Pose& a, const Pose& b) {
  return Pose(a.rotation() * b.translation() + a.translation(), a.rotation() * b.rotation());
}

double rotation_distance(const Quat& a, const Quat& b) {
  const double d = std::abs(a.normalized().dot(b.normalized()));
  return 2.0 * std::acos(std::min(1.0, d));
}

double translation_distance(const Pose& a, const Pose& b) {
  return (a.translation() - b.translation()).norm();
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidArgument("camera intrinsics: focal lengths must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
    throw InvalidArgument("camera intrinsics: principal point outside the image");
}

std::vector<Vec3> pixel_rays(const CameraIntrinsics& intr, std::span<const Pixel> pixels) {
  intr.validate();
  std::vector<Vec3> out;
  out.reserve(pixels.size());
  for (const Pixel& p : pixels) {
    if (p.u >= intr.width || p.v >= intr.height) throw InvalidArgument("pixel outside image bounds");
    out.push_back(Vec3((p.u - intr.cx) / intr.fx, (p.v - intr.cy) / intr.fy, 1.0).normalized());
  }
  return out;
}

const Eigen::Matrix3d& optical_to_body() {
  static const Eigen::Matrix3d m = [] {
    Eigen::Matrix3d r;
    r.col(0) = Vec3(0, -1, 0);
    r.col(1) = Vec3(0, 0, -1);
    r.col(2) = Vec3(1, 0, 0);
    return r;
  }();
  return m;
}

Pose perturb_pose(const Pose& p, double sigma_t, double sigma_r_deg, Rng& rng) {
  if (sigma_t < 0.0 || sigma_r_deg < 0.0) throw InvalidArgument("perturb_pose: negative sigma");
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec3 t = p.translation();
  if (sigma_t > 0.0) t += sigma_t * Vec3(normal(rng), normal(rng), normal(rng));
  Quat q = p.rotation();
  if (sigma_r_deg > 0.0) {
    Vec3 axis(normal(rng), normal(rng), normal(rng));
    while (axis.squaredNorm() < 1e-24) axis = Vec3(normal(rng), normal(rng), normal(rng));
    const double angle = sigma_r_deg * kDegToRad * normal(rng);
    q = q * Quat(Eigen::AngleAxisd(angle, axis.normalized()));
  }
  return Pose(t, q);
}

void write_trajectory(const std::filesystem::path& path, std::span<const StampedPose> traj) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open trajectory file for writing: " + path.string());
  out << std::setprecision(17);
  for (const StampedPose& s : traj) {
    const Vec3& t = s.pose.translation();
    const Quat& q = s.pose.rotation();
    out << s.t << ' ' << t.x() << ' ' << t.y() << ' ' << t.z() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z()
        << ' ' << q.w() << '\n';
  }
  if (!out) throw IoError("failed writing trajectory file: " + path.string());
}

std::vector<StampedPose> read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trajectory file: " + path.string());
  std::vector<StampedPose> traj;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double t, x, y, z, qx, qy, qz, qw;
    if (!(ls >> t >> x >> y >> z >> qx >> qy >> qz >> qw))
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 't tx ty tz qx qy qz qw'");
    traj.push_back({t, Pose(Vec3(x, y, z), Quat(qw, qx, qy, qz))});
  }
  return traj;
}

}  // namespace omcl
