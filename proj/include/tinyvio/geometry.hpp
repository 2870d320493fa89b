#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tinyvio/common.hpp"

namespace tinyvio {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Per-step 6-DoF motion: Euler angles (rad) and translation (m).
// Euler convention is ZYX (yaw-pitch-roll): R = Rz(z) * Ry(y) * Rx(x).
struct PoseDelta {
  Vec3 phi = Vec3::Zero();
  Vec3 v = Vec3::Zero();
};

struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
};

struct Trajectory {
  std::vector<Pose> poses;
  std::vector<double> timestamps;  // seconds, strictly increasing

  std::size_t size() const { return poses.size(); }
};

inline bool is_finite(const Vec3& v) { return v.allFinite(); }

inline void validate_delta(const PoseDelta& d) {
  require(d.phi.allFinite() && d.v.allFinite(), "PoseDelta: non-finite component");
  require(d.phi.cwiseAbs().maxCoeff() < kPi, "PoseDelta: |phi| must be < pi");
}

inline void validate_pose(const Pose& p, double tol = 1e-9) {
  require(p.R.allFinite() && p.t.allFinite(), "Pose: non-finite component");
  require((p.R.transpose() * p.R - Mat3::Identity()).cwiseAbs().maxCoeff() < tol,
          "Pose: R not orthonormal");
  require(std::abs(p.R.determinant() - 1.0) < tol, "Pose: det(R) != +1");
}

inline void validate_trajectory(const Trajectory& tr) {
  require(!tr.poses.empty(), "Trajectory: empty");
  require(tr.poses.size() == tr.timestamps.size(), "Trajectory: pose/timestamp count mismatch");
  for (std::size_t i = 1; i < tr.timestamps.size(); ++i)
    require(tr.timestamps[i] > tr.timestamps[i - 1], "Trajectory: timestamps not increasing");
}

inline Mat3 euler_zyx_to_matrix(const Vec3& phi) {
  const double cx = std::cos(phi.x()), sx = std::sin(phi.x());
  const double cy = std::cos(phi.y()), sy = std::sin(phi.y());
  const double cz = std::cos(phi.z()), sz = std::sin(phi.z());
  Mat3 r;
  r << cy * cz, cz * sx * sy - cx * sz, sx * sz + cx * cz * sy,
       cy * sz, cx * cz + sx * sy * sz, cx * sy * sz - cz * sx,
       -sy, cy * sx, cx * cy;
  return r;
}

inline Vec3 matrix_to_euler_zyx(const Mat3& r) {
  const double sy = -r(2, 0);
  const double y = std::asin(std::max(-1.0, std::min(1.0, sy)));
  double x, z;
  if (std::abs(sy) < 1.0 - 1e-12) {
    x = std::atan2(r(2, 1), r(2, 2));
    z = std::atan2(r(1, 0), r(0, 0));
  } else {
    // gimbal lock: yaw and roll are coupled, pick roll = 0
    x = 0.0;
    z = std::atan2(-r(0, 1), r(1, 1));
  }
  return Vec3(x, y, z);
}

inline Pose delta_to_transform(const PoseDelta& d) {
  validate_delta(d);
  return Pose{euler_zyx_to_matrix(d.phi), d.v};
}

inline PoseDelta transform_to_delta(const Pose& p) {
  return PoseDelta{matrix_to_euler_zyx(p.R), p.t};
}

inline Pose compose(const Pose& a, const Pose& b) {
  return Pose{a.R * b.R, a.R * b.t + a.t};
}

inline Pose inverse(const Pose& p) {
  return Pose{p.R.transpose(), -(p.R.transpose() * p.t)};
}

inline Pose relative(const Pose& from, const Pose& to) { return compose(inverse(from), to); }

// Geodesic rotation angle of R, in radians. atan2 of the skew part keeps
// the result well conditioned near the identity, where acos(trace) loses
// half the significant digits.
inline double rotation_angle(const Mat3& r) {
  Vec3 w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  double s = 0.5 * w.norm();
  double c = 0.5 * (r.trace() - 1.0);
  return std::atan2(s, c);
}

inline Trajectory integrate(const Pose& p0, const std::vector<PoseDelta>& deltas,
                            double frame_period = 0.1) {
  validate_pose(p0);
  Trajectory tr;
  tr.poses.reserve(deltas.size() + 1);
  tr.timestamps.reserve(deltas.size() + 1);
  tr.poses.push_back(p0);
  tr.timestamps.push_back(0.0);
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    tr.poses.push_back(compose(tr.poses.back(), delta_to_transform(deltas[i])));
    tr.timestamps.push_back(static_cast<double>(i + 1) * frame_period);
  }
  return tr;
}

struct RmseResult {
  double t_rmse = 0.0;  // meters
  double r_rmse = 0.0;  // radians, Euler-component residual norm
};

inline RmseResult pose_rmse(const std::vector<PoseDelta>& pred, const std::vector<PoseDelta>& gt) {
  require(!pred.empty(), "pose_rmse: empty input");
  require(pred.size() == gt.size(), "pose_rmse: length mismatch");
  double st = 0.0, sr = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    st += (pred[i].v - gt[i].v).squaredNorm();
    sr += (pred[i].phi - gt[i].phi).squaredNorm();
  }
  const double n = static_cast<double>(pred.size());
  return RmseResult{std::sqrt(st / n), std::sqrt(sr / n)};
}

// Per-step translation error series ||v_t - v̂_t||; the "pose-wise" error the
// online protocols average over windows.
inline std::vector<double> posewise_t_error(const std::vector<PoseDelta>& pred,
                                            const std::vector<PoseDelta>& gt) {
  require(pred.size() == gt.size(), "posewise_t_error: length mismatch");
  std::vector<double> e(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) e[i] = (pred[i].v - gt[i].v).norm();
  return e;
}

struct RelativeErrors {
  double t_rel_percent = 0.0;   // translation error / segment length * 100
  double r_rel_deg_per_100m = 0.0;
  int segment_count = 0;
};

// KITTI development-kit style relative errors: every frame is a segment
// start, segment ends are found by ground-truth arc length, and the
// rotation error is the geodesic angle of the relative error transform.
// Returns nullopt when the ground truth is shorter than the smallest
// segment length (never silently reports 0).
inline std::optional<RelativeErrors> relative_errors(const Trajectory& pred,
                                                     const Trajectory& gt) {
  require(pred.size() == gt.size(), "relative_errors: length mismatch");
  require(gt.size() >= 2, "relative_errors: need at least 2 poses");
  static const double kLengths[] = {100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0};

  const std::size_t n = gt.size();
  std::vector<double> dist(n, 0.0);
  for (std::size_t i = 1; i < n; ++i)
    dist[i] = dist[i - 1] + (gt.poses[i].t - gt.poses[i - 1].t).norm();

  double t_sum = 0.0, r_sum = 0.0;
  int count = 0;
  for (std::size_t first = 0; first < n; ++first) {
    for (double len : kLengths) {
      std::size_t last = first;
      bool found = false;
      for (std::size_t j = first; j < n; ++j) {
        if (dist[j] - dist[first] >= len) {
          last = j;
          found = true;
          break;
        }
      }
      if (!found) break;  // longer segments will not fit either
      Pose d_gt = relative(gt.poses[first], gt.poses[last]);
      Pose d_pred = relative(pred.poses[first], pred.poses[last]);
      Pose err = compose(inverse(d_pred), d_gt);
      t_sum += err.t.norm() / len * 100.0;
      r_sum += rad2deg(rotation_angle(err.R)) * 100.0 / len;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return RelativeErrors{t_sum / count, r_sum / count, count};
}

// ---------------------------------------------------------------------------
// KITTI pose text format: 12 whitespace-separated reals per line, the
// row-major 3x4 [R|t]. Writing uses 17 significant digits so that
// write(read(x)) round-trips values bit-identically.

inline std::vector<Pose> read_kitti_poses(std::istream& in) {
  std::vector<Pose> poses;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    double m[12];
    for (int i = 0; i < 12; ++i) {
      if (!(ss >> m[i])) throw ParseError("KITTI pose line: expected 12 reals", lineno);
    }
    double extra;
    if (ss >> extra) throw ParseError("KITTI pose line: more than 12 fields", lineno);
    Pose p;
    p.R << m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10];
    p.t << m[3], m[7], m[11];
    if (!p.R.allFinite() || !p.t.allFinite())
      throw ParseError("KITTI pose line: non-finite value", lineno);
    poses.push_back(p);
  }
  return poses;
}

inline std::vector<Pose> read_kitti_poses(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open pose file: " + path);
  return read_kitti_poses(f);
}

inline void write_kitti_poses(std::ostream& out, const std::vector<Pose>& poses) {
  char buf[32];
  for (const Pose& p : poses) {
    double m[12] = {p.R(0, 0), p.R(0, 1), p.R(0, 2), p.t(0),
                    p.R(1, 0), p.R(1, 1), p.R(1, 2), p.t(1),
                    p.R(2, 0), p.R(2, 1), p.R(2, 2), p.t(2)};
    for (int i = 0; i < 12; ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", m[i]);
      out << buf << (i == 11 ? "\n" : " ");
    }
  }
}

inline void write_kitti_poses(const std::string& path, const std::vector<Pose>& poses) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open pose file for writing: " + path);
  write_kitti_poses(f, poses);
}

}  // namespace tinyvio
