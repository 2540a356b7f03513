#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "locbench/errors.hpp"

namespace locbench {

inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

// ===== Pose =====
//
// Convention: a camera pose is (c, q) with camera center c in world
// coordinates and unit quaternion q rotating world into camera frame:
//   X_local = R(q) * (X_world - c)
// The camera looks along +z of its local frame. Quaternions are kept in
// canonical sign (w >= 0; if w == 0 the first nonzero of x,y,z is >= 0) so
// that equal rotations compare equal componentwise.

inline Eigen::Quaterniond canonical_quaternion(const Eigen::Quaterniond& q) {
  const double n2 = q.coeffs().squaredNorm();
  if (n2 < 1e-24) throw ZeroNormError("cannot normalize zero quaternion");
  Eigen::Quaterniond out = q;
  // Skip the division when the norm is already unit well beyond rotation
  // accuracy (deviation <= ~5e-10). A freshly divided quaternion lands
  // inside this window, so canonicalization is bitwise idempotent.
  if (std::abs(n2 - 1.0) > 1e-9) out.coeffs() /= std::sqrt(n2);
  const double c[4] = {out.w(), out.x(), out.y(), out.z()};
  for (double v : c) {
    if (v > 0.0) return out;
    if (v < 0.0) {
      out.coeffs() = -out.coeffs();
      return out;
    }
  }
  return out;
}

struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

  Pose() = default;
  Pose(const Eigen::Vector3d& center, const Eigen::Quaterniond& q)
      : position(center), orientation(canonical_quaternion(q)) {}

  static Pose identity() { return Pose(); }

  Eigen::Matrix3d rotation() const { return orientation.toRotationMatrix(); }

  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const {
    return orientation * (world - position);
  }

  /// Viewing direction (+z axis of the camera) expressed in world frame.
  Eigen::Vector3d view_direction() const {
    return rotation().row(2).transpose();
  }
};

/// Builds the pose of a camera at `center` looking at `target`, with `up`
/// resolving the roll ambiguity.
inline Pose look_at_pose(const Eigen::Vector3d& center,
                         const Eigen::Vector3d& target,
                         const Eigen::Vector3d& up = Eigen::Vector3d::UnitZ()) {
  Eigen::Vector3d z = target - center;
  if (z.norm() < 1e-12) throw ZeroNormError("look_at: target equals center");
  z.normalize();
  Eigen::Vector3d x = z.cross(up);
  if (x.norm() < 1e-9) x = z.cross(Eigen::Vector3d::UnitY());
  x.normalize();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d r;  // rows are the camera axes in world coordinates
  r.row(0) = x.transpose();
  r.row(1) = y.transpose();
  r.row(2) = z.transpose();
  return Pose(center, Eigen::Quaterniond(r));
}

// ----- Pose error metrics -----

/// Euclidean distance between camera centers, meters.
inline double position_error(const Pose& estimate, const Pose& reference) {
  return (estimate.position - reference.position).norm();
}

/// Angle of the relative rotation in degrees, computed from the trace of
/// R_est^-1 * R_ref with the acos argument clamped to [-1, 1]. Result is in
/// [0, 180].
inline double rotation_error_deg(const Pose& estimate, const Pose& reference) {
  const Eigen::Matrix3d rel =
      estimate.rotation().transpose() * reference.rotation();
  const double arg = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::clamp(rad_to_deg(std::acos(arg)), 0.0, 180.0);
}

// ----- Quaternion / pose blending -----

/// Weighted sum of quaternions, renormalized to the unit sphere. Inputs are
/// sign-aligned to the first quaternion before summation (q and -q encode the
/// same rotation). Throws ZeroNormError when the weighted sum has norm below
/// 1e-12 (e.g. antipodal inputs with equal weights).
inline Eigen::Quaterniond blend_quaternions(
    const std::vector<Eigen::Quaterniond>& quats,
    const std::vector<double>& weights) {
  if (quats.empty() || quats.size() != weights.size())
    throw std::invalid_argument("blend_quaternions: size mismatch");
  int nonzero = -1;
  int nonzero_count = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] != 0.0) {
      nonzero = static_cast<int>(i);
      ++nonzero_count;
    }
  }
  // All the mass on one element: return it untouched so a degenerate blend
  // is bit-exact.
  if (nonzero_count == 1 && weights[nonzero] > 0.0) {
    Eigen::Quaterniond q = quats[nonzero];
    if (nonzero != 0 && q.coeffs().dot(quats[0].coeffs()) < 0.0)
      q.coeffs() = -q.coeffs();
    return canonical_quaternion(q);
  }
  Eigen::Vector4d sum = Eigen::Vector4d::Zero();
  for (std::size_t i = 0; i < quats.size(); ++i) {
    Eigen::Vector4d c = quats[i].coeffs();
    if (c.dot(quats[0].coeffs()) < 0.0) c = -c;
    sum += weights[i] * c;
  }
  if (sum.norm() < 1e-12)
    throw ZeroNormError("blend_quaternions: weighted sum has zero norm");
  return canonical_quaternion(Eigen::Quaterniond(sum.normalized()));
}

/// Weighted linear combination of poses: positions combine linearly,
/// orientations via blend_quaternions. Weights must sum to 1 within 1e-9.
inline Pose blend_poses(const std::vector<Pose>& poses,
                        const std::vector<double>& weights) {
  if (poses.empty() || poses.size() != weights.size())
    throw std::invalid_argument("blend_poses: size mismatch");
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  if (std::abs(wsum - 1.0) > 1e-9)
    throw std::invalid_argument("blend_poses: weights must sum to 1");
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  std::vector<Eigen::Quaterniond> quats;
  quats.reserve(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    center += weights[i] * poses[i].position;
    quats.push_back(poses[i].orientation);
  }
  Pose out;
  out.position = center;
  out.orientation = blend_quaternions(quats, weights);
  return out;
}

// ===== Camera model =====

struct CameraIntrinsics {
  int width = 0;
  int height = 0;
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;

  bool valid() const { return width > 0 && height > 0 && fx > 0 && fy > 0; }
};

/// Pinhole projection (no lens distortion). Returns nullopt when the point
/// is behind the camera (z <= 1e-9 in camera frame).
inline std::optional<Eigen::Vector2d> project(const Eigen::Vector3d& point,
                                              const Pose& pose,
                                              const CameraIntrinsics& cam) {
  const Eigen::Vector3d local = pose.to_camera(point);
  if (local.z() <= 1e-9) return std::nullopt;
  return Eigen::Vector2d(cam.fx * local.x() / local.z() + cam.cx,
                         cam.fy * local.y() / local.z() + cam.cy);
}

/// Unit direction in world frame of the viewing ray through `pixel`.
inline Eigen::Vector3d back_project(const Eigen::Vector2d& pixel,
                                    const Pose& pose,
                                    const CameraIntrinsics& cam) {
  const Eigen::Vector3d dir_cam((pixel.x() - cam.cx) / cam.fx,
                                (pixel.y() - cam.cy) / cam.fy, 1.0);
  return (pose.orientation.conjugate() * dir_cam).normalized();
}

inline bool inside_image(const Eigen::Vector2d& pixel,
                         const CameraIntrinsics& cam) {
  return pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() < cam.width &&
         pixel.y() < cam.height;
}

// ===== Frusta and overlap =====

/// Half-space {x : normal . x + offset >= 0}; normal unit length and points
/// into the kept side, so signed_distance() is positive inside.
struct HalfSpace {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double offset = 0.0;

  double signed_distance(const Eigen::Vector3d& x) const {
    return normal.dot(x) + offset;
  }
};

/// Viewing frustum: intersection of 6 half-spaces (near, far, 4 image-border
/// planes) derived from pose + intrinsics.
struct Frustum {
  Pose pose;
  CameraIntrinsics cam;
  double near_plane = 0.1;  // meters
  double far_plane = 50.0;  // meters

  Frustum() = default;
  Frustum(const Pose& p, const CameraIntrinsics& c, double near_m = 0.1,
          double far_m = 50.0)
      : pose(p), cam(c), near_plane(near_m), far_plane(far_m) {
    if (!cam.valid()) throw std::invalid_argument("Frustum: bad intrinsics");
    if (!(near_m > 0.0) || !(far_m > near_m))
      throw std::invalid_argument("Frustum: need 0 < near < far");
  }

  /// Camera-frame directions through the four image corners, z = 1.
  std::array<Eigen::Vector3d, 4> corner_directions() const {
    const double w = static_cast<double>(cam.width);
    const double h = static_cast<double>(cam.height);
    auto dir = [&](double u, double v) {
      return Eigen::Vector3d((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy,
                             1.0);
    };
    return {dir(0, 0), dir(w, 0), dir(w, h), dir(0, h)};
  }

  std::array<HalfSpace, 6> planes() const {
    std::array<HalfSpace, 6> out;
    const Eigen::Matrix3d r = pose.rotation();
    const Eigen::Vector3d axis = r.row(2).transpose();
    const Eigen::Vector3d& c = pose.position;
    out[0] = {axis, -axis.dot(c) - near_plane};
    out[1] = {-axis, axis.dot(c) + far_plane};
    const auto corners = corner_directions();
    for (int i = 0; i < 4; ++i) {
      const Eigen::Vector3d a = r.transpose() * corners[i];
      const Eigen::Vector3d b = r.transpose() * corners[(i + 1) % 4];
      Eigen::Vector3d n = a.cross(b);
      if (n.dot(axis) < 0.0) n = -n;  // keep the image center inside
      n.normalize();
      out[2 + i] = {n, -n.dot(c)};
    }
    return out;
  }

  bool contains(const Eigen::Vector3d& x, double tol = 0.0) const {
    for (const HalfSpace& h : planes())
      if (h.signed_distance(x) < -tol) return false;
    return true;
  }

  /// The 8 frustum corners (near and far rectangle) in world coordinates.
  std::array<Eigen::Vector3d, 8> corners() const {
    std::array<Eigen::Vector3d, 8> out;
    const Eigen::Matrix3d rt = pose.rotation().transpose();
    const auto dirs = corner_directions();
    for (int i = 0; i < 4; ++i) {
      out[i] = pose.position + rt * (dirs[i] * near_plane);
      out[4 + i] = pose.position + rt * (dirs[i] * far_plane);
    }
    return out;
  }

  /// Center and radius of a sphere containing the whole frustum; used as a
  /// cheap disjointness test before the LP.
  std::pair<Eigen::Vector3d, double> bounding_sphere() const {
    const Eigen::Vector3d mid =
        pose.position +
        pose.view_direction() * (0.5 * (near_plane + far_plane));
    double r = 0.0;
    for (const auto& corner : corners())
      r = std::max(r, (corner - mid).norm());
    return {mid, r};
  }
};

/// Chebyshev center of the polytope {x : n_i.x + d_i >= 0}: the center and
/// radius of the largest inscribed sphere, found by maximizing r subject to
/// n_i.x + d_i >= r. Solved exactly by enumerating 4-subsets of active
/// constraints (4 unknowns), which is cheap for the 12 planes of a frustum
/// pair. Returns nullopt when no feasible vertex exists.
inline std::optional<std::pair<Eigen::Vector3d, double>> chebyshev_center(
    const std::vector<HalfSpace>& planes) {
  const int n = static_cast<int>(planes.size());
  if (n < 4) return std::nullopt;
  constexpr double kFeasTol = 1e-7;
  bool found = false;
  Eigen::Vector3d best_x = Eigen::Vector3d::Zero();
  double best_r = -std::numeric_limits<double>::infinity();
  Eigen::Matrix4d a;
  Eigen::Vector4d b;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int k = j + 1; k < n; ++k)
        for (int l = k + 1; l < n; ++l) {
          const int idx[4] = {i, j, k, l};
          for (int row = 0; row < 4; ++row) {
            a.block<1, 3>(row, 0) = planes[idx[row]].normal.transpose();
            a(row, 3) = -1.0;
            b(row) = -planes[idx[row]].offset;
          }
          Eigen::FullPivLU<Eigen::Matrix4d> lu(a);
          if (!lu.isInvertible()) continue;
          const Eigen::Vector4d sol = lu.solve(b);
          if (!sol.allFinite()) continue;
          const Eigen::Vector3d x = sol.head<3>();
          const double r = sol(3);
          if (r <= best_r) continue;
          bool feasible = true;
          for (const HalfSpace& h : planes) {
            if (h.signed_distance(x) - r < -kFeasTol) {
              feasible = false;
              break;
            }
          }
          if (feasible) {
            found = true;
            best_x = x;
            best_r = r;
          }
        }
  if (!found) return std::nullopt;
  return std::make_pair(best_x, best_r);
}

/// Radius in meters of the largest sphere inscribed in the intersection of
/// two frusta; 0 when they do not overlap.
inline double frustum_overlap_radius(const Frustum& fa, const Frustum& fb) {
  const auto [ca, ra] = fa.bounding_sphere();
  const auto [cb, rb] = fb.bounding_sphere();
  if ((ca - cb).norm() > ra + rb) return 0.0;
  std::vector<HalfSpace> planes;
  planes.reserve(12);
  for (const HalfSpace& h : fa.planes()) planes.push_back(h);
  for (const HalfSpace& h : fb.planes()) planes.push_back(h);
  const auto center = chebyshev_center(planes);
  if (!center || center->second <= 0.0) return 0.0;
  return center->second;
}

struct FrustumPair {
  std::string image_a;  // lexicographically smaller id
  std::string image_b;
  double radius = 0.0;
};

/// All image pairs whose frustum overlap sphere has radius >= min_radius.
/// When max_pairs_per_image is set, each image keeps only its top-N pairs by
/// radius and a pair survives if either endpoint keeps it. Output is sorted
/// by radius descending, ties by (image_a, image_b).
inline std::vector<FrustumPair> select_overlapping_pairs(
    const std::map<std::string, Frustum>& frusta, double min_radius,
    std::optional<int> max_pairs_per_image = std::nullopt) {
  if (min_radius < 0.0)
    throw std::invalid_argument("select_overlapping_pairs: min_radius < 0");
  if (max_pairs_per_image && *max_pairs_per_image < 1)
    throw std::invalid_argument(
        "select_overlapping_pairs: max_pairs_per_image < 1");
  std::vector<const std::pair<const std::string, Frustum>*> items;
  items.reserve(frusta.size());
  for (const auto& kv : frusta) items.push_back(&kv);
  std::vector<FrustumPair> pairs;
  for (std::size_t i = 0; i < items.size(); ++i)
    for (std::size_t j = i + 1; j < items.size(); ++j) {
      const double r =
          frustum_overlap_radius(items[i]->second, items[j]->second);
      if (r >= min_radius)
        pairs.push_back({items[i]->first, items[j]->first, r});
    }
  auto order = [](const FrustumPair& lhs, const FrustumPair& rhs) {
    if (lhs.radius != rhs.radius) return lhs.radius > rhs.radius;
    if (lhs.image_a != rhs.image_a) return lhs.image_a < rhs.image_a;
    return lhs.image_b < rhs.image_b;
  };
  std::sort(pairs.begin(), pairs.end(), order);
  if (max_pairs_per_image) {
    // Each image keeps its top-N incident pairs by radius; a pair survives
    // when at least one endpoint keeps it. `pairs` is already sorted, so the
    // per-image rank is the number of earlier incident pairs.
    std::map<std::string, int> rank;
    std::vector<char> keep(pairs.size(), 0);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const int ra = rank[pairs[i].image_a]++;
      const int rb = rank[pairs[i].image_b]++;
      if (ra < *max_pairs_per_image || rb < *max_pairs_per_image) keep[i] = 1;
    }
    std::vector<FrustumPair> kept;
    for (std::size_t i = 0; i < pairs.size(); ++i)
      if (keep[i]) kept.push_back(pairs[i]);
    pairs = std::move(kept);
  }
  return pairs;
}

}  // namespace locbench
