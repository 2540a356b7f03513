#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "locbench/errors.hpp"
#include "locbench/geometry.hpp"
#include "locbench/retrieval.hpp"
#include "locbench/rng.hpp"

namespace locbench {

using Keypoints = std::vector<Eigen::Vector2d>;

// ===== Matches =====

/// 2D-2D keypoint matches between image pairs. Pairs are stored under the
/// lexicographically ordered (a, b) key; indices flip transparently when
/// queried in the other orientation. Within a pair the mapping is one-to-one.
class MatchSet {
 public:
  using PairKey = std::pair<std::string, std::string>;
  using Matches = std::vector<std::pair<int, int>>;

  void add(const std::string& a, const std::string& b, Matches matches) {
    if (a == b) throw std::invalid_argument("MatchSet: self-pair " + a);
    std::string ka = a, kb = b;
    if (ka > kb) {
      std::swap(ka, kb);
      for (auto& m : matches) std::swap(m.first, m.second);
    }
    std::set<int> left, right;
    for (const auto& [la, lb] : matches) {
      if (la < 0 || lb < 0)
        throw std::invalid_argument("MatchSet: negative keypoint id");
      if (!left.insert(la).second || !right.insert(lb).second)
        throw std::invalid_argument("MatchSet: duplicate keypoint in pair " +
                                    ka + " / " + kb);
    }
    std::sort(matches.begin(), matches.end());
    if (!pairs_.emplace(PairKey{ka, kb}, std::move(matches)).second)
      throw std::invalid_argument("MatchSet: pair added twice: " + ka + " / " +
                                  kb);
  }

  /// Matches oriented as (keypoint in a, keypoint in b); empty when the pair
  /// is absent.
  Matches between(const std::string& a, const std::string& b) const {
    const bool flip = a > b;
    auto it = pairs_.find(flip ? PairKey{b, a} : PairKey{a, b});
    if (it == pairs_.end()) return {};
    Matches out = it->second;
    if (flip)
      for (auto& m : out) std::swap(m.first, m.second);
    return out;
  }

  bool has(const std::string& a, const std::string& b) const {
    return pairs_.count(a < b ? PairKey{a, b} : PairKey{b, a}) > 0;
  }

  const std::map<PairKey, Matches>& all() const { return pairs_; }
  std::size_t num_pairs() const { return pairs_.size(); }

 private:
  std::map<PairKey, Matches> pairs_;
};

// ===== Triangulation =====

struct TriangulationObservation {
  Eigen::Vector2d pixel;
  Pose pose;
  CameraIntrinsics cam;
};

enum class TriangulationFailure {
  kNone,
  kDegenerateBaseline,  // identical centers or all rays below the angle gate
  kBehindCamera,        // solution fails the cheirality check somewhere
};

struct TriangulationResult {
  std::optional<Eigen::Vector3d> point;
  TriangulationFailure failure = TriangulationFailure::kNone;
};

/// Multi-view DLT triangulation (linear least squares over all rays)
/// followed by two acceptance gates: positive depth in every view and a
/// maximum pairwise triangulation angle of at least min_angle_deg.
inline TriangulationResult triangulate(
    const std::vector<TriangulationObservation>& obs,
    double min_angle_deg = 1.0) {
  if (obs.size() < 2)
    throw std::invalid_argument("triangulate: need at least 2 observations");
  bool any_baseline = false;
  for (std::size_t i = 0; i < obs.size() && !any_baseline; ++i)
    for (std::size_t j = i + 1; j < obs.size(); ++j)
      if ((obs[i].pose.position - obs[j].pose.position).norm() > 1e-9) {
        any_baseline = true;
        break;
      }
  if (!any_baseline) return {std::nullopt, TriangulationFailure::kDegenerateBaseline};

  Eigen::MatrixXd a(2 * obs.size(), 4);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto& o = obs[i];
    Eigen::Matrix<double, 3, 4> p;
    const Eigen::Matrix3d r = o.pose.rotation();
    Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
    k(0, 0) = o.cam.fx;
    k(1, 1) = o.cam.fy;
    k(0, 2) = o.cam.cx;
    k(1, 2) = o.cam.cy;
    p.leftCols<3>() = k * r;
    p.col(3) = -k * r * o.pose.position;
    a.row(2 * i) = o.pixel.x() * p.row(2) - p.row(0);
    a.row(2 * i + 1) = o.pixel.y() * p.row(2) - p.row(1);
    const double n0 = a.row(2 * i).norm();
    const double n1 = a.row(2 * i + 1).norm();
    if (n0 > 0) a.row(2 * i) /= n0;
    if (n1 > 0) a.row(2 * i + 1) /= n1;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d h = svd.matrixV().col(3);
  if (std::abs(h(3)) < 1e-12 * h.head<3>().norm())
    return {std::nullopt, TriangulationFailure::kDegenerateBaseline};
  const Eigen::Vector3d x = h.head<3>() / h(3);

  for (const auto& o : obs)
    if (o.pose.to_camera(x).z() <= 1e-9)
      return {std::nullopt, TriangulationFailure::kBehindCamera};

  double max_angle = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i)
    for (std::size_t j = i + 1; j < obs.size(); ++j) {
      const Eigen::Vector3d ri = x - obs[i].pose.position;
      const Eigen::Vector3d rj = x - obs[j].pose.position;
      if (ri.norm() < 1e-12 || rj.norm() < 1e-12) continue;
      const double c =
          std::clamp(ri.normalized().dot(rj.normalized()), -1.0, 1.0);
      max_angle = std::max(max_angle, rad_to_deg(std::acos(c)));
    }
  if (max_angle < min_angle_deg)
    return {std::nullopt, TriangulationFailure::kDegenerateBaseline};
  return {x, TriangulationFailure::kNone};
}

// ===== Pose-only refinement =====

namespace detail {

/// Projection of `point` plus the 2x6 Jacobian of the pixel w.r.t. the local
/// pose perturbation [rotation delta (so(3), left-multiplied) ; center
/// delta]. nullopt when the point is at or behind the camera plane.
inline std::optional<std::pair<Eigen::Vector2d, Eigen::Matrix<double, 2, 6>>>
projection_jacobian(const Pose& pose, const Eigen::Vector3d& point,
                    const CameraIntrinsics& cam) {
  const Eigen::Vector3d xl = pose.to_camera(point);
  if (xl.z() <= 1e-9) return std::nullopt;
  const double z = xl.z();
  const Eigen::Vector2d pixel(cam.fx * xl.x() / z + cam.cx,
                              cam.fy * xl.y() / z + cam.cy);
  Eigen::Matrix<double, 2, 3> dpix;
  dpix << cam.fx / z, 0.0, -cam.fx * xl.x() / (z * z), 0.0, cam.fy / z,
      -cam.fy * xl.y() / (z * z);
  Eigen::Matrix3d skew;
  skew << 0, -xl.z(), xl.y(), xl.z(), 0, -xl.x(), -xl.y(), xl.x(), 0;
  Eigen::Matrix<double, 3, 6> dlocal;
  dlocal.leftCols<3>() = -skew;          // d(xl)/d(dtheta): -[xl]x
  dlocal.rightCols<3>() = -pose.rotation();  // d(xl)/d(dc): -R
  Eigen::Matrix<double, 2, 6> j = dpix * dlocal;
  return std::make_pair(pixel, j);
}

inline Pose apply_pose_step(const Pose& pose,
                            const Eigen::Matrix<double, 6, 1>& step) {
  const Eigen::Vector3d dtheta = step.head<3>();
  const double angle = dtheta.norm();
  Eigen::Quaterniond dq = Eigen::Quaterniond::Identity();
  if (angle > 0.0)
    dq = Eigen::Quaterniond(Eigen::AngleAxisd(angle, dtheta / angle));
  return Pose(pose.position + step.tail<3>(), dq * pose.orientation);
}

}  // namespace detail

struct Correspondence2d3d {
  Eigen::Vector2d pixel;
  Eigen::Vector3d point;
};

namespace detail {

inline double reprojection_cost(const Pose& pose,
                                const std::vector<Correspondence2d3d>& corr,
                                const CameraIntrinsics& cam) {
  double cost = 0.0;
  for (const auto& c : corr) {
    const auto pix = project(c.point, pose, cam);
    if (!pix) {
      cost += 1e12;  // behind the camera: forbid the step
      continue;
    }
    cost += (*pix - c.pixel).squaredNorm();
  }
  return cost;
}

}  // namespace detail

/// Levenberg-Marquardt minimization of the total squared reprojection error
/// over a 6-parameter local pose perturbation. Terminates on gradient
/// infinity-norm < 1e-10, step norm < 1e-12, or 100 iterations. The returned
/// pose never has higher cost than the initial one.
inline Pose refine_pose(const Pose& initial,
                        const std::vector<Correspondence2d3d>& corr,
                        const CameraIntrinsics& cam) {
  if (corr.empty()) return initial;
  Pose pose = initial;
  double cost = detail::reprojection_cost(pose, corr, cam);
  Pose best = pose;
  double best_cost = cost;
  double lambda = 1e-4;
  for (int iter = 0; iter < 100; ++iter) {
    Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
    for (const auto& c : corr) {
      const auto pj = detail::projection_jacobian(pose, c.point, cam);
      if (!pj) continue;
      const Eigen::Vector2d r = pj->first - c.pixel;
      jtj += pj->second.transpose() * pj->second;
      jtr += pj->second.transpose() * r;
    }
    if (jtr.lpNorm<Eigen::Infinity>() < 1e-10) break;
    bool stepped = false;
    for (int attempt = 0; attempt < 25; ++attempt) {
      Eigen::Matrix<double, 6, 6> damped = jtj;
      for (int d = 0; d < 6; ++d)
        damped(d, d) += lambda * std::max(jtj(d, d), 1e-12);
      const Eigen::Matrix<double, 6, 1> step = -damped.ldlt().solve(jtr);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      if (step.norm() < 1e-12) {
        stepped = false;
        break;
      }
      const Pose candidate = detail::apply_pose_step(pose, step);
      const double new_cost = detail::reprojection_cost(candidate, corr, cam);
      if (new_cost < cost) {
        pose = candidate;
        cost = new_cost;
        lambda = std::max(lambda / 3.0, 1e-12);
        stepped = true;
        break;
      }
      lambda *= 10.0;
    }
    if (cost < best_cost) {
      best = pose;
      best_cost = cost;
    }
    if (!stepped) break;
  }
  if (cost < best_cost) best = pose;
  return best;
}

// ===== P3P minimal solver =====

namespace detail {

/// Real roots of a polynomial with coefficients highest-degree first, via
/// the companion-matrix eigenvalues. Leading near-zero coefficients are
/// trimmed.
inline std::vector<double> real_polynomial_roots(std::vector<double> coeffs) {
  double max_abs = 0.0;
  for (double c : coeffs) max_abs = std::max(max_abs, std::abs(c));
  if (max_abs == 0.0) return {};
  std::size_t lead = 0;
  while (lead < coeffs.size() && std::abs(coeffs[lead]) < 1e-14 * max_abs)
    ++lead;
  coeffs.erase(coeffs.begin(), coeffs.begin() + lead);
  const int deg = static_cast<int>(coeffs.size()) - 1;
  if (deg < 1) return {};
  if (deg == 1) return {-coeffs[1] / coeffs[0]};
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(deg, deg);
  for (int i = 0; i < deg; ++i) companion(0, i) = -coeffs[i + 1] / coeffs[0];
  for (int i = 1; i < deg; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
  std::vector<double> roots;
  for (int i = 0; i < deg; ++i) {
    const std::complex<double> r = es.eigenvalues()(i);
    if (std::abs(r.imag()) < 1e-6 * (1.0 + std::abs(r.real())))
      roots.push_back(r.real());
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

/// Grunert-style P3P: recovers up to four camera poses from three world
/// points and the corresponding unit bearing vectors in the camera frame.
/// The quartic in the distance ratio v = s3/s1 below was derived as the
/// resultant of the two law-of-cosines ratio equations and verified
/// numerically before transcription.
inline std::vector<Pose> p3p_solve(const std::array<Eigen::Vector3d, 3>& x,
                                   const std::array<Eigen::Vector3d, 3>& f) {
  const double a = (x[1] - x[2]).norm();
  const double b = (x[0] - x[2]).norm();
  const double c = (x[0] - x[1]).norm();
  if (a < 1e-9 || b < 1e-9 || c < 1e-9) return {};
  if ((x[1] - x[0]).cross(x[2] - x[0]).norm() < 1e-10 * b * c) return {};

  const double ca = f[1].dot(f[2]);
  const double cb = f[0].dot(f[2]);
  const double cg = f[0].dot(f[1]);
  const double A = (a * a) / (b * b);
  const double C = (c * c) / (b * b);

  const double c4 =
      A * A - 2 * A * C - 2 * A + C * C - 4 * C * ca * ca + 2 * C + 1;
  const double c3 =
      -4 * (A * A * cb - 2 * A * C * cb - A * ca * cg - A * cb + C * C * cb -
            2 * C * ca * ca * cb - C * ca * cg + C * cb + ca * cg);
  const double c2 =
      2 * (2 * A * A * cb * cb + A * A - 4 * A * C * cb * cb - 2 * A * C -
           4 * A * ca * cb * cg - 2 * A * cg * cg + 2 * C * C * cb * cb +
           C * C - 2 * C * ca * ca - 4 * C * ca * cb * cg + 2 * ca * ca +
           2 * cg * cg - 1);
  const double c1 =
      -4 * (A * A * cb - 2 * A * C * cb - A * ca * cg - 2 * A * cb * cg * cg +
            A * cb + C * C * cb - C * ca * cg - C * cb + ca * cg);
  const double c0 =
      A * A - 2 * A * C - 4 * A * cg * cg + 2 * A + C * C - 2 * C + 1;

  auto quartic = [&](double v) {
    return (((c4 * v + c3) * v + c2) * v + c1) * v + c0;
  };
  auto quartic_d = [&](double v) {
    return ((4 * c4 * v + 3 * c3) * v + 2 * c2) * v + c1;
  };

  std::vector<Pose> poses;
  for (double v : real_polynomial_roots({c4, c3, c2, c1, c0})) {
    for (int it = 0; it < 5; ++it) {  // Newton polish
      const double d = quartic_d(v);
      if (std::abs(d) < 1e-300) break;
      v -= quartic(v) / d;
    }
    if (!(v > 1e-8)) continue;
    const double denom = 2.0 * (cg - v * ca);
    if (std::abs(denom) < 1e-12) continue;
    const double u =
        ((A - C) * (1.0 + v * v - 2.0 * v * cb) - v * v + 1.0) / denom;
    if (!(u > 1e-8)) continue;
    const double s1sq_den = 1.0 + v * v - 2.0 * v * cb;
    if (s1sq_den < 1e-12) continue;
    const double s1 = b / std::sqrt(s1sq_den);
    const double s2 = u * s1;
    const double s3 = v * s1;

    // rigid alignment of the world triangle onto the camera-frame triangle
    const Eigen::Vector3d y0 = s1 * f[0];
    const Eigen::Vector3d y1 = s2 * f[1];
    const Eigen::Vector3d y2 = s3 * f[2];
    const Eigen::Vector3d mx = (x[0] + x[1] + x[2]) / 3.0;
    const Eigen::Vector3d my = (y0 + y1 + y2) / 3.0;
    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    h += (x[0] - mx) * (y0 - my).transpose();
    h += (x[1] - mx) * (y1 - my).transpose();
    h += (x[2] - mx) * (y2 - my).transpose();
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(
        h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d r = svd.matrixV() * svd.matrixU().transpose();
    if (r.determinant() < 0) {
      Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
      flip(2, 2) = -1.0;
      r = svd.matrixV() * flip * svd.matrixU().transpose();
    }
    const Eigen::Vector3d t = my - r * mx;
    const Eigen::Vector3d center = -r.transpose() * t;
    poses.emplace_back(center, Eigen::Quaterniond(r));
  }
  return poses;
}

}  // namespace detail

// ===== PNP + RANSAC =====

struct RansacParams {
  double inlier_threshold_px = 8.0;
  double confidence = 0.9999;
  int max_iterations = 10000;
  int min_inliers = 12;
  std::uint64_t seed = 0;
};

struct PnpResult {
  Pose pose;
  std::vector<char> inlier_mask;  // aligned with the input correspondences
  int num_inliers = 0;
  int iterations = 0;
};

namespace detail {

inline double reprojection_error_sq(const Pose& pose,
                                    const Correspondence2d3d& c,
                                    const CameraIntrinsics& cam) {
  const auto pix = project(c.point, pose, cam);
  if (!pix) return std::numeric_limits<double>::infinity();
  return (*pix - c.pixel).squaredNorm();
}

}  // namespace detail

/// Robust absolute pose estimation: P3P hypotheses from random 3-point
/// samples, a 4th sampled point disambiguating among the up-to-4 solutions,
/// adaptive iteration count from the running inlier ratio, and LM refinement
/// of the best model on its inliers. Deterministic for a fixed seed. Returns
/// nullopt when no model reaches min_inliers.
inline std::optional<PnpResult> pnp_ransac(
    const std::vector<Correspondence2d3d>& corr, const CameraIntrinsics& cam,
    const RansacParams& params) {
  const int n = static_cast<int>(corr.size());
  if (n < 4 || n < params.min_inliers) return std::nullopt;
  if (params.max_iterations < 1 || params.min_inliers < 3 ||
      !(params.confidence > 0.0 && params.confidence < 1.0) ||
      !(params.inlier_threshold_px > 0.0))
    throw std::invalid_argument("pnp_ransac: bad parameters");

  // bearing vectors once per correspondence
  std::vector<Eigen::Vector3d> bearings(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d d((corr[i].pixel.x() - cam.cx) / cam.fx,
                            (corr[i].pixel.y() - cam.cy) / cam.fy, 1.0);
    bearings[i] = d.normalized();
  }

  Rng rng(params.seed);
  const double thr_sq =
      params.inlier_threshold_px * params.inlier_threshold_px;
  bool have_best = false;
  Pose best_pose;
  int best_count = 0;
  double best_sse = std::numeric_limits<double>::infinity();
  double required = params.max_iterations;
  int it = 0;
  for (; it < params.max_iterations && it < required; ++it) {
    int idx[4];
    for (int s = 0; s < 4; ++s) {
      bool fresh;
      do {
        idx[s] = static_cast<int>(rng.uniform_int(n));
        fresh = true;
        for (int t = 0; t < s; ++t) fresh = fresh && idx[t] != idx[s];
      } while (!fresh);
    }
    const std::array<Eigen::Vector3d, 3> xs = {
        corr[idx[0]].point, corr[idx[1]].point, corr[idx[2]].point};
    const std::array<Eigen::Vector3d, 3> fs = {bearings[idx[0]],
                                               bearings[idx[1]],
                                               bearings[idx[2]]};
    const auto candidates = detail::p3p_solve(xs, fs);
    if (candidates.empty()) continue;
    // the 4th point picks the physical solution
    const Pose* chosen = nullptr;
    double chosen_err = std::numeric_limits<double>::infinity();
    for (const Pose& p : candidates) {
      const double e =
          detail::reprojection_error_sq(p, corr[idx[3]], cam);
      if (e < chosen_err) {
        chosen_err = e;
        chosen = &p;
      }
    }
    if (!chosen || !std::isfinite(chosen_err)) continue;
    int count = 0;
    double sse = 0.0;
    for (int i = 0; i < n; ++i) {
      const double e = detail::reprojection_error_sq(*chosen, corr[i], cam);
      if (e <= thr_sq) {
        ++count;
        sse += e;
      }
    }
    if (count > best_count || (count == best_count && sse < best_sse)) {
      best_count = count;
      best_sse = sse;
      best_pose = *chosen;
      have_best = true;
      const double w = static_cast<double>(count) / n;
      const double p_good = std::pow(w, 4);
      if (p_good >= 1.0 - 1e-12) {
        required = it + 1.0;
      } else if (p_good > 0.0) {
        required = std::ceil(std::log(1.0 - params.confidence) /
                             std::log(1.0 - p_good));
      }
    }
  }
  if (!have_best || best_count < 4) return std::nullopt;

  std::vector<Correspondence2d3d> inlier_corr;
  inlier_corr.reserve(best_count);
  for (int i = 0; i < n; ++i)
    if (detail::reprojection_error_sq(best_pose, corr[i], cam) <= thr_sq)
      inlier_corr.push_back(corr[i]);
  const Pose refined = refine_pose(best_pose, inlier_corr, cam);

  PnpResult out;
  out.pose = refined;
  out.inlier_mask.assign(n, 0);
  out.iterations = it;
  for (int i = 0; i < n; ++i) {
    if (detail::reprojection_error_sq(refined, corr[i], cam) <= thr_sq) {
      out.inlier_mask[i] = 1;
      ++out.num_inliers;
    }
  }
  if (out.num_inliers < params.min_inliers) return std::nullopt;
  return out;
}

// ===== Point maps and track building =====

/// Triangulated 3D points with their observations, plus the reverse
/// (image, keypoint) -> point index used to mint 2D-3D matches.
struct PointMap {
  struct Point {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    std::vector<std::pair<std::string, int>> observations;  // sorted
  };

  std::map<std::int64_t, Point> points;
  std::map<std::pair<std::string, int>, std::int64_t> reverse;

  std::optional<std::int64_t> lookup(const std::string& image,
                                     int keypoint) const {
    auto it = reverse.find({image, keypoint});
    if (it == reverse.end()) return std::nullopt;
    return it->second;
  }

  void insert(std::int64_t id, const Point& p) {
    points[id] = p;
    for (const auto& obs : p.observations) reverse[obs] = id;
  }

  /// Observed point-id set per image (IoU ground truth source).
  std::map<std::string, std::set<std::int64_t>> observation_sets() const {
    std::map<std::string, std::set<std::int64_t>> out;
    for (const auto& [pid, pt] : points)
      for (const auto& [image, kp] : pt.observations) out[image].insert(pid);
    return out;
  }

  bool consistent() const {
    std::size_t n_obs = 0;
    for (const auto& [pid, pt] : points) {
      for (const auto& obs : pt.observations) {
        auto it = reverse.find(obs);
        if (it == reverse.end() || it->second != pid) return false;
        ++n_obs;
      }
    }
    return n_obs == reverse.size();
  }
};

namespace detail {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(std::size_t n) : parent(n) {
    for (std::size_t i = 0; i < n; ++i) parent[i] = static_cast<int>(i);
  }
  int find(int i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace detail

/// Builds a 3D map from known camera poses and 2D-2D matches: keypoint
/// tracks by union-find over match edges (pairs touching images without a
/// pose are ignored), tracks with two keypoints in the same image discarded
/// as inconsistent, remaining tracks triangulated with the cheirality and
/// triangulation-angle gates. Point ids are dense in deterministic track
/// order.
inline PointMap build_global_map(
    const std::map<std::string, Pose>& poses,
    const std::map<std::string, CameraIntrinsics>& cams,
    const std::map<std::string, Keypoints>& keypoints,
    const MatchSet& matches, double min_tri_angle_deg = 1.0) {
  // collect nodes (image, keypoint) touched by usable match pairs
  std::map<std::pair<std::string, int>, int> node_index;
  std::vector<std::pair<std::string, int>> nodes;
  auto node_id = [&](const std::string& image, int kp) {
    const auto key = std::make_pair(image, kp);
    auto it = node_index.find(key);
    if (it != node_index.end()) return it->second;
    const int id = static_cast<int>(nodes.size());
    node_index.emplace(key, id);
    nodes.push_back(key);
    return id;
  };
  std::vector<std::pair<int, int>> edges;
  for (const auto& [pair, ms] : matches.all()) {
    if (!poses.count(pair.first) || !poses.count(pair.second)) continue;
    const auto ka = keypoints.find(pair.first);
    const auto kb = keypoints.find(pair.second);
    for (const auto& [ia, ib] : ms) {
      if (ka == keypoints.end() ||
          ia >= static_cast<int>(ka->second.size()))
        throw CrossRefError("match references missing keypoint " +
                            pair.first + "#" + std::to_string(ia));
      if (kb == keypoints.end() ||
          ib >= static_cast<int>(kb->second.size()))
        throw CrossRefError("match references missing keypoint " +
                            pair.second + "#" + std::to_string(ib));
      edges.emplace_back(node_id(pair.first, ia), node_id(pair.second, ib));
    }
  }
  detail::UnionFind uf(nodes.size());
  for (const auto& [a, b] : edges) uf.unite(a, b);
  std::map<int, std::vector<int>> components;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    components[uf.find(static_cast<int>(i))].push_back(static_cast<int>(i));

  PointMap map;
  std::int64_t next_id = 0;
  for (auto& [root, members] : components) {
    if (members.size() < 2) continue;
    std::vector<std::pair<std::string, int>> track;
    track.reserve(members.size());
    for (int m : members) track.push_back(nodes[m]);
    std::sort(track.begin(), track.end());
    bool conflict = false;
    for (std::size_t i = 1; i < track.size(); ++i)
      if (track[i].first == track[i - 1].first) {
        conflict = true;
        break;
      }
    if (conflict) continue;  // two keypoints of one image: drop the track
    std::vector<TriangulationObservation> obs;
    obs.reserve(track.size());
    bool usable = true;
    for (const auto& [image, kp] : track) {
      const auto cit = cams.find(image);
      if (cit == cams.end()) {
        usable = false;
        break;
      }
      obs.push_back({keypoints.at(image)[kp], poses.at(image), cit->second});
    }
    if (!usable) continue;
    const auto tri = triangulate(obs, min_tri_angle_deg);
    if (!tri.point) continue;
    PointMap::Point p;
    p.position = *tri.point;
    p.observations = track;
    map.insert(next_id++, p);
  }
  return map;
}

// ===== Localization against a map =====

enum class LocalizationOutcome {
  kSuccess,
  kInsufficientRelevant,  // < 2 retrieved images co-observe scene structure
  kMatchingTooWeak,       // < 4 candidate 2D-3D matches
  kDegenerateBaseline,    // triangulation gates eliminated the whole map
  kRansacFailed,
};

inline const char* to_string(LocalizationOutcome o) {
  switch (o) {
    case LocalizationOutcome::kSuccess: return "success";
    case LocalizationOutcome::kInsufficientRelevant:
      return "insufficient_relevant";
    case LocalizationOutcome::kMatchingTooWeak: return "matching_too_weak";
    case LocalizationOutcome::kDegenerateBaseline:
      return "degenerate_baseline";
    case LocalizationOutcome::kRansacFailed: return "ransac_failed";
  }
  return "?";
}

struct LocalizationResult {
  std::string query;
  int k = 0;            // requested neighborhood size
  int effective_k = 0;  // how many retrieved images were available
  LocalizationOutcome outcome = LocalizationOutcome::kRansacFailed;
  std::optional<Pose> pose;
  std::optional<int> num_inliers;
  std::optional<int> num_matches;  // candidate 2D-3D matches fed to RANSAC
};

namespace detail {

/// Candidate 2D-3D matches for a query against a map, walking the retrieved
/// images in rank order. A query keypoint matched through several database
/// images keeps the assignment from the best-ranked one.
inline std::vector<Correspondence2d3d> collect_2d3d(
    const std::string& query_id, const Keypoints& query_keypoints,
    const std::vector<std::string>& ranked_ids, const MatchSet& matches,
    const PointMap& map) {
  std::set<int> used;
  std::vector<Correspondence2d3d> out;
  for (const std::string& db : ranked_ids) {
    for (const auto& [qkp, dbkp] : matches.between(query_id, db)) {
      if (qkp < 0 || qkp >= static_cast<int>(query_keypoints.size()))
        throw CrossRefError("match references missing query keypoint " +
                            query_id + "#" + std::to_string(qkp));
      if (used.count(qkp)) continue;
      const auto pid = map.lookup(db, dbkp);
      if (!pid) continue;
      used.insert(qkp);
      out.push_back({query_keypoints[qkp], map.points.at(*pid).position});
    }
  }
  return out;
}

}  // namespace detail

/// Task 2b: localize against a prebuilt global map. The per-query RNG stream
/// is derived from (params.seed, query id), so results do not depend on
/// scheduling.
inline LocalizationResult localize_global(
    const std::string& query_id, const Keypoints& query_keypoints,
    const CameraIntrinsics& query_cam, const Ranking& ranking, int k,
    const MatchSet& matches, const PointMap& map,
    const RansacParams& params) {
  if (k < 1) throw std::invalid_argument("localize_global: k < 1");
  LocalizationResult r;
  r.query = query_id;
  r.k = k;
  r.effective_k =
      static_cast<int>(std::min<std::size_t>(k, ranking.items.size()));
  const auto candidates = detail::collect_2d3d(
      query_id, query_keypoints, ranking.top_ids(r.effective_k), matches,
      map);
  r.num_matches = static_cast<int>(candidates.size());
  if (candidates.size() < 4) {
    r.outcome = LocalizationOutcome::kMatchingTooWeak;
    return r;
  }
  RansacParams local = params;
  local.seed = derive_seed(params.seed, query_id);
  const auto pnp = pnp_ransac(candidates, query_cam, local);
  if (!pnp) {
    r.outcome = LocalizationOutcome::kRansacFailed;
    return r;
  }
  r.outcome = LocalizationOutcome::kSuccess;
  r.pose = pnp->pose;
  r.num_inliers = pnp->num_inliers;
  return r;
}

/// Task 2a: build a 3D map on the fly from the top-k retrieved images (known
/// poses) and register the query against it. Failure taxonomy:
/// InsufficientRelevant when fewer than two retrieved images share a
/// surviving track with the query, DegenerateBaseline when the triangulation
/// gates eliminate every track, MatchingTooWeak when fewer than 4 candidate
/// 2D-3D matches remain.
inline LocalizationResult localize_local_sfm(
    const std::string& query_id, const Keypoints& query_keypoints,
    const CameraIntrinsics& query_cam, const Ranking& ranking, int k,
    const std::map<std::string, Pose>& db_poses,
    const std::map<std::string, CameraIntrinsics>& db_cams,
    const std::map<std::string, Keypoints>& db_keypoints,
    const MatchSet& matches, const RansacParams& params,
    double min_tri_angle_deg = 1.0) {
  if (k < 2) throw std::invalid_argument("localize_local_sfm: k < 2");
  LocalizationResult r;
  r.query = query_id;
  r.k = k;
  r.effective_k =
      static_cast<int>(std::min<std::size_t>(k, ranking.items.size()));
  const std::vector<std::string> top = ranking.top_ids(r.effective_k);
  if (top.size() < 2) {
    r.outcome = LocalizationOutcome::kInsufficientRelevant;
    return r;
  }

  // restrict the world to the top-k images
  std::map<std::string, Pose> poses;
  std::map<std::string, CameraIntrinsics> cams;
  std::map<std::string, Keypoints> keypoints;
  for (const std::string& id : top) {
    const auto pit = db_poses.find(id);
    if (pit == db_poses.end()) throw MissingPoseError(id);
    poses.emplace(id, pit->second);
    const auto cit = db_cams.find(id);
    if (cit == db_cams.end()) throw MissingPoseError(id);
    cams.emplace(id, cit->second);
    const auto kit = db_keypoints.find(id);
    if (kit != db_keypoints.end()) keypoints.emplace(id, kit->second);
  }
  MatchSet local_matches;
  for (std::size_t i = 0; i < top.size(); ++i)
    for (std::size_t j = i + 1; j < top.size(); ++j) {
      const auto ms = matches.between(top[i], top[j]);
      if (!ms.empty()) local_matches.add(top[i], top[j], ms);
    }

  // tracks before triangulation (mode i needs them): union-find over the
  // local matches, inconsistent tracks dropped
  std::map<std::pair<std::string, int>, int> node_index;
  std::vector<std::pair<std::string, int>> nodes;
  auto node_id = [&](const std::string& image, int kp) {
    const auto key = std::make_pair(image, kp);
    auto it = node_index.find(key);
    if (it != node_index.end()) return it->second;
    const int id = static_cast<int>(nodes.size());
    node_index.emplace(key, id);
    nodes.push_back(key);
    return id;
  };
  std::vector<std::pair<int, int>> edges;
  for (const auto& [pair, ms] : local_matches.all())
    for (const auto& [ia, ib] : ms)
      edges.emplace_back(node_id(pair.first, ia), node_id(pair.second, ib));
  detail::UnionFind uf(nodes.size());
  for (const auto& [a, b] : edges) uf.unite(a, b);
  std::map<int, std::vector<int>> components;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    components[uf.find(static_cast<int>(i))].push_back(static_cast<int>(i));
  // (image, kp) -> surviving-track membership
  std::set<std::pair<std::string, int>> in_track;
  bool any_track = false;
  for (const auto& [root, members] : components) {
    if (members.size() < 2) continue;
    std::set<std::string> images;
    bool conflict = false;
    for (int m : members) {
      if (!images.insert(nodes[m].first).second) {
        conflict = true;
        break;
      }
    }
    if (conflict) continue;
    any_track = true;
    for (int m : members) in_track.insert(nodes[m]);
  }

  // mode (i): how many retrieved images share a surviving track with the
  // query?
  std::set<std::string> co_observing;
  for (const std::string& db : top)
    for (const auto& [qkp, dbkp] : matches.between(query_id, db))
      if (in_track.count({db, dbkp})) {
        co_observing.insert(db);
        break;
      }
  if (co_observing.size() < 2) {
    r.outcome = LocalizationOutcome::kInsufficientRelevant;
    return r;
  }

  const PointMap map = build_global_map(poses, cams, keypoints, local_matches,
                                        min_tri_angle_deg);
  if (map.points.empty()) {
    // tracks existed (mode i passed) but triangulation rejected them all
    r.outcome = any_track ? LocalizationOutcome::kDegenerateBaseline
                          : LocalizationOutcome::kInsufficientRelevant;
    return r;
  }

  const auto candidates = detail::collect_2d3d(query_id, query_keypoints, top,
                                               matches, map);
  r.num_matches = static_cast<int>(candidates.size());
  if (candidates.size() < 4) {
    r.outcome = LocalizationOutcome::kMatchingTooWeak;
    return r;
  }
  RansacParams local = params;
  local.seed = derive_seed(params.seed, query_id);
  const auto pnp = pnp_ransac(candidates, query_cam, local);
  if (!pnp) {
    r.outcome = LocalizationOutcome::kRansacFailed;
    return r;
  }
  r.outcome = LocalizationOutcome::kSuccess;
  r.pose = pnp->pose;
  r.num_inliers = pnp->num_inliers;
  return r;
}

}  // namespace locbench
