#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "locbench/data_io.hpp"
#include "locbench/errors.hpp"
#include "locbench/geometry.hpp"
#include "locbench/rng.hpp"

namespace locbench {

// ===== scene specification =====

enum class CameraPattern { kRing, kGrid, kCorridor };

inline const char* to_string(CameraPattern p) {
  switch (p) {
    case CameraPattern::kRing: return "ring";
    case CameraPattern::kGrid: return "grid";
    case CameraPattern::kCorridor: return "corridor";
  }
  return "?";
}

enum class DescriptorMode {
  kPoseSensitive,  // embeds camera center and viewing direction
  kPoseRobust,     // hash of the observed scene cell: place recognition
                   // without pose awareness
};

struct DescriptorModel {
  DescriptorMode mode = DescriptorMode::kPoseSensitive;
  int dimension = 16;
  double noise_sigma = 0.02;
  double cell_size = 0.0;  // pose-robust grid cell; 0 means the scene extent
};

struct SceneSpec {
  std::uint64_t seed = 42;
  int n_points = 200;
  double extent = 20.0;  // scene diameter in meters
  int n_db_cameras = 30;
  int n_queries = 10;
  CameraPattern pattern = CameraPattern::kRing;
  double pixel_noise_sigma = 0.5;
  double match_dropout = 0.0;   // chance a visible point goes undetected
  double outlier_rate = 0.0;    // chance a true match gets corrupted
  double fov_deg = 60.0;        // horizontal field of view
  double orientation_jitter_deg = 2.0;
  DescriptorModel descriptor;
};

/// The fixed configuration used by the acceptance checks and the docs.
inline SceneSpec reference_scene() { return SceneSpec{}; }

inline CameraIntrinsics intrinsics_from_fov(double fov_deg) {
  CameraIntrinsics cam;
  cam.width = 640;
  cam.height = 480;
  const double f = (cam.width / 2.0) / std::tan(deg_to_rad(fov_deg) / 2.0);
  cam.fx = f;
  cam.fy = f;
  cam.cx = cam.width / 2.0;
  cam.cy = cam.height / 2.0;
  return cam;
}

namespace detail {

inline void validate_spec(const SceneSpec& spec) {
  if (spec.n_points < 1) throw ConfigError("n_points must be >= 1");
  if (!(spec.extent > 0.0)) throw ConfigError("extent must be positive");
  if (spec.n_db_cameras < 1) throw ConfigError("n_db_cameras must be >= 1");
  if (spec.n_db_cameras > 999 || spec.n_queries > 999)
    throw ConfigError("at most 999 cameras per role");
  if (spec.n_queries < 0) throw ConfigError("n_queries must be >= 0");
  if (!(spec.pixel_noise_sigma >= 0.0))
    throw ConfigError("pixel_noise_sigma must be >= 0");
  if (!(spec.match_dropout >= 0.0 && spec.match_dropout < 1.0))
    throw ConfigError("match_dropout must be in [0, 1)");
  if (!(spec.outlier_rate >= 0.0 && spec.outlier_rate < 1.0))
    throw ConfigError("outlier_rate must be in [0, 1)");
  if (!(spec.fov_deg > 10.0 && spec.fov_deg < 170.0))
    throw ConfigError("fov_deg must be in (10, 170)");
  if (!(spec.orientation_jitter_deg >= 0.0))
    throw ConfigError("orientation_jitter_deg must be >= 0");
  if (spec.descriptor.dimension < 4)
    throw ConfigError("descriptor dimension must be >= 4");
  if (spec.descriptor.mode == DescriptorMode::kPoseSensitive &&
      spec.descriptor.dimension < 6)
    throw ConfigError("pose-sensitive descriptors need dimension >= 6");
  if (!(spec.descriptor.noise_sigma >= 0.0))
    throw ConfigError("descriptor noise_sigma must be >= 0");
  if (spec.descriptor.cell_size < 0.0)
    throw ConfigError("descriptor cell_size must be >= 0");
  if (spec.pattern == CameraPattern::kCorridor &&
      spec.n_queries > spec.n_db_cameras - 1)
    throw ConfigError(
        "corridor places queries between consecutive cameras: n_queries <= "
        "n_db_cameras - 1");
}

inline std::string padded_id(const char* prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%s%03d", prefix, i);
  return buf;
}

inline Eigen::Quaterniond jittered(const Eigen::Quaterniond& q, Rng& rng,
                                   double jitter_deg) {
  // Always consume the same number of draws so geometry does not depend on
  // the jitter magnitude being zero or not.
  Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
  const double angle = rng.normal(0.0, deg_to_rad(jitter_deg));
  if (axis.norm() < 1e-12 || jitter_deg == 0.0) return q;
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis.normalized())) * q;
}

}  // namespace detail

// ===== generator =====
//
// Fully deterministic in SceneSpec::seed: every randomized stage draws from
// its own stream derived from (seed, stage tag), and all loops run over
// sorted containers. Camera geometry is independent of the descriptor model,
// so the same scene can be rendered with different retrieval behaviors.

inline Dataset generate_scene(const SceneSpec& spec) {
  detail::validate_spec(spec);
  Dataset ds;
  const CameraIntrinsics cam = intrinsics_from_fov(spec.fov_deg);
  const double e = spec.extent;

  // --- 3D points ---
  {
    Rng rng(derive_seed(spec.seed, "points"));
    for (int i = 0; i < spec.n_points; ++i) {
      Eigen::Vector3d p;
      if (spec.pattern == CameraPattern::kCorridor)
        p = Eigen::Vector3d(rng.uniform(-e / 2, e / 2),
                            rng.uniform(-e / 10, e / 10),
                            rng.uniform(-e / 10, e / 10));
      else
        p = Eigen::Vector3d(rng.uniform(-e / 2, e / 2),
                            rng.uniform(-e / 2, e / 2),
                            rng.uniform(-e / 8, e / 8));
      ds.points3d.emplace(i, p);
    }
  }

  // --- database cameras ---
  {
    Rng rng(derive_seed(spec.seed, "cameras"));
    for (int i = 0; i < spec.n_db_cameras; ++i) {
      const std::string id = detail::padded_id("db", i);
      Pose pose;
      switch (spec.pattern) {
        case CameraPattern::kRing: {
          const double ang = 2.0 * kPi * i / spec.n_db_cameras;
          const double r = 0.75 * e;
          const Eigen::Vector3d c(r * std::cos(ang), r * std::sin(ang),
                                  0.1 * e);
          pose = look_at_pose(c, Eigen::Vector3d::Zero());
          break;
        }
        case CameraPattern::kGrid: {
          const int side = static_cast<int>(
              std::ceil(std::sqrt(static_cast<double>(spec.n_db_cameras))));
          const int gx = i % side;
          const int gy = i / side;
          const double span = 1.2 * e;
          const double step = side > 1 ? span / (side - 1) : 0.0;
          const Eigen::Vector3d c(-span / 2 + gx * step,
                                  -span / 2 + gy * step, 0.35 * e);
          pose = look_at_pose(c, Eigen::Vector3d::Zero(),
                              Eigen::Vector3d::UnitY());
          break;
        }
        case CameraPattern::kCorridor: {
          const double step = e / spec.n_db_cameras;
          const Eigen::Vector3d c(-e / 2 + (i + 0.5) * step, -0.3 * e,
                                  0.05 * e);
          pose = look_at_pose(c, c + Eigen::Vector3d::UnitY());
          break;
        }
      }
      pose = Pose(pose.position,
                  detail::jittered(pose.orientation, rng,
                                   spec.orientation_jitter_deg));
      ds.cameras.emplace(id, cam);
      ds.poses.emplace(id, pose);
    }
  }

  // --- query cameras ---
  {
    Rng rng(derive_seed(spec.seed, "query-cameras"));
    for (int i = 0; i < spec.n_queries; ++i) {
      const std::string id = detail::padded_id("q", i);
      Pose pose;
      switch (spec.pattern) {
        case CameraPattern::kRing: {
          const double ang =
              2.0 * kPi * (i + 0.5) / std::max(spec.n_queries, 1) + 0.37;
          const double r = 0.75 * e * rng.uniform(0.92, 1.05);
          const Eigen::Vector3d c(r * std::cos(ang), r * std::sin(ang),
                                  0.1 * e + rng.uniform(-0.02 * e, 0.02 * e));
          pose = look_at_pose(c, Eigen::Vector3d::Zero());
          break;
        }
        case CameraPattern::kGrid: {
          const Eigen::Vector3d c(rng.uniform(-0.5 * e, 0.5 * e),
                                  rng.uniform(-0.5 * e, 0.5 * e), 0.38 * e);
          pose = look_at_pose(c, Eigen::Vector3d::Zero(),
                              Eigen::Vector3d::UnitY());
          break;
        }
        case CameraPattern::kCorridor: {
          // exactly midway between consecutive database cameras
          const Pose& a = ds.poses.at(detail::padded_id("db", i));
          const Pose& b = ds.poses.at(detail::padded_id("db", i + 1));
          const Eigen::Vector3d c = 0.5 * (a.position + b.position);
          pose = Pose(c, a.orientation);
          break;
        }
      }
      pose = Pose(pose.position,
                  detail::jittered(pose.orientation, rng,
                                   spec.orientation_jitter_deg));
      ds.cameras.emplace(id, cam);
      ds.poses.emplace(id, pose);
      ds.queries.insert(id);
    }
  }

  // --- per-image detections (visibility, dropout, pixel noise) ---
  // keypoints ordered by point id; the observation table records the truth
  std::map<std::string, std::map<int, int>> point_to_kp;  // image -> pid -> kp
  for (const auto& [id, pose] : ds.poses) {
    Rng rng(derive_seed(spec.seed, "detect:" + id));
    Keypoints kps;
    auto& index = point_to_kp[id];
    for (const auto& [pid_raw, p] : ds.points3d) {
      const int pid = static_cast<int>(pid_raw);
      const auto pix = project(p, pose, ds.cameras.at(id));
      if (!pix || !inside_image(*pix, ds.cameras.at(id))) continue;
      if (spec.match_dropout > 0.0 && rng.uniform() < spec.match_dropout)
        continue;
      const Eigen::Vector2d noisy =
          *pix + spec.pixel_noise_sigma *
                     Eigen::Vector2d(rng.normal(), rng.normal());
      const int kp = static_cast<int>(kps.size());
      kps.push_back(noisy);
      index.emplace(pid, kp);
      ds.observations[pid].emplace_back(id, kp);
    }
    ds.keypoints.emplace(id, std::move(kps));
  }
  for (auto& [pid, obs] : ds.observations) std::sort(obs.begin(), obs.end());

  // --- 2D-2D matches from co-visibility (with optional corruption) ---
  // pairs: database-database and query-database; a corrupted match
  // reassigns the right-hand keypoint to one that no true match of the pair
  // uses, so the one-to-one property survives
  {
    std::vector<std::string> ids;
    for (const auto& [id, pose] : ds.poses) ids.push_back(id);
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = i + 1; j < ids.size(); ++j) {
        const std::string& a = ids[i];
        const std::string& b = ids[j];
        if (ds.is_query(a) && ds.is_query(b)) continue;
        const auto& ia = point_to_kp.at(a);
        const auto& ib = point_to_kp.at(b);
        std::vector<std::pair<int, int>> shared;  // (kp_a, kp_b) truth
        std::set<int> used_b;
        for (const auto& [pid, ka] : ia) {
          const auto it = ib.find(pid);
          if (it == ib.end()) continue;
          shared.emplace_back(ka, it->second);
          used_b.insert(it->second);
        }
        if (shared.empty()) continue;
        MatchSet::Matches out;
        if (spec.outlier_rate > 0.0) {
          Rng rng(derive_seed(spec.seed, "match:" + a + ":" + b));
          std::vector<int> free_b;  // keypoints of b no true match touches
          for (int kb = 0;
               kb < static_cast<int>(ds.keypoints.at(b).size()); ++kb)
            if (!used_b.count(kb)) free_b.push_back(kb);
          std::size_t next_free = 0;
          for (const auto& [ka, kb] : shared) {
            if (next_free < free_b.size() &&
                rng.uniform() < spec.outlier_rate) {
              // deterministic pick without replacement
              const std::size_t pick =
                  next_free +
                  rng.uniform_int(free_b.size() - next_free);
              std::swap(free_b[next_free], free_b[pick]);
              out.emplace_back(ka, free_b[next_free++]);
            } else {
              out.emplace_back(ka, kb);
            }
          }
        } else {
          out = shared;
        }
        ds.matches.add(a, b, std::move(out));
      }
  }

  // --- global descriptors ---
  {
    ds.descriptors.dimension = spec.descriptor.dimension;
    const double cell =
        spec.descriptor.cell_size > 0.0 ? spec.descriptor.cell_size : e;
    for (const auto& [id, pose] : ds.poses) {
      Rng rng(derive_seed(spec.seed, "desc:" + id));
      Eigen::VectorXd d = Eigen::VectorXd::Zero(spec.descriptor.dimension);
      if (spec.descriptor.mode == DescriptorMode::kPoseSensitive) {
        d.segment<3>(0) = pose.position / e;
        d.segment<3>(3) = pose.view_direction();
      } else {
        // mean observed point decides the cell; every image seeing roughly
        // the same structure collides onto one pseudo-random code
        Eigen::Vector3d mean = pose.position;
        const auto& index = point_to_kp.at(id);
        if (!index.empty()) {
          mean.setZero();
          for (const auto& [pid, kp] : index)
            mean += ds.points3d.at(pid);
          mean /= static_cast<double>(index.size());
        }
        std::uint64_t h = derive_seed(spec.seed, "cell");
        for (int axis = 0; axis < 3; ++axis) {
          // cells centred on the origin, so a cloud-centred scene is one cell
          const auto c = static_cast<std::int64_t>(
              std::floor((mean[axis] + 0.5 * cell) / cell));
          h = derive_seed(h, static_cast<std::uint64_t>(c));
        }
        Rng cell_rng(h);
        for (int i = 0; i < spec.descriptor.dimension; ++i)
          d[i] = cell_rng.normal();
        d.normalize();
      }
      for (int i = 0; i < spec.descriptor.dimension; ++i)
        d[i] += spec.descriptor.noise_sigma * rng.normal();
      ds.descriptors.entries.emplace(id, std::move(d));
    }
  }

  return ds;
}

}  // namespace locbench
