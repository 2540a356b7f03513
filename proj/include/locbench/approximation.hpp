#pragma once

#include <Eigen/Core>
#include <Eigen/LU>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "locbench/errors.hpp"
#include "locbench/geometry.hpp"
#include "locbench/retrieval.hpp"

namespace locbench {

// Pose approximation from retrieved images: the query pose is a weighted
// linear combination of the top-k database poses (positions combined
// linearly, quaternions summed and renormalized). Three weighting schemes:
//
//   EWB  equal weights 1/k
//   BDI  barycentric descriptor interpolation: weights minimize
//        || d_q - sum_i w_i d_i ||_2 subject to sum_i w_i = 1
//   CSI  cosine-similarity weighting: w_i proportional to (d_q . d_i)^alpha

enum class ApproximationMethod { kEqualWeight, kBarycentric, kCosineSim };

inline const char* to_string(ApproximationMethod m) {
  switch (m) {
    case ApproximationMethod::kEqualWeight: return "ewb";
    case ApproximationMethod::kBarycentric: return "bdi";
    case ApproximationMethod::kCosineSim: return "csi";
  }
  return "?";
}

struct ApproximationConfig {
  ApproximationMethod method = ApproximationMethod::kEqualWeight;
  int k = 1;
  double alpha = 8.0;                 // CSI sharpness
  double bdi_regularization = 1e-8;   // Tikhonov term on the KKT system
  double csi_similarity_floor = 0.0;  // similarities are clamped from below
};

inline std::vector<double> weights_ewb(int k) {
  if (k < 1) throw std::invalid_argument("weights_ewb: k must be >= 1");
  return std::vector<double>(static_cast<std::size_t>(k), 1.0 / k);
}

/// Weights minimizing ||d_q - D w||^2 subject to sum(w) = 1, solved via the
/// KKT system with a small Tikhonov term for degenerate descriptor sets
/// (duplicates, k > dim). Weights may be negative.
inline std::vector<double> weights_bdi(
    const Eigen::VectorXd& query, const std::vector<Eigen::VectorXd>& db,
    double regularization = 1e-8) {
  const int k = static_cast<int>(db.size());
  if (k < 1) throw std::invalid_argument("weights_bdi: empty neighbor set");
  for (const auto& d : db)
    if (d.size() != query.size())
      throw DimensionMismatchError("weights_bdi: descriptor size mismatch");
  if (k == 1) return {1.0};
  Eigen::MatrixXd d(query.size(), k);
  for (int i = 0; i < k; ++i) d.col(i) = db[i];
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(k + 1, k + 1);
  kkt.topLeftCorner(k, k) =
      d.transpose() * d +
      regularization * Eigen::MatrixXd::Identity(k, k);
  kkt.topRightCorner(k, 1).setOnes();
  kkt.bottomLeftCorner(1, k).setOnes();
  Eigen::VectorXd rhs(k + 1);
  rhs.head(k) = d.transpose() * query;
  rhs(k) = 1.0;
  const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
  std::vector<double> w(k);
  for (int i = 0; i < k; ++i) w[i] = sol(i);
  return w;
}

namespace detail {

/// w_i = s_i^alpha / sum_j s_j^alpha over nonnegative similarities, computed
/// as (s_i/s_max)^alpha so large alpha stays finite. All-zero input or
/// alpha = 0 degenerates to equal weights.
inline std::vector<double> csi_from_similarities(const std::vector<double>& s,
                                                 double alpha) {
  const int k = static_cast<int>(s.size());
  if (alpha == 0.0) return weights_ewb(k);
  double s_max = 0.0;
  for (double si : s) s_max = std::max(s_max, si);
  if (s_max <= 0.0) return weights_ewb(k);
  std::vector<double> w(k);
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    w[i] = s[i] > 0.0 ? std::pow(s[i] / s_max, alpha) : 0.0;
    total += w[i];
  }
  for (double& wi : w) wi /= total;
  return w;
}

}  // namespace detail

/// w_i = s_i^alpha / sum_j s_j^alpha with s_i = max(d_q . d_i, floor).
/// Descriptors must be unit-norm (within 1e-6). alpha = 0 or an all-zero
/// similarity vector degenerates to equal weights; large alpha concentrates
/// all mass on the most similar neighbor.
inline std::vector<double> weights_csi(const Eigen::VectorXd& query,
                                       const std::vector<Eigen::VectorXd>& db,
                                       double alpha,
                                       double similarity_floor = 0.0) {
  const int k = static_cast<int>(db.size());
  if (k < 1) throw std::invalid_argument("weights_csi: empty neighbor set");
  if (alpha < 0.0) throw std::invalid_argument("weights_csi: alpha < 0");
  if (std::abs(query.norm() - 1.0) > 1e-6)
    throw NotNormalizedError("weights_csi: query descriptor not unit-norm");
  for (const auto& d : db) {
    if (d.size() != query.size())
      throw DimensionMismatchError("weights_csi: descriptor size mismatch");
    if (std::abs(d.norm() - 1.0) > 1e-6)
      throw NotNormalizedError(
          "weights_csi: database descriptor not unit-norm");
  }
  if (alpha == 0.0) return weights_ewb(k);
  std::vector<double> s(k);
  for (int i = 0; i < k; ++i)
    s[i] = std::max(query.dot(db[i]), similarity_floor);
  return detail::csi_from_similarities(s, alpha);
}

struct ApproximatedPose {
  Pose pose;
  int effective_k = 0;            // how many neighbors actually contributed
  std::vector<double> weights;    // aligned with the top effective_k items
};

/// Blends the poses of the top-k ranked database images. When fewer than k
/// images are ranked, all available ones are used and effective_k records
/// that. For k = 1 every method returns the top-1 pose unchanged.
inline ApproximatedPose approximate_pose(
    const Eigen::VectorXd& query_descriptor, const Ranking& ranking,
    const DescriptorSet& db_descriptors,
    const std::map<std::string, Pose>& db_poses,
    const ApproximationConfig& config) {
  if (config.k < 1) throw std::invalid_argument("approximate_pose: k < 1");
  if (ranking.items.empty())
    throw std::invalid_argument("approximate_pose: empty ranking");
  const int k =
      std::min<int>(config.k, static_cast<int>(ranking.items.size()));
  std::vector<Pose> poses;
  std::vector<Eigen::VectorXd> descs;
  poses.reserve(k);
  descs.reserve(k);
  for (int i = 0; i < k; ++i) {
    const std::string& id = ranking.items[i].id;
    auto pit = db_poses.find(id);
    if (pit == db_poses.end()) throw MissingPoseError(id);
    poses.push_back(pit->second);
    if (config.method != ApproximationMethod::kEqualWeight)
      descs.push_back(db_descriptors.at(id));
  }
  ApproximatedPose out;
  out.effective_k = k;
  if (k == 1) {
    out.pose = poses[0];
    out.weights = {1.0};
    return out;
  }
  switch (config.method) {
    case ApproximationMethod::kEqualWeight:
      out.weights = weights_ewb(k);
      break;
    case ApproximationMethod::kBarycentric:
      out.weights =
          weights_bdi(query_descriptor, descs, config.bdi_regularization);
      break;
    case ApproximationMethod::kCosineSim:
      out.weights = weights_csi(query_descriptor, descs, config.alpha,
                                config.csi_similarity_floor);
      break;
  }
  out.pose = blend_poses(poses, out.weights);
  return out;
}

}  // namespace locbench
