#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "locbench/errors.hpp"
#include "locbench/geometry.hpp"

namespace locbench {

// ===== Descriptors and ranking =====

struct DescriptorSet {
  int dimension = 0;
  std::map<std::string, Eigen::VectorXd> entries;

  bool contains(const std::string& id) const { return entries.count(id) > 0; }
  const Eigen::VectorXd& at(const std::string& id) const {
    auto it = entries.find(id);
    if (it == entries.end()) throw MissingPoseError(id);
    return it->second;
  }
};

/// L2-normalizes every descriptor. Throws ZeroDescriptorError naming the
/// first offending image (iteration order is by id).
inline DescriptorSet normalize_all(const DescriptorSet& set) {
  DescriptorSet out;
  out.dimension = set.dimension;
  for (const auto& [id, vec] : set.entries) {
    const double n = vec.norm();
    if (n < 1e-12) throw ZeroDescriptorError(id);
    out.entries.emplace(id, vec / n);
  }
  return out;
}

struct RankedItem {
  std::string id;
  double score = 0.0;
};

/// Database images ordered by descending similarity to one query.
struct Ranking {
  std::string query;
  std::vector<RankedItem> items;  // score descending, ties by id ascending

  std::vector<std::string> top_ids(std::size_t k) const {
    std::vector<std::string> out;
    out.reserve(std::min(k, items.size()));
    for (std::size_t i = 0; i < items.size() && i < k; ++i)
      out.push_back(items[i].id);
    return out;
  }
};

/// Exhaustive nearest-neighbor retrieval: scores every database image by
/// cosine similarity (dot product of L2-normalized vectors) and returns the
/// top k. Ties break by lexicographic id so rankings are deterministic.
inline Ranking rank_database(const std::string& query_id,
                             const Eigen::VectorXd& query,
                             const DescriptorSet& database, std::size_t k) {
  if (k < 1) throw std::invalid_argument("rank_database: k must be >= 1");
  if (database.entries.empty()) throw EmptyDatabaseError();
  const double qn = query.norm();
  if (qn < 1e-12) throw ZeroDescriptorError(query_id);
  Ranking out;
  out.query = query_id;
  out.items.reserve(database.entries.size());
  for (const auto& [id, vec] : database.entries) {
    if (vec.size() != query.size())
      throw DimensionMismatchError("descriptor dimension mismatch for '" +
                                   id + "'");
    const double dn = vec.norm();
    if (dn < 1e-12) throw ZeroDescriptorError(id);
    out.items.push_back({id, query.dot(vec) / (qn * dn)});
  }
  std::sort(out.items.begin(), out.items.end(),
            [](const RankedItem& a, const RankedItem& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.id < b.id;
            });
  if (out.items.size() > k) out.items.resize(k);
  return out;
}

// ===== Relevance =====

/// Intersection-over-union of two observed-3D-point id sets. Empty union
/// gives 0.
inline double iou_relevance(const std::set<std::int64_t>& a,
                            const std::set<std::int64_t>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++inter;
      ++ia;
      ++ib;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Pose-proximity relevance: centers within max_dist_m AND viewing
/// directions within max_angle_deg.
inline bool pose_relevance(const Pose& a, const Pose& b,
                           double max_dist_m = 25.0,
                           double max_angle_deg = 45.0) {
  if (position_error(a, b) > max_dist_m) return false;
  const double cosang =
      std::clamp(a.view_direction().dot(b.view_direction()), -1.0, 1.0);
  return rad_to_deg(std::acos(cosang)) <= max_angle_deg;
}

/// Ground-truth relevance between a query and database images, backed either
/// by observed 3D point sets (relevant when IoU is strictly positive) or by
/// pose proximity.
class RelevanceOracle {
 public:
  enum class Mode { kIoU, kPoseProximity };

  static RelevanceOracle from_observations(
      std::map<std::string, std::set<std::int64_t>> observations) {
    RelevanceOracle o;
    o.mode_ = Mode::kIoU;
    o.observations_ = std::move(observations);
    return o;
  }

  static RelevanceOracle from_poses(std::map<std::string, Pose> poses,
                                    double max_dist_m = 25.0,
                                    double max_angle_deg = 45.0) {
    RelevanceOracle o;
    o.mode_ = Mode::kPoseProximity;
    o.poses_ = std::move(poses);
    o.max_dist_ = max_dist_m;
    o.max_angle_ = max_angle_deg;
    return o;
  }

  Mode mode() const { return mode_; }

  /// True when ground truth exists for the image (a nonempty observation
  /// set, resp. a known pose).
  bool has_ground_truth(const std::string& id) const {
    if (mode_ == Mode::kIoU) {
      auto it = observations_.find(id);
      return it != observations_.end() && !it->second.empty();
    }
    return poses_.count(id) > 0;
  }

  bool relevant(const std::string& query, const std::string& db) const {
    if (mode_ == Mode::kIoU) {
      auto iq = observations_.find(query);
      auto id = observations_.find(db);
      if (iq == observations_.end() || id == observations_.end()) return false;
      return iou_relevance(iq->second, id->second) > 0.0;
    }
    auto pq = poses_.find(query);
    auto pd = poses_.find(db);
    if (pq == poses_.end() || pd == poses_.end()) return false;
    return pose_relevance(pq->second, pd->second, max_dist_, max_angle_);
  }

 private:
  Mode mode_ = Mode::kIoU;
  std::map<std::string, std::set<std::int64_t>> observations_;
  std::map<std::string, Pose> poses_;
  double max_dist_ = 25.0;
  double max_angle_ = 45.0;
};

// ===== Metrics =====

struct MetricValue {
  double value = 0.0;
  /// Set when fewer than k items were available and the metric was computed
  /// over what was there.
  bool truncated = false;
};

/// Fraction of the top k ranked items that are relevant to the query.
inline MetricValue precision_at_k(const Ranking& ranking,
                                  const RelevanceOracle& oracle,
                                  std::size_t k) {
  if (k < 1) throw std::invalid_argument("precision_at_k: k must be >= 1");
  const std::size_t avail = std::min(k, ranking.items.size());
  MetricValue out;
  out.truncated = avail < k;
  if (avail == 0) return out;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < avail; ++i)
    if (oracle.relevant(ranking.query, ranking.items[i].id)) ++hits;
  out.value = static_cast<double>(hits) / static_cast<double>(avail);
  return out;
}

/// 1 when any of the top k items is relevant, else 0.
inline int recall_at_k(const Ranking& ranking, const RelevanceOracle& oracle,
                       std::size_t k) {
  if (k < 1) throw std::invalid_argument("recall_at_k: k must be >= 1");
  for (std::size_t i = 0; i < ranking.items.size() && i < k; ++i)
    if (oracle.relevant(ranking.query, ranking.items[i].id)) return 1;
  return 0;
}

struct RecallSummary {
  double mean = 0.0;   // over defined queries only
  int defined = 0;     // queries with at least one relevant database image
  int undefined = 0;   // queries with none (excluded from the mean)
};

/// Mean R@k over queries for which ground truth defines at least one
/// relevant database image; the rest are tallied as undefined, not counted
/// as misses.
inline RecallSummary mean_recall_at_k(const std::vector<Ranking>& rankings,
                                      const RelevanceOracle& oracle,
                                      std::size_t k,
                                      const std::vector<std::string>& db_ids) {
  RecallSummary out;
  double sum = 0.0;
  for (const Ranking& r : rankings) {
    bool any_relevant = false;
    if (oracle.has_ground_truth(r.query)) {
      for (const std::string& db : db_ids) {
        if (oracle.relevant(r.query, db)) {
          any_relevant = true;
          break;
        }
      }
    }
    if (!any_relevant) {
      ++out.undefined;
      continue;
    }
    ++out.defined;
    sum += recall_at_k(r, oracle, k);
  }
  if (out.defined > 0) out.mean = sum / out.defined;
  return out;
}

}  // namespace locbench
