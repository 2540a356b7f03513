#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "locbench/approximation.hpp"
#include "locbench/data_io.hpp"
#include "locbench/errors.hpp"
#include "locbench/geometry.hpp"
#include "locbench/localization.hpp"
#include "locbench/retrieval.hpp"
#include "locbench/rng.hpp"

namespace locbench {

// ===== accuracy bands =====

/// Three nested localization accuracy bands: an estimate inside the high
/// band is also inside medium and low.
struct ThresholdTriple {
  double low_m = 5.0;
  double low_deg = 10.0;
  double medium_m = 0.5;
  double medium_deg = 5.0;
  double high_m = 0.25;
  double high_deg = 2.0;

  void validate() const {
    const double v[6] = {low_m, low_deg, medium_m, medium_deg, high_m,
                         high_deg};
    for (double x : v)
      if (!(x > 0.0)) throw ConfigError("thresholds must be positive");
    if (!(high_m <= medium_m && medium_m <= low_m))
      throw ConfigError("position thresholds must nest: high <= medium <= low");
    if (!(high_deg <= medium_deg && medium_deg <= low_deg))
      throw ConfigError("rotation thresholds must nest: high <= medium <= low");
  }
};

/// Strict inequality on both axes: exactly-on-threshold does not count.
inline bool localized_within(const Pose& estimate, const Pose& truth,
                             double max_m, double max_deg) {
  return position_error(estimate, truth) < max_m &&
         rotation_error_deg(estimate, truth) < max_deg;
}

// ===== neighborhood sizes =====

struct KGrid {
  std::vector<int> ks{1, 2, 5, 10, 20, 50};

  void validate() const {
    if (ks.empty()) throw ConfigError("k grid is empty");
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (ks[i] < 1) throw ConfigError("k values must be >= 1");
      if (i > 0 && ks[i] <= ks[i - 1])
        throw ConfigError("k grid must be strictly increasing");
    }
  }

  /// Every k capped at the database size, duplicates collapsed.
  KGrid clamped(int n_db) const {
    KGrid out;
    out.ks.clear();
    for (int k : ks) {
      const int c = std::min(k, n_db);
      if (out.ks.empty() || out.ks.back() != c) out.ks.push_back(c);
    }
    return out;
  }
};

// ===== configuration =====

struct BenchmarkConfig {
  KGrid k_grid;
  ThresholdTriple thresholds;
  std::vector<ApproximationMethod> methods{ApproximationMethod::kEqualWeight,
                                           ApproximationMethod::kBarycentric,
                                           ApproximationMethod::kCosineSim};
  double csi_alpha = 8.0;
  bool task1 = true;   // pose approximation from retrieved neighbors
  bool task2a = true;  // localization against an on-the-fly local map
  bool task2b = true;  // localization against the global map
  RansacParams ransac;
  double min_tri_angle_deg = 1.0;
  double relevance_distance_m = 25.0;  // pose-proximity relevance gate
  double relevance_angle_deg = 45.0;
  std::uint64_t seed = 0;
  int jobs = 1;
};

// ===== report =====

struct AggregateCell {
  int total = 0;
  int success = 0;  // rows with outcome "success"
  int low = 0;      // successes inside each accuracy band
  int medium = 0;
  int high = 0;
};

struct RetrievalPoint {
  RecallSummary recall;
  double mean_precision = 0.0;
};

struct BenchmarkReport {
  std::vector<Ranking> rankings;  // one full database ranking per query
  std::vector<ResultRow> rows;
  /// Per successful row with ground truth: (position error m, rotation
  /// error deg); aligned with rows.
  std::vector<std::optional<std::pair<double, double>>> row_errors;
  std::map<std::pair<std::string, int>, AggregateCell> table;
  std::map<int, RetrievalPoint> retrieval_iou;   // empty without observations
  std::map<int, RetrievalPoint> retrieval_pose;  // empty without poses
  std::vector<int> k_grid_used;
  int num_queries = 0;
  int num_database = 0;
};

// ===== benchmark driver =====

namespace detail {

inline ResultRow to_result_row(const LocalizationResult& r,
                               const std::string& method) {
  ResultRow row;
  row.query = r.query;
  row.method = method;
  row.k = r.k;
  row.effective_k = r.effective_k;
  row.outcome = to_string(r.outcome);
  row.pose = r.pose;
  row.num_inliers = r.num_inliers;
  row.num_matches = r.num_matches;
  return row;
}

}  // namespace detail

/// Runs the configured tasks for every query over the whole k grid.
/// Deterministic for a fixed config: per-query RANSAC streams are derived
/// from (config.seed, query id), queries are processed into preallocated
/// slots, and aggregation walks them in sorted order, so `jobs` only changes
/// the wall time, never a byte of the output.
inline BenchmarkReport run_benchmark(const Dataset& ds,
                                     const BenchmarkConfig& config) {
  config.thresholds.validate();
  config.k_grid.validate();
  if (config.jobs < 1 || config.jobs > 256)
    throw ConfigError("jobs must be in [1, 256]");
  if (!(config.csi_alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  if (config.task1 && config.methods.empty())
    throw ConfigError("task1 requested with no approximation methods");

  const std::vector<std::string> db_ids = ds.database_ids();
  const std::vector<std::string> query_ids = ds.query_ids();
  if (db_ids.empty()) throw ConfigError("database is empty");
  for (const auto& q : query_ids)
    if (!ds.poses.count(q))
      throw MissingGroundTruthError("no ground-truth pose for query " + q);

  // descriptors, split and normalized
  DescriptorSet db_desc;
  db_desc.dimension = ds.descriptors.dimension;
  for (const auto& id : db_ids) {
    auto it = ds.descriptors.entries.find(id);
    if (it == ds.descriptors.entries.end())
      throw ConfigError("missing global descriptor for " + id);
    db_desc.entries.emplace(id, it->second);
  }
  const DescriptorSet db_norm = normalize_all(db_desc);
  std::map<std::string, Eigen::VectorXd> query_norm;
  for (const auto& q : query_ids) {
    auto it = ds.descriptors.entries.find(q);
    if (it == ds.descriptors.entries.end())
      throw ConfigError("missing global descriptor for " + q);
    const double n = it->second.norm();
    if (n < 1e-12) throw ZeroDescriptorError(q);
    query_norm.emplace(q, it->second / n);
  }

  // database-side views for the localization tasks
  std::map<std::string, Pose> db_poses;
  std::map<std::string, CameraIntrinsics> db_cams;
  std::map<std::string, Keypoints> db_keypoints;
  for (const auto& id : db_ids) {
    const auto pit = ds.poses.find(id);
    if (pit != ds.poses.end()) db_poses.emplace(id, pit->second);
    db_cams.emplace(id, ds.cameras.at(id));
    const auto kit = ds.keypoints.find(id);
    if (kit != ds.keypoints.end()) db_keypoints.emplace(id, kit->second);
  }
  if ((config.task2a || config.task2b) && db_poses.size() != db_ids.size())
    throw MissingGroundTruthError("a database image has no pose");

  // global map for task 2b: the dataset's own point tables when present,
  // otherwise triangulated from the database matches
  PointMap global_map;
  if (config.task2b) {
    if (!ds.points3d.empty()) {
      global_map = point_map_from_dataset(ds);
    } else if (ds.matches.num_pairs() > 0) {
      MatchSet db_matches;
      for (const auto& [pair, ms] : ds.matches.all())
        if (db_poses.count(pair.first) && db_poses.count(pair.second))
          db_matches.add(pair.first, pair.second, ms);
      global_map = build_global_map(db_poses, db_cams, db_keypoints,
                                    db_matches, config.min_tri_angle_deg);
    } else {
      throw ConfigError(
          "task2b needs either point tables or matches in the dataset");
    }
  }

  BenchmarkReport rep;
  rep.num_queries = static_cast<int>(query_ids.size());
  rep.num_database = static_cast<int>(db_ids.size());
  rep.k_grid_used = config.k_grid.clamped(rep.num_database).ks;

  // full rankings (cheap, serial, deterministic)
  for (const auto& q : query_ids)
    rep.rankings.push_back(
        rank_database(q, query_norm.at(q), db_norm, db_ids.size()));

  // per-query work into preallocated slots
  std::vector<std::vector<ResultRow>> slots(query_ids.size());
  RansacParams ransac = config.ransac;
  ransac.seed = config.seed;
  auto run_query = [&](std::size_t qi) {
    const std::string& q = query_ids[qi];
    const Ranking& ranking = rep.rankings[qi];
    std::vector<ResultRow>& out = slots[qi];
    if (config.task1) {
      for (int k : rep.k_grid_used) {
        for (ApproximationMethod m : config.methods) {
          ApproximationConfig acfg;
          acfg.method = m;
          acfg.k = k;
          acfg.alpha = config.csi_alpha;
          const ApproximatedPose ap = approximate_pose(
              query_norm.at(q), ranking, db_norm, db_poses, acfg);
          ResultRow row;
          row.query = q;
          row.method = to_string(m);
          row.k = k;
          row.effective_k = ap.effective_k;
          row.outcome = to_string(LocalizationOutcome::kSuccess);
          row.pose = ap.pose;
          out.push_back(std::move(row));
        }
      }
    }
    const Keypoints* qkp = nullptr;
    if (config.task2a || config.task2b) {
      const auto it = ds.keypoints.find(q);
      if (it == ds.keypoints.end())
        throw ConfigError("localization tasks need keypoints for query " + q);
      qkp = &it->second;
    }
    if (config.task2a) {
      for (int k : rep.k_grid_used) {
        if (k < 2) {
          // with a single retrieved image no pair can co-observe structure
          ResultRow row;
          row.query = q;
          row.method = "local_sfm";
          row.k = k;
          row.effective_k =
              static_cast<int>(std::min<std::size_t>(k, ranking.items.size()));
          row.outcome =
              to_string(LocalizationOutcome::kInsufficientRelevant);
          out.push_back(std::move(row));
          continue;
        }
        const LocalizationResult r = localize_local_sfm(
            q, *qkp, ds.cameras.at(q), ranking, k, db_poses, db_cams,
            db_keypoints, ds.matches, ransac, config.min_tri_angle_deg);
        out.push_back(detail::to_result_row(r, "local_sfm"));
      }
    }
    if (config.task2b) {
      for (int k : rep.k_grid_used) {
        const LocalizationResult r =
            localize_global(q, *qkp, ds.cameras.at(q), ranking, k,
                            ds.matches, global_map, ransac);
        out.push_back(detail::to_result_row(r, "global_map"));
      }
    }
  };

  {
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
      for (;;) {
        const std::size_t qi = next.fetch_add(1);
        if (qi >= query_ids.size()) return;
        try {
          run_query(qi);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    const int jobs =
        std::min<int>(config.jobs, std::max<std::size_t>(query_ids.size(), 1));
    if (jobs <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      pool.reserve(jobs);
      for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);
  }

  // aggregate in slot (= sorted query) order
  for (std::size_t qi = 0; qi < query_ids.size(); ++qi) {
    const Pose& truth = ds.poses.at(query_ids[qi]);
    for (const ResultRow& row : slots[qi]) {
      AggregateCell& cell = rep.table[{row.method, row.k}];
      ++cell.total;
      std::optional<std::pair<double, double>> err;
      if (row.outcome == "success" && row.pose) {
        ++cell.success;
        err = {position_error(*row.pose, truth),
               rotation_error_deg(*row.pose, truth)};
        if (localized_within(*row.pose, truth, config.thresholds.low_m,
                             config.thresholds.low_deg))
          ++cell.low;
        if (localized_within(*row.pose, truth, config.thresholds.medium_m,
                             config.thresholds.medium_deg))
          ++cell.medium;
        if (localized_within(*row.pose, truth, config.thresholds.high_m,
                             config.thresholds.high_deg))
          ++cell.high;
      }
      rep.rows.push_back(row);
      rep.row_errors.push_back(err);
    }
  }

  // retrieval quality along the same k grid
  if (!ds.observations.empty()) {
    std::map<std::string, std::set<std::int64_t>> sets;
    for (const auto& [pid, obs] : ds.observations)
      for (const auto& [image, kp] : obs) sets[image].insert(pid);
    const RelevanceOracle oracle = RelevanceOracle::from_observations(sets);
    for (int k : rep.k_grid_used) {
      RetrievalPoint pt;
      pt.recall = mean_recall_at_k(rep.rankings, oracle, k, db_ids);
      double psum = 0.0;
      for (const auto& r : rep.rankings)
        psum += precision_at_k(r, oracle, k).value;
      pt.mean_precision =
          rep.rankings.empty() ? 0.0 : psum / rep.rankings.size();
      rep.retrieval_iou.emplace(k, pt);
    }
  }
  if (!ds.poses.empty()) {
    const RelevanceOracle oracle = RelevanceOracle::from_poses(
        ds.poses, config.relevance_distance_m, config.relevance_angle_deg);
    for (int k : rep.k_grid_used) {
      RetrievalPoint pt;
      pt.recall = mean_recall_at_k(rep.rankings, oracle, k, db_ids);
      double psum = 0.0;
      for (const auto& r : rep.rankings)
        psum += precision_at_k(r, oracle, k).value;
      pt.mean_precision =
          rep.rankings.empty() ? 0.0 : psum / rep.rankings.size();
      rep.retrieval_pose.emplace(k, pt);
    }
  }

  return rep;
}

// ===== report writers =====

namespace detail {

inline double pct(int count, int total) {
  return total > 0 ? 100.0 * count / total : 0.0;
}

}  // namespace detail

/// Writes results.csv, rankings.csv, scatter.csv and summary.json;
/// errors.csv (per-row pose errors) additionally when emit_plot_data is set.
inline void write_report(const std::filesystem::path& dir,
                         const BenchmarkReport& rep,
                         const BenchmarkConfig& config,
                         bool emit_plot_data = false) {
  std::filesystem::create_directories(dir);
  save_results(dir / "results.csv", rep.rows);
  save_rankings(dir / "rankings.csv", rep.rankings);

  {
    std::ofstream out(dir / "scatter.csv");
    if (!out) throw IoError("cannot write " + (dir / "scatter.csv").string());
    out << "# method,k,recall_iou,recall_pose,precision_iou,precision_pose,"
           "pct_low,pct_medium,pct_high,num_success,num_rows\n";
    for (const auto& [key, cell] : rep.table) {
      const auto& [method, k] = key;
      out << method << ',' << k << ',';
      const auto iit = rep.retrieval_iou.find(k);
      if (iit != rep.retrieval_iou.end())
        out << detail::format_double(iit->second.recall.mean);
      out << ',';
      const auto pit = rep.retrieval_pose.find(k);
      if (pit != rep.retrieval_pose.end())
        out << detail::format_double(pit->second.recall.mean);
      out << ',';
      if (iit != rep.retrieval_iou.end())
        out << detail::format_double(iit->second.mean_precision);
      out << ',';
      if (pit != rep.retrieval_pose.end())
        out << detail::format_double(pit->second.mean_precision);
      out << ',' << detail::format_double(detail::pct(cell.low, cell.total))
          << ','
          << detail::format_double(detail::pct(cell.medium, cell.total))
          << ',' << detail::format_double(detail::pct(cell.high, cell.total))
          << ',' << cell.success << ',' << cell.total << "\n";
    }
  }

  {
    nlohmann::json j;
    j["num_queries"] = rep.num_queries;
    j["num_database"] = rep.num_database;
    j["k_grid"] = rep.k_grid_used;
    j["thresholds"] = {
        {"low", {{"m", config.thresholds.low_m},
                 {"deg", config.thresholds.low_deg}}},
        {"medium", {{"m", config.thresholds.medium_m},
                    {"deg", config.thresholds.medium_deg}}},
        {"high", {{"m", config.thresholds.high_m},
                  {"deg", config.thresholds.high_deg}}}};
    j["seed"] = config.seed;
    nlohmann::json table = nlohmann::json::object();
    for (const auto& [key, cell] : rep.table) {
      const auto& [method, k] = key;
      nlohmann::json c;
      c["total"] = cell.total;
      c["success"] = cell.success;
      c["pct_low"] = detail::pct(cell.low, cell.total);
      c["pct_medium"] = detail::pct(cell.medium, cell.total);
      c["pct_high"] = detail::pct(cell.high, cell.total);
      table[method][std::to_string(k)] = std::move(c);
    }
    j["localization"] = std::move(table);
    auto retrieval_json = [](const std::map<int, RetrievalPoint>& pts) {
      nlohmann::json out = nlohmann::json::object();
      for (const auto& [k, pt] : pts) {
        nlohmann::json c;
        c["mean_recall"] = pt.recall.mean;
        c["defined"] = pt.recall.defined;
        c["undefined"] = pt.recall.undefined;
        c["mean_precision"] = pt.mean_precision;
        out[std::to_string(k)] = std::move(c);
      }
      return out;
    };
    if (!rep.retrieval_iou.empty())
      j["retrieval"]["iou"] = retrieval_json(rep.retrieval_iou);
    if (!rep.retrieval_pose.empty())
      j["retrieval"]["pose"] = retrieval_json(rep.retrieval_pose);
    std::ofstream out(dir / "summary.json");
    if (!out)
      throw IoError("cannot write " + (dir / "summary.json").string());
    out << j.dump(2) << "\n";
  }

  if (emit_plot_data) {
    std::ofstream out(dir / "errors.csv");
    if (!out) throw IoError("cannot write " + (dir / "errors.csv").string());
    out << "# query,method,k,position_error_m,rotation_error_deg\n";
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
      if (!rep.row_errors[i]) continue;
      out << rep.rows[i].query << ',' << rep.rows[i].method << ','
          << rep.rows[i].k << ','
          << detail::format_double(rep.row_errors[i]->first) << ','
          << detail::format_double(rep.row_errors[i]->second) << "\n";
    }
  }
}

}  // namespace locbench
