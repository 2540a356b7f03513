// locbench: generate synthetic scenes, rank database images against queries,
// build maps, and benchmark retrieval-driven localization.
//
// Exit codes: 0 success, 2 configuration / usage error, 3 data error.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "locbench/bench.hpp"
#include "locbench/data_io.hpp"
#include "locbench/errors.hpp"
#include "locbench/geometry.hpp"
#include "locbench/synthetic.hpp"

namespace {

using namespace locbench;
namespace fs = std::filesystem;

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

KGrid parse_kgrid(const std::string& s) {
  KGrid g;
  g.ks.clear();
  for (const std::string& tok : split_csv(s)) {
    try {
      g.ks.push_back(static_cast<int>(detail::parse_int(tok, "--k-grid", 0)));
    } catch (const locbench::Error&) {
      throw ConfigError("bad k grid entry '" + tok + "'");
    }
  }
  g.validate();
  return g;
}

ThresholdTriple parse_thresholds(const std::string& s) {
  const std::vector<std::string> toks = split_csv(s);
  if (toks.size() != 6)
    throw ConfigError(
        "thresholds need 6 comma-separated values: "
        "low_m,low_deg,medium_m,medium_deg,high_m,high_deg");
  double v[6];
  for (int i = 0; i < 6; ++i) {
    try {
      v[i] = detail::parse_double(toks[i], "--thresholds", 0);
    } catch (const locbench::Error&) {
      throw ConfigError("bad threshold '" + toks[i] + "'");
    }
  }
  ThresholdTriple t;
  t.low_m = v[0];
  t.low_deg = v[1];
  t.medium_m = v[2];
  t.medium_deg = v[3];
  t.high_m = v[4];
  t.high_deg = v[5];
  t.validate();
  return t;
}

std::vector<ApproximationMethod> parse_methods(const std::string& s) {
  std::vector<ApproximationMethod> out;
  for (const std::string& tok : split_csv(s)) {
    if (tok == "ewb")
      out.push_back(ApproximationMethod::kEqualWeight);
    else if (tok == "bdi")
      out.push_back(ApproximationMethod::kBarycentric);
    else if (tok == "csi")
      out.push_back(ApproximationMethod::kCosineSim);
    else
      throw ConfigError("unknown method '" + tok +
                        "' (expected ewb, bdi or csi)");
  }
  return out;
}

// ----- shared benchmark flags -----

struct BenchFlags {
  std::string data_dir;
  std::string out_dir;
  std::string k_grid = "1,2,5,10,20,50";
  std::string thresholds = "5,10,0.5,5,0.25,2";
  std::string methods = "ewb,bdi,csi";
  double alpha = 8.0;
  double ransac_threshold = 8.0;
  double ransac_confidence = 0.9999;
  int ransac_max_iterations = 10000;
  int min_inliers = 12;
  double min_tri_angle = 1.0;
  double relevance_distance = 25.0;
  double relevance_angle = 45.0;
  std::uint64_t seed = 0;
  int jobs = 1;
  bool emit_plot_data = false;
};

void add_bench_flags(CLI::App* sub, BenchFlags& f, bool with_methods,
                     bool with_ransac) {
  sub->add_option("--data", f.data_dir, "dataset directory")->required();
  sub->add_option("--out", f.out_dir, "report output directory")->required();
  sub->add_option("--k-grid", f.k_grid,
                  "comma-separated neighborhood sizes (default 1,2,5,10,20,50)");
  sub->add_option(
      "--thresholds", f.thresholds,
      "low_m,low_deg,medium_m,medium_deg,high_m,high_deg accuracy bands");
  if (with_methods) {
    sub->add_option("--method", f.methods,
                    "comma-separated approximation methods: ewb,bdi,csi");
    sub->add_option("--alpha", f.alpha,
                    "similarity sharpening exponent for csi (0 = ewb)");
  }
  if (with_ransac) {
    sub->add_option("--ransac-threshold", f.ransac_threshold,
                    "inlier reprojection threshold in pixels");
    sub->add_option("--ransac-confidence", f.ransac_confidence,
                    "early-exit confidence");
    sub->add_option("--ransac-max-iterations", f.ransac_max_iterations,
                    "iteration cap");
    sub->add_option("--min-inliers", f.min_inliers,
                    "minimum inlier count for an accepted pose");
    sub->add_option("--min-tri-angle", f.min_tri_angle,
                    "minimum triangulation ray angle in degrees");
  }
  sub->add_option("--relevance-distance", f.relevance_distance,
                  "pose-proximity relevance: max camera distance in meters");
  sub->add_option("--relevance-angle", f.relevance_angle,
                  "pose-proximity relevance: max view angle in degrees");
  sub->add_option("--seed", f.seed, "random seed for the robust estimators");
  sub->add_option("--jobs", f.jobs,
                  "worker threads (output is identical for any value)");
  sub->add_flag("--emit-plot-data", f.emit_plot_data,
                "also write per-row pose errors to errors.csv");
}

BenchmarkConfig to_config(const BenchFlags& f, bool t1, bool t2a, bool t2b) {
  BenchmarkConfig cfg;
  cfg.k_grid = parse_kgrid(f.k_grid);
  cfg.thresholds = parse_thresholds(f.thresholds);
  cfg.methods = parse_methods(f.methods);
  cfg.csi_alpha = f.alpha;
  cfg.task1 = t1;
  cfg.task2a = t2a;
  cfg.task2b = t2b;
  cfg.ransac.inlier_threshold_px = f.ransac_threshold;
  cfg.ransac.confidence = f.ransac_confidence;
  cfg.ransac.max_iterations = f.ransac_max_iterations;
  cfg.ransac.min_inliers = f.min_inliers;
  cfg.min_tri_angle_deg = f.min_tri_angle;
  cfg.relevance_distance_m = f.relevance_distance;
  cfg.relevance_angle_deg = f.relevance_angle;
  cfg.seed = f.seed;
  cfg.jobs = f.jobs;
  return cfg;
}

void print_table(const BenchmarkReport& rep) {
  std::cout << std::left << std::setw(12) << "method" << std::right
            << std::setw(6) << "k" << std::setw(10) << "success"
            << std::setw(10) << "low%" << std::setw(10) << "medium%"
            << std::setw(10) << "high%" << "\n";
  std::cout << std::fixed << std::setprecision(1);
  for (const auto& [key, cell] : rep.table) {
    std::cout << std::left << std::setw(12) << key.first << std::right
              << std::setw(6) << key.second << std::setw(6) << cell.success
              << "/" << std::left << std::setw(3) << cell.total << std::right
              << std::setw(10) << detail::pct(cell.low, cell.total)
              << std::setw(10) << detail::pct(cell.medium, cell.total)
              << std::setw(10) << detail::pct(cell.high, cell.total) << "\n";
  }
  auto print_retrieval = [](const char* name,
                            const std::map<int, RetrievalPoint>& pts) {
    if (pts.empty()) return;
    std::cout << "retrieval (" << name << " relevance):";
    for (const auto& [k, pt] : pts)
      std::cout << "  R@" << k << "=" << std::setprecision(3)
                << pt.recall.mean;
    std::cout << "\n";
  };
  print_retrieval("co-observation", rep.retrieval_iou);
  print_retrieval("pose", rep.retrieval_pose);
  std::cout.unsetf(std::ios::fixed);
  std::cout << std::setprecision(6);
}

int run_bench(const BenchFlags& f, bool t1, bool t2a, bool t2b) {
  const Dataset ds = load_dataset(f.data_dir);
  const BenchmarkConfig cfg = to_config(f, t1, t2a, t2b);
  const BenchmarkReport rep = run_benchmark(ds, cfg);
  write_report(f.out_dir, rep, cfg, f.emit_plot_data);
  std::cout << "benchmarked " << rep.num_queries << " queries against "
            << rep.num_database << " database images\n";
  print_table(rep);
  std::cout << "report written to " << f.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "locbench: benchmark image retrieval for camera-pose estimation"};
  app.require_subcommand(1);

  std::function<int()> action;

  // ----- synth -----
  auto spec = std::make_shared<SceneSpec>();
  std::string synth_out;
  std::string pattern = "ring";
  std::string descriptor_mode = "sensitive";
  {
    CLI::App* sub =
        app.add_subcommand("synth", "generate a synthetic dataset");
    sub->add_option("--out", synth_out, "output dataset directory")
        ->required();
    sub->add_option("--seed", spec->seed, "scene seed (default 42)");
    sub->add_option("--pattern", pattern,
                    "database camera layout: ring, grid or corridor")
        ->check(CLI::IsMember({"ring", "grid", "corridor"}));
    sub->add_option("--points", spec->n_points, "number of scene points");
    sub->add_option("--db", spec->n_db_cameras, "number of database images");
    sub->add_option("--queries", spec->n_queries, "number of query images");
    sub->add_option("--extent", spec->extent, "scene diameter in meters");
    sub->add_option("--pixel-noise", spec->pixel_noise_sigma,
                    "keypoint noise sigma in pixels");
    sub->add_option("--dropout", spec->match_dropout,
                    "chance a visible point goes undetected");
    sub->add_option("--outlier-rate", spec->outlier_rate,
                    "chance a true match gets corrupted");
    sub->add_option("--fov", spec->fov_deg,
                    "horizontal field of view in degrees");
    sub->add_option("--jitter", spec->orientation_jitter_deg,
                    "camera orientation jitter sigma in degrees");
    sub->add_option("--descriptor", descriptor_mode,
                    "global descriptor model: sensitive (pose-aware) or "
                    "robust (place-cell)")
        ->check(CLI::IsMember({"sensitive", "robust"}));
    sub->add_option("--descriptor-dim", spec->descriptor.dimension,
                    "descriptor dimension");
    sub->add_option("--descriptor-noise", spec->descriptor.noise_sigma,
                    "descriptor noise sigma");
    sub->add_option("--cell-size", spec->descriptor.cell_size,
                    "robust-descriptor place cell size (0 = scene extent)");
    sub->callback([&] {
      action = [&]() -> int {
        if (pattern == "grid")
          spec->pattern = CameraPattern::kGrid;
        else if (pattern == "corridor")
          spec->pattern = CameraPattern::kCorridor;
        spec->descriptor.mode = descriptor_mode == "robust"
                                    ? DescriptorMode::kPoseRobust
                                    : DescriptorMode::kPoseSensitive;
        const Dataset ds = generate_scene(*spec);
        save_dataset(synth_out, ds);
        std::cout << "wrote " << ds.cameras.size() << " images ("
                  << ds.queries.size() << " queries), " << ds.points3d.size()
                  << " points to " << synth_out << "\n";
        return 0;
      };
    });
  }

  // ----- rank -----
  std::string rank_data, rank_out;
  int rank_k = 0;
  {
    CLI::App* sub = app.add_subcommand(
        "rank", "rank database images against every query by descriptor "
                "similarity");
    sub->add_option("--data", rank_data, "dataset directory")->required();
    sub->add_option("--out", rank_out, "output rankings CSV")->required();
    sub->add_option("--k", rank_k, "keep only the top k (0 = full ranking)");
    sub->callback([&] {
      action = [&]() -> int {
        const Dataset ds = load_dataset(rank_data);
        const std::vector<std::string> db_ids = ds.database_ids();
        if (db_ids.empty()) throw ConfigError("database is empty");
        DescriptorSet db;
        db.dimension = ds.descriptors.dimension;
        for (const auto& id : db_ids) {
          auto it = ds.descriptors.entries.find(id);
          if (it == ds.descriptors.entries.end())
            throw ConfigError("missing global descriptor for " + id);
          db.entries.emplace(id, it->second);
        }
        const std::size_t k =
            rank_k > 0 ? static_cast<std::size_t>(rank_k) : db_ids.size();
        std::vector<Ranking> rankings;
        for (const auto& q : ds.query_ids()) {
          auto it = ds.descriptors.entries.find(q);
          if (it == ds.descriptors.entries.end())
            throw ConfigError("missing global descriptor for " + q);
          rankings.push_back(rank_database(q, it->second, db, k));
        }
        save_rankings(rank_out, rankings);
        std::cout << "wrote " << rankings.size() << " rankings to "
                  << rank_out << "\n";
        return 0;
      };
    });
  }

  // ----- pairs -----
  std::string pairs_data, pairs_out;
  double pairs_min_radius = 0.5, pairs_near = 0.1, pairs_far = 50.0;
  int pairs_max_per_image = 0;
  {
    CLI::App* sub = app.add_subcommand(
        "pairs",
        "list database image pairs whose viewing frusta overlap (candidates "
        "for matching)");
    sub->add_option("--data", pairs_data, "dataset directory")->required();
    sub->add_option("--out", pairs_out, "output CSV (image_a,image_b,radius)")
        ->required();
    sub->add_option("--min-radius", pairs_min_radius,
                    "minimum radius of a sphere inside both frusta, meters");
    sub->add_option("--near", pairs_near, "frustum near plane in meters");
    sub->add_option("--far", pairs_far, "frustum far plane in meters");
    sub->add_option("--max-per-image", pairs_max_per_image,
                    "keep only the top N pairs per image (0 = unlimited)");
    sub->callback([&] {
      action = [&]() -> int {
        const Dataset ds = load_dataset(pairs_data);
        std::map<std::string, Frustum> frusta;
        for (const auto& id : ds.database_ids()) {
          const auto pit = ds.poses.find(id);
          if (pit == ds.poses.end()) throw MissingPoseError(id);
          frusta.emplace(id, Frustum(pit->second, ds.cameras.at(id),
                                     pairs_near, pairs_far));
        }
        std::optional<int> cap;
        if (pairs_max_per_image > 0) cap = pairs_max_per_image;
        const std::vector<FrustumPair> pairs =
            select_overlapping_pairs(frusta, pairs_min_radius, cap);
        std::ofstream out(pairs_out);
        if (!out) throw IoError("cannot write " + pairs_out);
        out << "# image_a,image_b,radius\n";
        for (const FrustumPair& p : pairs)
          out << p.image_a << ',' << p.image_b << ','
              << detail::format_double(p.radius) << "\n";
        std::cout << "wrote " << pairs.size() << " pairs to " << pairs_out
                  << "\n";
        return 0;
      };
    });
  }

  // ----- map -----
  std::string map_data, map_out;
  double map_min_angle = 1.0;
  {
    CLI::App* sub = app.add_subcommand(
        "map", "triangulate a global 3D map from database matches and write "
               "the dataset with point tables attached");
    sub->add_option("--data", map_data, "dataset directory")->required();
    sub->add_option("--out", map_out, "output dataset directory")->required();
    sub->add_option("--min-angle", map_min_angle,
                    "minimum triangulation ray angle in degrees");
    sub->callback([&] {
      action = [&]() -> int {
        Dataset ds = load_dataset(map_data);
        if (ds.matches.num_pairs() == 0)
          throw ConfigError("dataset has no matches to triangulate from");
        std::map<std::string, Pose> db_poses;
        std::map<std::string, CameraIntrinsics> db_cams;
        std::map<std::string, Keypoints> db_keypoints;
        for (const auto& id : ds.database_ids()) {
          const auto pit = ds.poses.find(id);
          if (pit == ds.poses.end()) throw MissingPoseError(id);
          db_poses.emplace(id, pit->second);
          db_cams.emplace(id, ds.cameras.at(id));
          const auto kit = ds.keypoints.find(id);
          if (kit != ds.keypoints.end()) db_keypoints.emplace(id, kit->second);
        }
        MatchSet db_matches;
        for (const auto& [pair, ms] : ds.matches.all())
          if (db_poses.count(pair.first) && db_poses.count(pair.second))
            db_matches.add(pair.first, pair.second, ms);
        const PointMap map = build_global_map(db_poses, db_cams, db_keypoints,
                                              db_matches, map_min_angle);
        ds.points3d.clear();
        ds.observations.clear();
        for (const auto& [pid, pt] : map.points) {
          ds.points3d.emplace(pid, pt.position);
          ds.observations.emplace(pid, pt.observations);
        }
        save_dataset(map_out, ds);
        std::cout << "triangulated " << map.points.size() << " points into "
                  << map_out << "\n";
        return 0;
      };
    });
  }

  // ----- benchmark tasks -----
  BenchFlags bf;
  {
    CLI::App* sub = app.add_subcommand(
        "task1", "pose approximation from retrieved neighbors (ewb/bdi/csi)");
    add_bench_flags(sub, bf, /*with_methods=*/true, /*with_ransac=*/false);
    sub->callback([&] { action = [&] { return run_bench(bf, true, false, false); }; });
  }
  {
    CLI::App* sub = app.add_subcommand(
        "task2a",
        "localization against a local map built on the fly from the top-k "
        "retrieved images");
    add_bench_flags(sub, bf, /*with_methods=*/false, /*with_ransac=*/true);
    sub->callback([&] { action = [&] { return run_bench(bf, false, true, false); }; });
  }
  {
    CLI::App* sub = app.add_subcommand(
        "task2b", "localization against the global map through the top-k "
                  "retrieved images");
    add_bench_flags(sub, bf, /*with_methods=*/false, /*with_ransac=*/true);
    sub->callback([&] { action = [&] { return run_bench(bf, false, false, true); }; });
  }
  {
    CLI::App* sub = app.add_subcommand(
        "report", "run every task over the k grid and write the full report");
    add_bench_flags(sub, bf, /*with_methods=*/true, /*with_ransac=*/true);
    sub->callback([&] { action = [&] { return run_bench(bf, true, true, true); }; });
  }

  // ----- eval-retrieval -----
  {
    CLI::App* sub = app.add_subcommand(
        "eval-retrieval",
        "retrieval quality only: R@k and precision@k under co-observation "
        "and pose-proximity relevance");
    add_bench_flags(sub, bf, /*with_methods=*/false, /*with_ransac=*/false);
    sub->callback([&] {
      action = [&]() -> int {
        const Dataset ds = load_dataset(bf.data_dir);
        const BenchmarkConfig cfg = to_config(bf, false, false, false);
        const BenchmarkReport rep = run_benchmark(ds, cfg);
        fs::create_directories(bf.out_dir);
        save_rankings(fs::path(bf.out_dir) / "rankings.csv", rep.rankings);
        std::ofstream out(fs::path(bf.out_dir) / "retrieval.csv");
        if (!out)
          throw IoError("cannot write " + bf.out_dir + "/retrieval.csv");
        out << "# oracle,k,mean_recall,defined,undefined,mean_precision\n";
        auto dump = [&](const char* name,
                        const std::map<int, RetrievalPoint>& pts) {
          for (const auto& [k, pt] : pts)
            out << name << ',' << k << ','
                << detail::format_double(pt.recall.mean) << ','
                << pt.recall.defined << ',' << pt.recall.undefined << ','
                << detail::format_double(pt.mean_precision) << "\n";
        };
        dump("iou", rep.retrieval_iou);
        dump("pose", rep.retrieval_pose);
        print_table(rep);
        std::cout << "retrieval metrics written to " << bf.out_dir << "\n";
        return 0;
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    return action ? action() : 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const locbench::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
