#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Geometry>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "locbench/data_io.hpp"
#include "locbench/retrieval.hpp"
#include "locbench/synthetic.hpp"

using namespace locbench;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SceneSpec clean_spec() {
  SceneSpec spec;
  spec.seed = 7;
  spec.n_points = 120;
  spec.n_db_cameras = 8;
  spec.n_queries = 3;
  spec.pixel_noise_sigma = 0.0;
  spec.match_dropout = 0.0;
  spec.outlier_rate = 0.0;
  spec.orientation_jitter_deg = 0.0;
  return spec;
}

// reverse map: (image, kp) -> point id, from the observation table
std::map<std::pair<std::string, int>, std::int64_t> truth_lookup(
    const Dataset& ds) {
  std::map<std::pair<std::string, int>, std::int64_t> out;
  for (const auto& [pid, obs] : ds.observations)
    for (const auto& o : obs) out.emplace(o, pid);
  return out;
}

}  // namespace

TEST_CASE("generate_scene is deterministic in the seed") {
  SceneSpec spec = clean_spec();
  spec.pixel_noise_sigma = 0.7;
  spec.match_dropout = 0.2;
  spec.outlier_rate = 0.1;
  spec.orientation_jitter_deg = 2.5;
  const Dataset a = generate_scene(spec);
  const Dataset b = generate_scene(spec);

  REQUIRE(a.poses.size() == b.poses.size());
  for (const auto& [id, pose] : a.poses) {
    CHECK(pose.position == b.poses.at(id).position);
    CHECK(pose.orientation.coeffs() == b.poses.at(id).orientation.coeffs());
  }
  for (const auto& [id, kps] : a.keypoints) {
    const auto& other = b.keypoints.at(id);
    REQUIRE(kps.size() == other.size());
    for (std::size_t i = 0; i < kps.size(); ++i) CHECK(kps[i] == other[i]);
  }
  for (const auto& [id, d] : a.descriptors.entries)
    CHECK(d == b.descriptors.entries.at(id));
  CHECK(a.matches.all() == b.matches.all());
  CHECK(a.observations == b.observations);

  // byte-level: identical files on disk
  const fs::path dir = fs::temp_directory_path() / "locbench_synth_det";
  fs::remove_all(dir);
  save_dataset(dir / "a", a);
  save_dataset(dir / "b", b);
  for (const std::string name :
       {"sensors.txt", "trajectories.txt", "queries.txt", "matches.txt",
        "points3d.txt", "observations.txt", "global_descriptors.bin"})
    CHECK(read_file(dir / "a" / name) == read_file(dir / "b" / name));
  fs::remove_all(dir);

  // a different seed changes the scene
  spec.seed = 8;
  const Dataset c = generate_scene(spec);
  CHECK(c.keypoints.at("db000") != a.keypoints.at("db000"));
}

TEST_CASE("noiseless scene: keypoints are exact projections") {
  const Dataset ds = generate_scene(clean_spec());
  const auto lookup = truth_lookup(ds);
  int checked = 0;
  for (const auto& [id, kps] : ds.keypoints) {
    const Pose& pose = ds.poses.at(id);
    const CameraIntrinsics& cam = ds.cameras.at(id);
    for (std::size_t kp = 0; kp < kps.size(); ++kp) {
      const auto it = lookup.find({id, static_cast<int>(kp)});
      REQUIRE(it != lookup.end());  // every keypoint belongs to a point
      const auto pix = project(ds.points3d.at(it->second), pose, cam);
      REQUIRE(pix.has_value());
      CHECK((*pix - kps[kp]).norm() < 1e-12);
      ++checked;
    }
  }
  CHECK(checked > 200);
}

TEST_CASE("noiseless scene: observations equal true visibility") {
  const Dataset ds = generate_scene(clean_spec());
  const auto lookup = truth_lookup(ds);
  for (const auto& [id, pose] : ds.poses) {
    const CameraIntrinsics& cam = ds.cameras.at(id);
    std::set<std::int64_t> observed;
    for (const auto& [pid, obs] : ds.observations)
      for (const auto& o : obs)
        if (o.first == id) observed.insert(pid);
    std::set<std::int64_t> visible;
    for (const auto& [pid, p] : ds.points3d) {
      const auto pix = project(p, pose, cam);
      if (pix && inside_image(*pix, cam)) visible.insert(pid);
    }
    CHECK(observed == visible);
  }
}

TEST_CASE("noiseless scene: all matches are true matches") {
  const Dataset ds = generate_scene(clean_spec());
  const auto lookup = truth_lookup(ds);
  int total = 0;
  for (const auto& [pair, ms] : ds.matches.all()) {
    CHECK_FALSE((ds.is_query(pair.first) && ds.is_query(pair.second)));
    for (const auto& [ka, kb] : ms) {
      REQUIRE(lookup.count({pair.first, ka}));
      REQUIRE(lookup.count({pair.second, kb}));
      CHECK(lookup.at({pair.first, ka}) == lookup.at({pair.second, kb}));
      ++total;
    }
  }
  CHECK(total > 100);
}

TEST_CASE("noiseless scene: triangulating the tracks recovers the points") {
  const Dataset ds = generate_scene(clean_spec());
  // map built from scratch out of database images only
  std::map<std::string, Pose> db_poses;
  std::map<std::string, CameraIntrinsics> db_cams;
  std::map<std::string, Keypoints> db_kps;
  MatchSet db_matches;
  for (const auto& id : ds.database_ids()) {
    db_poses.emplace(id, ds.poses.at(id));
    db_cams.emplace(id, ds.cameras.at(id));
    db_kps.emplace(id, ds.keypoints.at(id));
  }
  for (const auto& [pair, ms] : ds.matches.all())
    if (db_poses.count(pair.first) && db_poses.count(pair.second))
      db_matches.add(pair.first, pair.second, ms);
  const PointMap map =
      build_global_map(db_poses, db_cams, db_kps, db_matches);
  REQUIRE(map.points.size() > 50);
  const auto lookup = truth_lookup(ds);
  for (const auto& [pid, pt] : map.points) {
    const auto truth = lookup.at(pt.observations.front());
    CHECK((pt.position - ds.points3d.at(truth)).norm() < 1e-6);
  }
}

TEST_CASE("corridor queries sit exactly midway between their neighbours") {
  SceneSpec spec = clean_spec();
  spec.pattern = CameraPattern::kCorridor;
  spec.n_db_cameras = 6;
  spec.n_queries = 5;
  const Dataset ds = generate_scene(spec);
  for (int i = 0; i < 5; ++i) {
    const Pose& q = ds.poses.at("q00" + std::to_string(i));
    const Pose& a = ds.poses.at("db00" + std::to_string(i));
    const Pose& b = ds.poses.at("db00" + std::to_string(i + 1));
    CHECK((q.position - 0.5 * (a.position + b.position)).norm() < 1e-12);
    CHECK(q.orientation.coeffs() == a.orientation.coeffs());
    CHECK(a.orientation.coeffs() == b.orientation.coeffs());
  }
  // consecutive cameras are more than 1 m apart (k=1 cannot reach the
  // medium threshold from a midpoint)
  const double spacing = (ds.poses.at("db001").position -
                          ds.poses.at("db000").position)
                             .norm();
  CHECK(spacing > 1.0);
}

TEST_CASE("pose-sensitive descriptors rank nearby cameras higher") {
  SceneSpec spec = clean_spec();
  spec.n_db_cameras = 12;
  spec.descriptor.noise_sigma = 0.0;
  const Dataset ds = generate_scene(spec);
  const DescriptorSet normalized = normalize_all(ds.descriptors);
  // db000's nearest ring neighbours beat the opposite side
  const auto& q = normalized.at("db000");
  const double near = q.dot(normalized.at("db001"));
  const double far = q.dot(normalized.at("db006"));
  CHECK(near > far + 0.1);
}

TEST_CASE("pose-robust descriptors collide for co-located views") {
  SceneSpec spec = clean_spec();
  spec.descriptor.mode = DescriptorMode::kPoseRobust;
  spec.descriptor.noise_sigma = 0.0;
  const Dataset ds = generate_scene(spec);
  // on a centre-looking ring every camera sees the same cloud: the mean
  // observed point lands in the same cell for (nearly) all images
  std::map<std::string, Eigen::VectorXd> codes = ds.descriptors.entries;
  int collisions = 0;
  int pairs = 0;
  const auto ids = ds.database_ids();
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      ++pairs;
      if ((codes.at(ids[i]) - codes.at(ids[j])).norm() < 1e-12) ++collisions;
    }
  CHECK(collisions > pairs / 2);
  // the code carries no pose signal: identical for distant ring positions
  CHECK((codes.at("db000") - codes.at("db004")).norm() < 1e-12);
}

TEST_CASE("match dropout removes detections but keeps consistency") {
  SceneSpec spec = clean_spec();
  const Dataset full = generate_scene(spec);
  spec.match_dropout = 0.5;
  const Dataset dropped = generate_scene(spec);
  std::size_t full_obs = 0, dropped_obs = 0;
  for (const auto& [pid, obs] : full.observations) full_obs += obs.size();
  for (const auto& [pid, obs] : dropped.observations)
    dropped_obs += obs.size();
  CHECK(dropped_obs < full_obs * 7 / 10);
  CHECK(dropped_obs > full_obs * 3 / 10);
  // every match endpoint is still a recorded observation
  const auto lookup = truth_lookup(dropped);
  for (const auto& [pair, ms] : dropped.matches.all())
    for (const auto& [ka, kb] : ms) {
      REQUIRE(lookup.count({pair.first, ka}));
      REQUIRE(lookup.count({pair.second, kb}));
    }
}

TEST_CASE("outlier rate corrupts roughly the requested match fraction") {
  SceneSpec spec = clean_spec();
  spec.outlier_rate = 0.3;
  const Dataset ds = generate_scene(spec);
  const auto lookup = truth_lookup(ds);
  int wrong = 0, total = 0;
  for (const auto& [pair, ms] : ds.matches.all())
    for (const auto& [ka, kb] : ms) {
      ++total;
      if (lookup.at({pair.first, ka}) != lookup.at({pair.second, kb}))
        ++wrong;
    }
  REQUIRE(total > 500);
  const double rate = static_cast<double>(wrong) / total;
  CHECK(rate > 0.15);
  CHECK(rate < 0.40);
}

TEST_CASE("geometry is independent of the descriptor model") {
  SceneSpec spec = clean_spec();
  spec.descriptor.mode = DescriptorMode::kPoseSensitive;
  const Dataset a = generate_scene(spec);
  spec.descriptor.mode = DescriptorMode::kPoseRobust;
  const Dataset b = generate_scene(spec);
  for (const auto& [id, pose] : a.poses)
    CHECK(pose.position == b.poses.at(id).position);
  for (const auto& [id, kps] : a.keypoints) {
    REQUIRE(kps.size() == b.keypoints.at(id).size());
    for (std::size_t i = 0; i < kps.size(); ++i)
      CHECK(kps[i] == b.keypoints.at(id)[i]);
  }
  CHECK(a.matches.all() == b.matches.all());
  CHECK(a.descriptors.entries.at("db000") !=
        b.descriptors.entries.at("db000"));
}

TEST_CASE("generated datasets pass the loader validation") {
  SceneSpec spec = clean_spec();
  spec.pixel_noise_sigma = 0.5;
  spec.match_dropout = 0.1;
  spec.outlier_rate = 0.05;
  spec.orientation_jitter_deg = 2.0;
  const Dataset ds = generate_scene(spec);
  const fs::path dir = fs::temp_directory_path() / "locbench_synth_valid";
  fs::remove_all(dir);
  save_dataset(dir, ds);
  LoadReport rep;
  const Dataset loaded = load_dataset(dir, &rep);
  CHECK(rep.images == 11);
  CHECK(rep.queries == 3);
  CHECK(rep.renormalized_quaternions == 0);
  CHECK(loaded.matches.all().size() == ds.matches.all().size());
  fs::remove_all(dir);
}

TEST_CASE("reference scene has the documented shape") {
  const SceneSpec spec = reference_scene();
  CHECK(spec.seed == 42);
  CHECK(spec.n_points == 200);
  CHECK(spec.extent == 20.0);
  CHECK(spec.n_db_cameras == 30);
  CHECK(spec.n_queries == 10);
  CHECK(spec.pattern == CameraPattern::kRing);
  CHECK(spec.pixel_noise_sigma == 0.5);
  CHECK(spec.descriptor.mode == DescriptorMode::kPoseSensitive);
  CHECK(spec.descriptor.dimension == 16);
  const Dataset ds = generate_scene(spec);
  CHECK(ds.database_ids().size() == 30);
  CHECK(ds.query_ids().size() == 10);
  CHECK(ds.points3d.size() == 200);
  CHECK(ds.descriptors.entries.size() == 40);
  for (const auto& id : ds.query_ids()) {
    CHECK(ds.poses.count(id) == 1);  // ground truth available
    CHECK(ds.keypoints.at(id).size() >= 4);
  }
}

TEST_CASE("spec validation rejects bad configurations") {
  SceneSpec spec = clean_spec();
  spec.extent = 0.0;
  CHECK_THROWS_AS(generate_scene(spec), ConfigError);
  spec = clean_spec();
  spec.match_dropout = 1.0;
  CHECK_THROWS_AS(generate_scene(spec), ConfigError);
  spec = clean_spec();
  spec.n_points = 0;
  CHECK_THROWS_AS(generate_scene(spec), ConfigError);
  spec = clean_spec();
  spec.fov_deg = 5.0;
  CHECK_THROWS_AS(generate_scene(spec), ConfigError);
  spec = clean_spec();
  spec.pattern = CameraPattern::kCorridor;
  spec.n_db_cameras = 4;
  spec.n_queries = 4;  // only 3 midpoints exist
  CHECK_THROWS_AS(generate_scene(spec), ConfigError);
  spec = clean_spec();
  spec.descriptor.dimension = 5;  // pose-sensitive needs >= 6
  CHECK_THROWS_AS(generate_scene(spec), ConfigError);
}
