#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "locbench/errors.hpp"
#include "locbench/geometry.hpp"
#include "locbench/localization.hpp"
#include "locbench/retrieval.hpp"

namespace locbench {

// ===== on-disk layout =====
//
// <dataset>/sensors.txt             image_id,width,height,fx,fy,cx,cy
// <dataset>/trajectories.txt        image_id,qw,qx,qy,qz,tx,ty,tz
// <dataset>/queries.txt             image_id
// <dataset>/global_descriptors.bin  LBGD header + float32 rows
// <dataset>/global_descriptors.idx  image_id per line, aligned with rows
// <dataset>/keypoints/<image>.bin   LBKP header + float32 (x, y) pairs
// <dataset>/matches.txt             image_a,image_b,kp_a,kp_b
// <dataset>/points3d.txt            point_id,x,y,z
// <dataset>/observations.txt        point_id,image_id,keypoint_id
//
// Text files are UTF-8 with '#' comment lines; doubles carry 17 significant
// digits so text round trips are bit-exact. Binary files are little-endian.
// (t in trajectories is the camera center, and queries keep their ground
// truth there.)

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r'))
    --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(trim(std::string_view(line).substr(start)));
      break;
    }
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

inline double parse_double(const std::string& s, const std::string& file,
                           int line) {
  if (s.empty()) throw ParseError(file, line, "empty numeric field");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size())
    throw ParseError(file, line, "bad number: '" + s + "'");
  return v;
}

inline std::int64_t parse_int(const std::string& s, const std::string& file,
                              int line) {
  if (s.empty()) throw ParseError(file, line, "empty integer field");
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size())
    throw ParseError(file, line, "bad integer: '" + s + "'");
  return v;
}

/// Image ids double as file names for the keypoint store, so the charset is
/// restricted to [A-Za-z0-9._-].
inline bool valid_image_id(const std::string& id) {
  if (id.empty()) return false;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '.' || c == '_' ||
                    c == '-';
    if (!ok) return false;
  }
  return true;
}

inline std::string require_image_id(const std::string& s,
                                    const std::string& file, int line) {
  if (!valid_image_id(s))
    throw ParseError(file, line, "bad image id: '" + s + "'");
  return s;
}

/// Calls fn(line_number, fields) for every non-comment, non-blank line.
template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw MissingFileError(path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    fn(line_no, split_fields(t));
  }
}

inline void write_binary(std::ofstream& out, const void* data,
                         std::size_t bytes) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}

inline void read_binary(std::ifstream& in, void* data, std::size_t bytes,
                        const std::string& file) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes)
    throw ParseError(file, 0, "truncated file");
}

}  // namespace detail

// ===== descriptor store (LBGD) =====

inline void save_descriptors(const std::filesystem::path& bin_path,
                             const std::filesystem::path& idx_path,
                             const DescriptorSet& set) {
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("cannot write " + bin_path.string());
  std::ofstream idx(idx_path);
  if (!idx) throw IoError("cannot write " + idx_path.string());
  const std::uint32_t version = 1;
  const std::uint32_t dim = static_cast<std::uint32_t>(set.dimension);
  const std::uint64_t count = set.entries.size();
  bin.write("LBGD", 4);
  detail::write_binary(bin, &version, 4);
  detail::write_binary(bin, &dim, 4);
  detail::write_binary(bin, &count, 8);
  std::vector<float> row(set.dimension);
  for (const auto& [id, vec] : set.entries) {
    if (!detail::valid_image_id(id))
      throw std::invalid_argument("bad image id: '" + id + "'");
    if (vec.size() != set.dimension)
      throw DimensionMismatchError("descriptor dimension mismatch for " + id);
    for (int i = 0; i < vec.size(); ++i) row[i] = static_cast<float>(vec[i]);
    detail::write_binary(bin, row.data(), 4 * row.size());
    idx << id << "\n";
  }
}

inline DescriptorSet load_descriptors(const std::filesystem::path& bin_path,
                                      const std::filesystem::path& idx_path) {
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw MissingFileError(bin_path.string());
  const std::string file = bin_path.filename().string();
  char magic[4];
  detail::read_binary(bin, magic, 4, file);
  if (std::string_view(magic, 4) != "LBGD")
    throw ParseError(file, 0, "bad magic");
  std::uint32_t version = 0, dim = 0;
  std::uint64_t count = 0;
  detail::read_binary(bin, &version, 4, file);
  if (version != 1)
    throw ParseError(file, 0,
                     "unsupported version " + std::to_string(version));
  detail::read_binary(bin, &dim, 4, file);
  detail::read_binary(bin, &count, 8, file);
  if (dim == 0) throw ParseError(file, 0, "zero descriptor dimension");

  std::vector<std::string> ids;
  {
    std::ifstream idx(idx_path);
    if (!idx) throw MissingFileError(idx_path.string());
    const std::string idx_name = idx_path.filename().string();
    std::string line;
    int line_no = 0;
    std::set<std::string> seen;
    while (std::getline(idx, line)) {
      ++line_no;
      const std::string t = detail::trim(line);
      if (t.empty() || t[0] == '#') continue;
      detail::require_image_id(t, idx_name, line_no);
      if (!seen.insert(t).second)
        throw ParseError(idx_name, line_no, "duplicate image id: " + t);
      ids.push_back(t);
    }
  }
  if (ids.size() != count)
    throw ParseError(file, 0,
                     "row count " + std::to_string(count) +
                         " does not match index entries " +
                         std::to_string(ids.size()));
  DescriptorSet set;
  set.dimension = static_cast<int>(dim);
  std::vector<float> row(dim);
  for (const std::string& id : ids) {
    detail::read_binary(bin, row.data(), 4 * row.size(), file);
    Eigen::VectorXd v(dim);
    for (std::uint32_t i = 0; i < dim; ++i) v[i] = row[i];
    set.entries.emplace(id, std::move(v));
  }
  return set;
}

// ===== keypoint store (LBKP) =====

inline void save_keypoints_file(const std::filesystem::path& path,
                                const Keypoints& kps) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const std::uint32_t version = 1;
  const std::uint64_t count = kps.size();
  out.write("LBKP", 4);
  detail::write_binary(out, &version, 4);
  detail::write_binary(out, &count, 8);
  for (const auto& p : kps) {
    const float xy[2] = {static_cast<float>(p.x()),
                         static_cast<float>(p.y())};
    detail::write_binary(out, xy, 8);
  }
}

inline Keypoints load_keypoints_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError(path.string());
  const std::string file = path.filename().string();
  char magic[4];
  detail::read_binary(in, magic, 4, file);
  if (std::string_view(magic, 4) != "LBKP")
    throw ParseError(file, 0, "bad magic");
  std::uint32_t version = 0;
  std::uint64_t count = 0;
  detail::read_binary(in, &version, 4, file);
  if (version != 1)
    throw ParseError(file, 0,
                     "unsupported version " + std::to_string(version));
  detail::read_binary(in, &count, 8, file);
  Keypoints kps;
  kps.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    float xy[2];
    detail::read_binary(in, xy, 8, file);
    kps.emplace_back(xy[0], xy[1]);
  }
  return kps;
}

// ===== dataset =====

struct Dataset {
  std::map<std::string, CameraIntrinsics> cameras;
  std::map<std::string, Pose> poses;  // ground truth, queries included
  std::set<std::string> queries;
  DescriptorSet descriptors;
  std::map<std::string, Keypoints> keypoints;
  MatchSet matches;
  std::map<std::int64_t, Eigen::Vector3d> points3d;
  std::map<std::int64_t, std::vector<std::pair<std::string, int>>>
      observations;

  bool is_query(const std::string& id) const { return queries.count(id) > 0; }

  std::vector<std::string> database_ids() const {
    std::vector<std::string> out;
    for (const auto& [id, cam] : cameras)
      if (!queries.count(id)) out.push_back(id);
    return out;
  }

  std::vector<std::string> query_ids() const {
    return {queries.begin(), queries.end()};
  }
};

struct LoadReport {
  int images = 0;
  int poses = 0;
  int queries = 0;
  int descriptors = 0;
  int keypoint_images = 0;
  int match_pairs = 0;
  int matches = 0;
  int points = 0;
  int observations = 0;
  int renormalized_quaternions = 0;
};

inline void save_dataset(const std::filesystem::path& dir,
                         const Dataset& ds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "sensors.txt");
    if (!out) throw IoError("cannot write " + (dir / "sensors.txt").string());
    out << "# image_id,width,height,fx,fy,cx,cy\n";
    for (const auto& [id, cam] : ds.cameras) {
      if (!detail::valid_image_id(id))
        throw std::invalid_argument("bad image id: '" + id + "'");
      out << id << ',' << cam.width << ',' << cam.height << ','
          << detail::format_double(cam.fx) << ','
          << detail::format_double(cam.fy) << ','
          << detail::format_double(cam.cx) << ','
          << detail::format_double(cam.cy) << "\n";
    }
  }
  {
    std::ofstream out(dir / "trajectories.txt");
    out << "# image_id,qw,qx,qy,qz,tx,ty,tz\n";
    for (const auto& [id, pose] : ds.poses) {
      const auto& q = pose.orientation;
      out << id << ',' << detail::format_double(q.w()) << ','
          << detail::format_double(q.x()) << ','
          << detail::format_double(q.y()) << ','
          << detail::format_double(q.z()) << ','
          << detail::format_double(pose.position.x()) << ','
          << detail::format_double(pose.position.y()) << ','
          << detail::format_double(pose.position.z()) << "\n";
    }
  }
  {
    std::ofstream out(dir / "queries.txt");
    out << "# image_id\n";
    for (const auto& id : ds.queries) out << id << "\n";
  }
  if (!ds.descriptors.entries.empty())
    save_descriptors(dir / "global_descriptors.bin",
                     dir / "global_descriptors.idx", ds.descriptors);
  if (!ds.keypoints.empty()) {
    fs::create_directories(dir / "keypoints");
    for (const auto& [id, kps] : ds.keypoints) {
      if (!detail::valid_image_id(id))
        throw std::invalid_argument("bad image id: '" + id + "'");
      save_keypoints_file(dir / "keypoints" / (id + ".bin"), kps);
    }
  }
  if (ds.matches.num_pairs() > 0) {
    std::ofstream out(dir / "matches.txt");
    out << "# image_a,image_b,kp_a,kp_b\n";
    for (const auto& [pair, ms] : ds.matches.all())
      for (const auto& [a, b] : ms)
        out << pair.first << ',' << pair.second << ',' << a << ',' << b
            << "\n";
  }
  if (!ds.points3d.empty()) {
    std::ofstream out(dir / "points3d.txt");
    out << "# point_id,x,y,z\n";
    for (const auto& [pid, p] : ds.points3d)
      out << pid << ',' << detail::format_double(p.x()) << ','
          << detail::format_double(p.y()) << ','
          << detail::format_double(p.z()) << "\n";
  }
  if (!ds.observations.empty()) {
    std::ofstream out(dir / "observations.txt");
    out << "# point_id,image_id,keypoint_id\n";
    for (const auto& [pid, obs] : ds.observations) {
      auto sorted = obs;
      std::sort(sorted.begin(), sorted.end());
      for (const auto& [image, kp] : sorted)
        out << pid << ',' << image << ',' << kp << "\n";
    }
  }
}

inline Dataset load_dataset(const std::filesystem::path& dir,
                            LoadReport* report = nullptr) {
  namespace fs = std::filesystem;
  Dataset ds;
  LoadReport rep;

  detail::for_each_record(
      dir / "sensors.txt",
      [&](int line, const std::vector<std::string>& f) {
        if (f.size() != 7)
          throw ParseError("sensors.txt", line, "expected 7 fields");
        const std::string id =
            detail::require_image_id(f[0], "sensors.txt", line);
        CameraIntrinsics cam;
        cam.width = static_cast<int>(detail::parse_int(f[1], "sensors.txt", line));
        cam.height =
            static_cast<int>(detail::parse_int(f[2], "sensors.txt", line));
        cam.fx = detail::parse_double(f[3], "sensors.txt", line);
        cam.fy = detail::parse_double(f[4], "sensors.txt", line);
        cam.cx = detail::parse_double(f[5], "sensors.txt", line);
        cam.cy = detail::parse_double(f[6], "sensors.txt", line);
        if (!cam.valid())
          throw ParseError("sensors.txt", line, "invalid intrinsics for " + id);
        if (!ds.cameras.emplace(id, cam).second)
          throw ParseError("sensors.txt", line, "duplicate image id: " + id);
        ++rep.images;
      });

  detail::for_each_record(
      dir / "trajectories.txt",
      [&](int line, const std::vector<std::string>& f) {
        if (f.size() != 8)
          throw ParseError("trajectories.txt", line, "expected 8 fields");
        const std::string id =
            detail::require_image_id(f[0], "trajectories.txt", line);
        if (!ds.cameras.count(id))
          throw CrossRefError("trajectories.txt:" + std::to_string(line) +
                              ": pose for unknown image " + id);
        double v[7];
        for (int i = 0; i < 7; ++i)
          v[i] = detail::parse_double(f[i + 1], "trajectories.txt", line);
        Eigen::Quaterniond q(v[0], v[1], v[2], v[3]);
        const double norm = q.norm();
        if (std::abs(norm - 1.0) > 1e-3)
          throw NonUnitQuaternionError(id + " (norm " +
                                       detail::format_double(norm) + ")");
        if (std::abs(norm - 1.0) > 5e-10) ++rep.renormalized_quaternions;
        const Pose pose(Eigen::Vector3d(v[4], v[5], v[6]), q);
        if (!ds.poses.emplace(id, pose).second)
          throw ParseError("trajectories.txt", line,
                           "duplicate pose for " + id);
        ++rep.poses;
      });

  detail::for_each_record(
      dir / "queries.txt", [&](int line, const std::vector<std::string>& f) {
        if (f.size() != 1)
          throw ParseError("queries.txt", line, "expected 1 field");
        const std::string id =
            detail::require_image_id(f[0], "queries.txt", line);
        if (!ds.cameras.count(id))
          throw CrossRefError("queries.txt:" + std::to_string(line) +
                              ": unknown image " + id);
        if (!ds.queries.insert(id).second)
          throw ParseError("queries.txt", line, "duplicate query: " + id);
        ++rep.queries;
      });

  if (fs::exists(dir / "global_descriptors.bin")) {
    ds.descriptors = load_descriptors(dir / "global_descriptors.bin",
                                      dir / "global_descriptors.idx");
    for (const auto& [id, vec] : ds.descriptors.entries)
      if (!ds.cameras.count(id))
        throw CrossRefError("global_descriptors.idx: unknown image " + id);
    rep.descriptors = static_cast<int>(ds.descriptors.entries.size());
  }

  if (fs::exists(dir / "keypoints")) {
    for (const auto& [id, cam] : ds.cameras) {
      const fs::path p = dir / "keypoints" / (id + ".bin");
      if (!fs::exists(p)) continue;
      ds.keypoints.emplace(id, load_keypoints_file(p));
      ++rep.keypoint_images;
    }
  }

  if (fs::exists(dir / "matches.txt")) {
    // parsed into per-pair buckets first so one-to-one violations carry line
    // numbers
    std::map<MatchSet::PairKey, MatchSet::Matches> buckets;
    std::map<MatchSet::PairKey, std::pair<std::set<int>, std::set<int>>> used;
    detail::for_each_record(
        dir / "matches.txt",
        [&](int line, const std::vector<std::string>& f) {
          if (f.size() != 4)
            throw ParseError("matches.txt", line, "expected 4 fields");
          std::string a = detail::require_image_id(f[0], "matches.txt", line);
          std::string b = detail::require_image_id(f[1], "matches.txt", line);
          int ka = static_cast<int>(detail::parse_int(f[2], "matches.txt", line));
          int kb = static_cast<int>(detail::parse_int(f[3], "matches.txt", line));
          if (a == b)
            throw ParseError("matches.txt", line, "self-match for " + a);
          if (a > b) {
            std::swap(a, b);
            std::swap(ka, kb);
          }
          for (const auto& [id, kp] : {std::pair{a, ka}, std::pair{b, kb}}) {
            if (!ds.cameras.count(id))
              throw CrossRefError("matches.txt:" + std::to_string(line) +
                                  ": unknown image " + id);
            const auto it = ds.keypoints.find(id);
            if (kp < 0 || it == ds.keypoints.end() ||
                kp >= static_cast<int>(it->second.size()))
              throw CrossRefError("matches.txt:" + std::to_string(line) +
                                  ": keypoint " + std::to_string(kp) +
                                  " out of range for " + id);
          }
          auto& [la, lb] = used[{a, b}];
          if (!la.insert(ka).second || !lb.insert(kb).second)
            throw ParseError("matches.txt", line,
                             "keypoint matched twice in pair " + a + " / " +
                                 b);
          buckets[{a, b}].emplace_back(ka, kb);
          ++rep.matches;
        });
    for (auto& [key, ms] : buckets)
      ds.matches.add(key.first, key.second, std::move(ms));
    rep.match_pairs = static_cast<int>(ds.matches.num_pairs());
  }

  const bool has_points = fs::exists(dir / "points3d.txt");
  const bool has_obs = fs::exists(dir / "observations.txt");
  if (has_points != has_obs)
    throw CrossRefError(
        "points3d.txt and observations.txt must be present together");
  if (has_points) {
    detail::for_each_record(
        dir / "points3d.txt",
        [&](int line, const std::vector<std::string>& f) {
          if (f.size() != 4)
            throw ParseError("points3d.txt", line, "expected 4 fields");
          const std::int64_t pid =
              detail::parse_int(f[0], "points3d.txt", line);
          Eigen::Vector3d p(detail::parse_double(f[1], "points3d.txt", line),
                            detail::parse_double(f[2], "points3d.txt", line),
                            detail::parse_double(f[3], "points3d.txt", line));
          if (!p.allFinite())
            throw ParseError("points3d.txt", line, "non-finite point");
          if (!ds.points3d.emplace(pid, p).second)
            throw ParseError("points3d.txt", line,
                             "duplicate point id " + std::to_string(pid));
          ++rep.points;
        });
    std::set<std::pair<std::string, int>> taken;
    detail::for_each_record(
        dir / "observations.txt",
        [&](int line, const std::vector<std::string>& f) {
          if (f.size() != 3)
            throw ParseError("observations.txt", line, "expected 3 fields");
          const std::int64_t pid =
              detail::parse_int(f[0], "observations.txt", line);
          const std::string id =
              detail::require_image_id(f[1], "observations.txt", line);
          const int kp = static_cast<int>(
              detail::parse_int(f[2], "observations.txt", line));
          if (!ds.points3d.count(pid))
            throw CrossRefError("observations.txt:" + std::to_string(line) +
                                ": unknown point " + std::to_string(pid));
          if (!ds.cameras.count(id))
            throw CrossRefError("observations.txt:" + std::to_string(line) +
                                ": unknown image " + id);
          const auto it = ds.keypoints.find(id);
          if (kp < 0 || it == ds.keypoints.end() ||
              kp >= static_cast<int>(it->second.size()))
            throw CrossRefError("observations.txt:" + std::to_string(line) +
                                ": keypoint " + std::to_string(kp) +
                                " out of range for " + id);
          if (!taken.insert({id, kp}).second)
            throw ParseError("observations.txt", line,
                             "keypoint observed by several points: " + id +
                                 "#" + std::to_string(kp));
          ds.observations[pid].emplace_back(id, kp);
          ++rep.observations;
        });
    for (auto& [pid, obs] : ds.observations) {
      std::sort(obs.begin(), obs.end());
      std::set<std::string> images;
      for (const auto& [image, kp] : obs)
        if (!images.insert(image).second)
          throw CrossRefError("observations.txt: point " +
                              std::to_string(pid) + " observed twice in " +
                              image);
    }
  }

  if (report) *report = rep;
  return ds;
}

/// Prebuilt map view of the dataset's points3d/observations tables.
inline PointMap point_map_from_dataset(const Dataset& ds) {
  PointMap map;
  for (const auto& [pid, p] : ds.points3d) {
    PointMap::Point pt;
    pt.position = p;
    auto it = ds.observations.find(pid);
    if (it != ds.observations.end()) pt.observations = it->second;
    std::sort(pt.observations.begin(), pt.observations.end());
    map.insert(pid, pt);
  }
  return map;
}

// ===== benchmark result rows =====

struct ResultRow {
  std::string query;
  std::string method;  // "ewb", "bdi", "csi", "local_sfm", "global_map"
  int k = 0;
  int effective_k = 0;
  std::string outcome;  // "success" or a failure tag
  std::optional<Pose> pose;
  std::optional<int> num_inliers;
  std::optional<int> num_matches;
};

inline void save_results(const std::filesystem::path& path,
                         const std::vector<ResultRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# query,method,k,effective_k,outcome,qw,qx,qy,qz,tx,ty,tz,"
         "num_inliers,num_matches\n";
  for (const auto& r : rows) {
    out << r.query << ',' << r.method << ',' << r.k << ',' << r.effective_k
        << ',' << r.outcome << ',';
    if (r.pose) {
      const auto& q = r.pose->orientation;
      out << detail::format_double(q.w()) << ','
          << detail::format_double(q.x()) << ','
          << detail::format_double(q.y()) << ','
          << detail::format_double(q.z()) << ','
          << detail::format_double(r.pose->position.x()) << ','
          << detail::format_double(r.pose->position.y()) << ','
          << detail::format_double(r.pose->position.z());
    } else {
      out << ",,,,,,";
    }
    out << ',';
    if (r.num_inliers) out << *r.num_inliers;
    out << ',';
    if (r.num_matches) out << *r.num_matches;
    out << "\n";
  }
}

inline std::vector<ResultRow> load_results(
    const std::filesystem::path& path) {
  std::vector<ResultRow> rows;
  const std::string file = path.filename().string();
  detail::for_each_record(path, [&](int line,
                                    const std::vector<std::string>& f) {
    if (f.size() != 14) throw ParseError(file, line, "expected 14 fields");
    ResultRow r;
    r.query = detail::require_image_id(f[0], file, line);
    r.method = f[1];
    r.k = static_cast<int>(detail::parse_int(f[2], file, line));
    r.effective_k = static_cast<int>(detail::parse_int(f[3], file, line));
    r.outcome = f[4];
    const bool any_pose = !f[5].empty();
    for (int i = 5; i < 12; ++i)
      if (f[i].empty() != !any_pose)
        throw ParseError(file, line, "partial pose fields");
    if (any_pose) {
      const double qw = detail::parse_double(f[5], file, line);
      const double qx = detail::parse_double(f[6], file, line);
      const double qy = detail::parse_double(f[7], file, line);
      const double qz = detail::parse_double(f[8], file, line);
      const Eigen::Vector3d t(detail::parse_double(f[9], file, line),
                              detail::parse_double(f[10], file, line),
                              detail::parse_double(f[11], file, line));
      r.pose = Pose(t, Eigen::Quaterniond(qw, qx, qy, qz));
    }
    if (!f[12].empty())
      r.num_inliers = static_cast<int>(detail::parse_int(f[12], file, line));
    if (!f[13].empty())
      r.num_matches = static_cast<int>(detail::parse_int(f[13], file, line));
    rows.push_back(std::move(r));
  });
  return rows;
}

// ===== rankings =====

inline void save_rankings(const std::filesystem::path& path,
                          const std::vector<Ranking>& rankings) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# query,rank,db_image,score\n";
  for (const auto& r : rankings)
    for (std::size_t i = 0; i < r.items.size(); ++i)
      out << r.query << ',' << (i + 1) << ',' << r.items[i].id << ','
          << detail::format_double(r.items[i].score) << "\n";
}

inline std::vector<Ranking> load_rankings(const std::filesystem::path& path) {
  std::vector<Ranking> rankings;
  const std::string file = path.filename().string();
  detail::for_each_record(
      path, [&](int line, const std::vector<std::string>& f) {
        if (f.size() != 4) throw ParseError(file, line, "expected 4 fields");
        const std::string query = detail::require_image_id(f[0], file, line);
        const int rank = static_cast<int>(detail::parse_int(f[1], file, line));
        const std::string db = detail::require_image_id(f[2], file, line);
        const double score = detail::parse_double(f[3], file, line);
        if (rankings.empty() || rankings.back().query != query) {
          for (const auto& r : rankings)
            if (r.query == query)
              throw ParseError(file, line,
                               "rankings for " + query + " not contiguous");
          rankings.push_back({query, {}});
        }
        if (rank != static_cast<int>(rankings.back().items.size()) + 1)
          throw ParseError(file, line,
                           "rank " + std::to_string(rank) +
                               " out of order for " + query);
        rankings.back().items.push_back({db, score});
      });
  return rankings;
}

}  // namespace locbench
