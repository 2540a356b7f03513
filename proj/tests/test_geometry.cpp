#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Geometry>
#include <cmath>

#include "locbench/geometry.hpp"
#include "locbench/rng.hpp"

using namespace locbench;

namespace {

Eigen::Quaterniond axis_angle(const Eigen::Vector3d& axis, double deg) {
  return Eigen::Quaterniond(
      Eigen::AngleAxisd(deg_to_rad(deg), axis.normalized()));
}

// ----- independent sampling oracle for the inscribed-sphere radius -----
//
// Maximizes min_i(signed distance) over a shrinking grid. The objective is
// concave, so refining around the best grid cell converges to the global
// maximum; the LP under test must agree to high relative accuracy.

struct Aabb {
  Eigen::Vector3d lo, hi;
  bool empty() const { return (hi.array() < lo.array()).any(); }
};

Aabb frustum_aabb(const Frustum& f) {
  Aabb box{Eigen::Vector3d::Constant(1e300),
           Eigen::Vector3d::Constant(-1e300)};
  for (const auto& c : f.corners()) {
    box.lo = box.lo.cwiseMin(c);
    box.hi = box.hi.cwiseMax(c);
  }
  return box;
}

double min_plane_distance(const std::vector<HalfSpace>& planes,
                          const Eigen::Vector3d& x) {
  double d = 1e300;
  for (const auto& h : planes) d = std::min(d, h.signed_distance(x));
  return d;
}

double sampled_overlap_radius(const Frustum& fa, const Frustum& fb,
                              int grid = 24, int levels = 5) {
  const Aabb ba = frustum_aabb(fa);
  const Aabb bb = frustum_aabb(fb);
  Aabb box{ba.lo.cwiseMax(bb.lo), ba.hi.cwiseMin(bb.hi)};
  if (box.empty()) return 0.0;
  std::vector<HalfSpace> planes;
  for (const auto& h : fa.planes()) planes.push_back(h);
  for (const auto& h : fb.planes()) planes.push_back(h);
  Eigen::Vector3d best = 0.5 * (box.lo + box.hi);
  double best_val = min_plane_distance(planes, best);
  for (int level = 0; level < levels; ++level) {
    const Eigen::Vector3d step = (box.hi - box.lo) / grid;
    Eigen::Vector3d level_best = best;
    double level_val = best_val;
    for (int ix = 0; ix <= grid; ++ix)
      for (int iy = 0; iy <= grid; ++iy)
        for (int iz = 0; iz <= grid; ++iz) {
          const Eigen::Vector3d x =
              box.lo + Eigen::Vector3d(ix * step.x(), iy * step.y(),
                                       iz * step.z());
          const double v = min_plane_distance(planes, x);
          if (v > level_val) {
            level_val = v;
            level_best = x;
          }
        }
    best = level_best;
    best_val = level_val;
    box.lo = best - 1.5 * step;
    box.hi = best + 1.5 * step;
  }
  return std::max(best_val, 0.0);
}

CameraIntrinsics vga() {
  CameraIntrinsics c;
  c.width = 640;
  c.height = 480;
  c.fx = c.fy = 554.0;
  c.cx = 320.0;
  c.cy = 240.0;
  return c;
}

}  // namespace

TEST_CASE("quaternion canonical sign") {
  const Eigen::Quaterniond q = axis_angle({0, 0, 1}, 90.0);
  Eigen::Quaterniond neg = q;
  neg.coeffs() = -neg.coeffs();
  const Pose a(Eigen::Vector3d::Zero(), q);
  const Pose b(Eigen::Vector3d::Zero(), neg);
  REQUIRE(a.orientation.w() == Catch::Approx(b.orientation.w()).margin(0));
  REQUIRE(a.orientation.z() == Catch::Approx(b.orientation.z()).margin(0));
  REQUIRE(a.orientation.w() >= 0.0);

  // w == 0: first nonzero component of (x,y,z) must be >= 0
  const Pose c(Eigen::Vector3d::Zero(), Eigen::Quaterniond(0, 0, -1, 0));
  REQUIRE(c.orientation.y() == 1.0);

  REQUIRE_THROWS_AS(Pose(Eigen::Vector3d::Zero(),
                         Eigen::Quaterniond(0, 0, 0, 0)),
                    ZeroNormError);
}

TEST_CASE("pose constructor normalizes") {
  Eigen::Quaterniond q = axis_angle({1, 2, 3}, 17.0);
  q.coeffs() *= 3.7;
  const Pose p(Eigen::Vector3d(1, 2, 3), q);
  REQUIRE(std::abs(p.orientation.norm() - 1.0) < 1e-9);
}

TEST_CASE("quaternion canonicalization is bitwise idempotent") {
  Rng rng(71);
  for (int trial = 0; trial < 500; ++trial) {
    Eigen::Quaterniond q(rng.uniform(-1, 1), rng.uniform(-1, 1),
                         rng.uniform(-1, 1), rng.uniform(-1, 1));
    if (q.coeffs().squaredNorm() < 1e-10) continue;
    q.coeffs() *= std::exp(rng.uniform(-6.0, 6.0));
    const Eigen::Quaterniond once = canonical_quaternion(q);
    const Eigen::Quaterniond twice = canonical_quaternion(once);
    REQUIRE(once.coeffs() == twice.coeffs());
  }
}

TEST_CASE("position error is the center distance") {
  const Pose a(Eigen::Vector3d(1, 2, 3), Eigen::Quaterniond::Identity());
  const Pose b(Eigen::Vector3d(4, 6, 3), Eigen::Quaterniond::Identity());
  REQUIRE(position_error(a, b) == Catch::Approx(5.0).margin(1e-12));
}

TEST_CASE("rotation error on hand-built cases") {
  const Pose id(Eigen::Vector3d::Zero(), Eigen::Quaterniond::Identity());
  // identical poses -> 0
  REQUIRE(rotation_error_deg(id, id) == Catch::Approx(0.0).margin(1e-12));
  // 90 deg about z
  const Pose z90(Eigen::Vector3d::Zero(), axis_angle({0, 0, 1}, 90.0));
  REQUIRE(rotation_error_deg(id, z90) == Catch::Approx(90.0).margin(1e-9));
  REQUIRE(rotation_error_deg(z90, id) == Catch::Approx(90.0).margin(1e-9));
  // 180 deg about x: trace argument hits the -1 clamp
  const Pose x180(Eigen::Vector3d::Zero(), axis_angle({1, 0, 0}, 180.0));
  REQUIRE(rotation_error_deg(id, x180) == Catch::Approx(180.0).margin(1e-9));
  // arbitrary axis, 35.5 deg
  const Pose r(Eigen::Vector3d::Zero(), axis_angle({2, -1, 0.5}, 35.5));
  REQUIRE(rotation_error_deg(id, r) == Catch::Approx(35.5).margin(1e-9));
  // result is symmetric and in [0, 180]
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const Pose pa(Eigen::Vector3d::Zero(),
                  axis_angle({rng.normal(), rng.normal(), rng.normal()},
                             rng.uniform(0.0, 360.0)));
    const Pose pb(Eigen::Vector3d::Zero(),
                  axis_angle({rng.normal(), rng.normal(), rng.normal()},
                             rng.uniform(0.0, 360.0)));
    const double e = rotation_error_deg(pa, pb);
    REQUIRE(e >= 0.0);
    REQUIRE(e <= 180.0);
    REQUIRE(rotation_error_deg(pb, pa) == Catch::Approx(e).margin(1e-9));
  }
}

TEST_CASE("blend of two equal-weight quaternions is the geodesic midpoint") {
  const Eigen::Quaterniond a = Eigen::Quaterniond::Identity();
  const Eigen::Quaterniond b = axis_angle({0, 0, 1}, 90.0);
  const Eigen::Quaterniond mid = blend_quaternions({a, b}, {0.5, 0.5});
  // normalized chord midpoint of two unit quaternions halves the angle
  const double ang =
      rotation_error_deg(Pose(Eigen::Vector3d::Zero(), a),
                         Pose(Eigen::Vector3d::Zero(), mid));
  REQUIRE(ang == Catch::Approx(45.0).margin(1e-9));
}

TEST_CASE("blend is sign-invariant (hemisphere alignment)") {
  const Eigen::Quaterniond a = axis_angle({1, 1, 0}, 30.0);
  Eigen::Quaterniond b = axis_angle({0, 1, 1}, 70.0);
  const Eigen::Quaterniond r1 = blend_quaternions({a, b}, {0.3, 0.7});
  b.coeffs() = -b.coeffs();  // same rotation, flipped representation
  const Eigen::Quaterniond r2 = blend_quaternions({a, b}, {0.3, 0.7});
  REQUIRE((r1.coeffs() - r2.coeffs()).norm() == 0.0);
}

TEST_CASE("blend with all weight on one pose is exact") {
  const Pose a(Eigen::Vector3d(3, -1, 2), axis_angle({1, 4, -2}, 63.0));
  const Pose b(Eigen::Vector3d(-5, 0, 9), axis_angle({0, 1, 0}, 120.0));
  const Pose out = blend_poses({a, b}, {1.0, 0.0});
  REQUIRE(out.position == a.position);
  REQUIRE(out.orientation.coeffs() == a.orientation.coeffs());
}

TEST_CASE("blend of antipodal-after-alignment quaternions throws ZeroNorm") {
  // 180 deg apart: after sign alignment q1 + q2 can still cancel with
  // opposing weights
  const Eigen::Quaterniond a = Eigen::Quaterniond::Identity();
  const Eigen::Quaterniond b = axis_angle({0, 0, 1}, 180.0);  // w = 0
  // equal-weight blend of a 0 deg and a 180 deg rotation: sum = (0.5,0,0,0.5)
  // which is fine; cancellation needs opposite weights on aligned quats
  REQUIRE_NOTHROW(blend_quaternions({a, b}, {0.5, 0.5}));
  REQUIRE_THROWS_AS(blend_quaternions({a, a}, {0.5, -0.5}), ZeroNormError);
}

TEST_CASE("blend_poses validates weights") {
  const Pose a, b;
  REQUIRE_THROWS_AS(blend_poses({a, b}, {0.6, 0.6}), std::invalid_argument);
  REQUIRE_THROWS_AS(blend_poses({a, b}, {0.5}), std::invalid_argument);
}

TEST_CASE("projection and back-projection are consistent") {
  Rng rng(23);
  const CameraIntrinsics cam = vga();
  for (int i = 0; i < 300; ++i) {
    const Pose pose(
        Eigen::Vector3d(rng.uniform(-5, 5), rng.uniform(-5, 5),
                        rng.uniform(-5, 5)),
        axis_angle({rng.normal(), rng.normal(), rng.normal()},
                   rng.uniform(0.0, 360.0)));
    const Eigen::Vector3d dir_cam(rng.uniform(-0.4, 0.4),
                                  rng.uniform(-0.3, 0.3), 1.0);
    const double depth = rng.uniform(0.5, 40.0);
    const Eigen::Vector3d point =
        pose.position + pose.orientation.conjugate() * (dir_cam * depth);
    const auto pix = project(point, pose, cam);
    REQUIRE(pix.has_value());
    const Eigen::Vector3d ray = back_project(*pix, pose, cam);
    const Eigen::Vector3d expected = (point - pose.position).normalized();
    REQUIRE((ray - expected).norm() < 1e-9);
  }
}

TEST_CASE("points behind the camera do not project") {
  const CameraIntrinsics cam = vga();
  const Pose pose;  // at origin looking +z
  REQUIRE_FALSE(project({0, 0, -1}, pose, cam).has_value());
  REQUIRE_FALSE(project({0, 0, 0}, pose, cam).has_value());
  REQUIRE(project({0, 0, 1e-6}, pose, cam).has_value());
}

TEST_CASE("frustum planes have unit inward normals") {
  const Frustum f(look_at_pose({10, 3, 1}, {0, 0, 0}), vga(), 0.1, 50.0);
  const auto planes = f.planes();
  REQUIRE(planes.size() == 6);
  for (const auto& h : planes)
    REQUIRE(h.normal.norm() == Catch::Approx(1.0).margin(1e-12));
  // a point well inside (on the axis, mid-depth) has positive distance to
  // every plane
  const Eigen::Vector3d inside =
      f.pose.position + f.pose.view_direction() * 10.0;
  for (const auto& h : planes) REQUIRE(h.signed_distance(inside) > 0.0);
  // behind the camera: outside
  const Eigen::Vector3d behind =
      f.pose.position - f.pose.view_direction() * 1.0;
  REQUIRE_FALSE(f.contains(behind));
}

TEST_CASE("identical frusta: overlap equals own inscribed sphere") {
  const Frustum f(look_at_pose({0, 0, 0}, {1, 0, 0}), vga(), 0.1, 50.0);
  const double lp = frustum_overlap_radius(f, f);
  const double oracle = sampled_overlap_radius(f, f);
  REQUIRE(lp > 0.0);
  REQUIRE(lp == Catch::Approx(oracle).epsilon(0.01));
}

TEST_CASE("two cameras 5 m apart with parallel axes overlap") {
  const CameraIntrinsics cam = vga();
  const Frustum fa(look_at_pose({0, 0, 0}, {0, 0, 10}), cam, 0.1, 50.0);
  const Frustum fb(look_at_pose({5, 0, 0}, {5, 0, 10}), cam, 0.1, 50.0);
  const double lp = frustum_overlap_radius(fa, fb);
  const double oracle = sampled_overlap_radius(fa, fb);
  REQUIRE(lp > 0.0);
  REQUIRE(lp == Catch::Approx(oracle).epsilon(0.01));
}

TEST_CASE("back-to-back cameras do not overlap") {
  const CameraIntrinsics cam = vga();
  const Frustum fa(look_at_pose({0, 0, 0}, {0, 0, 10}), cam, 0.1, 50.0);
  const Frustum fb(look_at_pose({0, 0, -1}, {0, 0, -10}), cam, 0.1, 50.0);
  REQUIRE(frustum_overlap_radius(fa, fb) == 0.0);
}

TEST_CASE("far-apart cameras do not overlap") {
  const CameraIntrinsics cam = vga();
  const Frustum fa(look_at_pose({0, 0, 0}, {0, 0, 10}), cam, 0.1, 50.0);
  const Frustum fb(look_at_pose({500, 0, 0}, {500, 0, 10}), cam, 0.1, 50.0);
  REQUIRE(frustum_overlap_radius(fa, fb) == 0.0);
}

TEST_CASE("overlap radius symmetric and certified on random pairs") {
  Rng rng(5);
  const CameraIntrinsics cam = vga();
  int positive = 0;
  for (int i = 0; i < 40; ++i) {
    const Eigen::Vector3d ca(rng.uniform(-4, 4), rng.uniform(-4, 4),
                             rng.uniform(-2, 2));
    const Eigen::Vector3d cb = ca + Eigen::Vector3d(rng.uniform(-6, 6),
                                                    rng.uniform(-6, 6),
                                                    rng.uniform(-2, 2));
    const Eigen::Vector3d ta = ca + Eigen::Vector3d(rng.uniform(-5, 5),
                                                    rng.uniform(-5, 5), 12.0);
    const Eigen::Vector3d tb = cb + Eigen::Vector3d(rng.uniform(-5, 5),
                                                    rng.uniform(-5, 5), 12.0);
    const Frustum fa(look_at_pose(ca, ta), cam, 0.1, 50.0);
    const Frustum fb(look_at_pose(cb, tb), cam, 0.1, 50.0);
    const double r_ab = frustum_overlap_radius(fa, fb);
    const double r_ba = frustum_overlap_radius(fb, fa);
    REQUIRE(r_ab == Catch::Approx(r_ba).margin(1e-9));
    if (r_ab > 0.0) {
      ++positive;
      // certificate: the returned radius comes with a center whose distance
      // to all 12 planes is >= radius - 1e-6
      std::vector<HalfSpace> planes;
      for (const auto& h : fa.planes()) planes.push_back(h);
      for (const auto& h : fb.planes()) planes.push_back(h);
      const auto c = chebyshev_center(planes);
      REQUIRE(c.has_value());
      for (const auto& h : planes)
        REQUIRE(h.signed_distance(c->first) >= c->second - 1e-6);
    }
  }
  REQUIRE(positive > 10);  // the sampling ranges make most pairs overlap
}

TEST_CASE("pair selection obeys min radius, ordering and per-image cap") {
  const CameraIntrinsics cam = vga();
  std::map<std::string, Frustum> frusta;
  // four cameras in a row, 4 m apart, all looking the same way: neighbors
  // overlap a lot, far ends less
  for (int i = 0; i < 4; ++i) {
    const Eigen::Vector3d c(4.0 * i, 0, 0);
    frusta["cam" + std::to_string(i)] =
        Frustum(look_at_pose(c, c + Eigen::Vector3d(0, 0, 10)), cam, 0.1,
                50.0);
  }
  const auto pairs = select_overlapping_pairs(frusta, 0.5);
  REQUIRE(!pairs.empty());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    REQUIRE(pairs[i].radius >= 0.5);
    REQUIRE(pairs[i].image_a < pairs[i].image_b);
    if (i > 0) {
      const bool ordered =
          pairs[i - 1].radius > pairs[i].radius ||
          (pairs[i - 1].radius == pairs[i].radius &&
           std::make_pair(pairs[i - 1].image_a, pairs[i - 1].image_b) <
               std::make_pair(pairs[i].image_a, pairs[i].image_b));
      REQUIRE(ordered);
    }
  }
  // cap of 1: every image keeps its single best pair; survivors are pairs
  // kept by at least one endpoint
  const auto capped = select_overlapping_pairs(frusta, 0.0, 1);
  std::map<std::string, int> incident;
  for (const auto& p : capped) {
    incident[p.image_a]++;
    incident[p.image_b]++;
  }
  REQUIRE(capped.size() < pairs.size());
  REQUIRE(!capped.empty());
  // every survivor is rank 0 for at least one endpoint, i.e. it is that
  // image's best pair overall
  const auto all = select_overlapping_pairs(frusta, 0.0);
  for (const auto& p : capped) {
    int rank_a = 0, rank_b = 0;
    for (const auto& q : all) {
      if (q.image_a == p.image_a && q.image_b == p.image_b) break;
      if (q.image_a == p.image_a || q.image_b == p.image_a) ++rank_a;
      if (q.image_a == p.image_b || q.image_b == p.image_b) ++rank_b;
    }
    REQUIRE((rank_a == 0 || rank_b == 0));
  }

  REQUIRE_THROWS_AS(select_overlapping_pairs(frusta, -1.0),
                    std::invalid_argument);
}

TEST_CASE("chebyshev center of an axis-aligned box") {
  // unit cube [0,1]^3 as 6 half-spaces: inscribed sphere radius 0.5
  std::vector<HalfSpace> planes = {
      {{1, 0, 0}, 0.0},  {{-1, 0, 0}, 1.0}, {{0, 1, 0}, 0.0},
      {{0, -1, 0}, 1.0}, {{0, 0, 1}, 0.0},  {{0, 0, -1}, 1.0},
  };
  const auto c = chebyshev_center(planes);
  REQUIRE(c.has_value());
  REQUIRE(c->second == Catch::Approx(0.5).margin(1e-9));
  REQUIRE((c->first - Eigen::Vector3d(0.5, 0.5, 0.5)).norm() < 1e-9);
}
