#include <doctest.h>

#include <cmath>
#include <numbers>

#include "stiv/geometry.hpp"

using namespace stiv;

TEST_CASE("lat-lon counts and Euler characteristic") {
  const auto m = triangulate_latlon_sphere(3, 4, Vec3::Zero(), Vec3::Ones());
  const auto a = audit_mesh(m);
  CHECK(a.vertices == 14);
  CHECK(a.faces == 24);
  CHECK(a.edges == 36);
  CHECK(a.euler_characteristic == 2);
  CHECK(a.ok());
}

TEST_CASE("unit sphere vertices lie on the sphere") {
  const Vec3 c(0.5, -1.0, 2.0);
  const auto m = triangulate_latlon_sphere(2, 3, c, Vec3::Ones());
  CHECK(m.vertex_count() == 8);
  for (const auto& v : m.vertices0) CHECK((v - c).norm() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("fine ellipsoid mesh is a closed oriented manifold") {
  const Mat3 rot = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  for (bool mirror : {false, true}) {
    const auto m = triangulate_latlon_sphere(15, 32, Vec3(1, 2, 3), Vec3(1.0, 0.8, 0.6), rot, mirror);
    const auto a = audit_mesh(m);
    CHECK(a.closed);
    CHECK(a.oriented);
    CHECK(a.signed_volume > 0.0);
    CHECK(a.signed_volume == doctest::Approx(4.0 / 3.0 * std::numbers::pi * 0.48).epsilon(0.05));
    CHECK_NOTHROW(require_valid_mesh(m));
  }
}

TEST_CASE("invalid meshes are rejected") {
  auto m = triangulate_latlon_sphere(3, 4, Vec3::Zero(), Vec3::Ones());
  auto open = m;
  open.triangles.pop_back();
  CHECK_FALSE(audit_mesh(open).closed);
  CHECK_THROWS_AS(require_valid_mesh(open), GeometryError);
  auto flipped = m;
  std::swap(flipped.triangles[0][1], flipped.triangles[0][2]);
  CHECK_FALSE(audit_mesh(flipped).oriented);
  CHECK_THROWS_AS(triangulate_latlon_sphere(0, 4, Vec3::Zero(), Vec3::Ones()), GeometryError);
}

TEST_CASE("upsampling") {
  const auto m = triangulate_latlon_sphere(3, 4, Vec3::Zero(), Vec3::Ones());
  const auto same = upsample_mesh(m, 1);
  CHECK(same.vertices0 == m.vertices0);
  CHECK(same.triangles == m.triangles);
  const auto fine = upsample_mesh(m, 2);
  CHECK(fine.vertex_count() == 50);
  CHECK(fine.param->n_lat == 6);
  CHECK(fine.param->n_lon == 8);
  CHECK(max_deviation_from_reference(fine) < max_deviation_from_reference(m));
}

TEST_CASE("bounding boxes") {
  const std::vector<Vec3> a{Vec3::Zero()};
  auto b = get_bounding_box(a, a, 0.0);
  CHECK(b.lo == Vec3::Zero());
  CHECK(b.hi == Vec3::Zero());
  const std::vector<Vec3> x1{Vec3::Ones()};
  b = get_bounding_box(a, x1, 0.2);
  CHECK((b.lo - Vec3::Constant(-0.1)).norm() < 1e-15);
  CHECK((b.hi - Vec3::Constant(1.1)).norm() < 1e-15);
}

TEST_CASE("check point lattice") {
  CHECK(check_points_per_axis(1.0, 0.6) == 3);
  CHECK(check_points_per_axis(0.5, 0.6) == 2);
  const auto pts = generate_check_points({Vec3::Zero(), Vec3::Ones()}, 0.6, 4, 100);
  CHECK(pts.size() == 27);
  CHECK(pts.front().global_index == 100);
  for (const auto& p : pts) {
    CHECK(p.box_index == 4);
    for (int d = 0; d < 3; ++d) {
      const double k = p.position[d] / 0.5;
      CHECK(std::abs(k - std::round(k)) < 1e-12);
    }
  }
  CHECK(generate_check_points({Vec3::Zero(), Vec3::Constant(0.5)}, 0.6, 0, 0).size() == 8);
  for (double e : {0.6, 0.9, 1.1}) {
    const auto n = generate_check_points({Vec3::Zero(), Vec3::Constant(e)}, 0.6, 0, 0).size();
    CHECK(n >= 8);
    CHECK(n <= 27);
  }
}

TEST_CASE("background flows") {
  const auto ext = background_velocity(BackgroundFlow::extensional(), Vec3(1, 2, 2));
  CHECK((ext - Vec3(-1, 1, 1)).norm() < 1e-15);
  const auto sh = background_velocity(BackgroundFlow::shear(1.0), Vec3(0, 0, 2));
  CHECK((sh - Vec3(2, 0, 0)).norm() < 1e-15);
  for (double len : {1.0, 2.0 * std::numbers::pi, 7.5}) {
    const auto tv = background_velocity(BackgroundFlow::taylor_vortex(1.0, len), Vec3(len / 4, 0, len / 4));
    CHECK((tv - Vec3(1, 0, 0)).norm() < 1e-12);
  }
  CHECK(background_velocity(BackgroundFlow::none(), Vec3(1, 2, 3)).norm() == 0.0);
}

TEST_CASE("mesh helpers") {
  CHECK(triangle_area(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)) == doctest::Approx(0.5));
  const auto m = triangulate_latlon_sphere(6, 12, Vec3::Zero(), Vec3::Ones());
  double total = 0.0;
  for (double w : vertex_area_weights(m)) total += w;
  double area = 0.0;
  for (const auto& t : m.triangles) area += triangle_area(m.vertices0[t[0]], m.vertices0[t[1]], m.vertices0[t[2]]);
  CHECK(total == doctest::Approx(area).epsilon(1e-12));
  CHECK(unique_edges(m).size() == audit_mesh(m).edges);
  CHECK(centroid(m.vertices0).norm() < 1e-12);
}
