#include <doctest.h>

#include <cmath>
#include <random>

#include "stiv/narrowphase.hpp"

using namespace stiv;

namespace {

TriangleVertexTrajectory static_triangle(const Vec3& p0, const Vec3& p1) {
  TriangleVertexTrajectory t;
  t.tri0 = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  t.tri1 = t.tri0;
  t.vertex0 = p0;
  t.vertex1 = p1;
  return t;
}

MeshBody sphere(std::int64_t id, const Vec3& c0, const Vec3& c1, int n_lat = 9, int n_lon = 18) {
  auto b = triangulate_latlon_sphere(n_lat, n_lon, c0, Vec3::Ones());
  b.global_id = id;
  for (auto& v : b.vertices1) v += c1 - c0;
  return b;
}

}  // namespace

TEST_CASE("earliest contact time examples") {
  const auto down = static_triangle(Vec3(0.25, 0.25, 1), Vec3(0.25, 0.25, 0));
  REQUIRE(earliest_contact_time(down, 0.1, 1.0).has_value());
  CHECK(*earliest_contact_time(down, 0.1, 1.0) == doctest::Approx(0.9).epsilon(1e-12));
  const auto up = static_triangle(Vec3(0.25, 0.25, 1), Vec3(0.25, 0.25, 2));
  CHECK_FALSE(earliest_contact_time(up, 0.1, 1.0).has_value());
  const auto cross = static_triangle(Vec3(0.25, 0.25, 0.5), Vec3(0.25, 0.25, -0.5));
  CHECK(*earliest_contact_time(cross, 0.0, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(*earliest_contact_time(down, 0.1, 2.0) == doctest::Approx(1.8).epsilon(1e-12));
  const auto outside = static_triangle(Vec3(2, 2, 1), Vec3(2, 2, -1));
  CHECK_FALSE(earliest_contact_time(outside, 0.1, 1.0).has_value());
  const auto already = static_triangle(Vec3(0.25, 0.25, 0.05), Vec3(0.25, 0.25, 1));
  CHECK(*earliest_contact_time(already, 0.1, 1.0) == 0.0);
}

TEST_CASE("pair volume examples") {
  CHECK(pair_volume(1.0, 1.0, -1.0, 0.0, 0.5) == 0.0);
  CHECK(pair_volume(0.9, 1.0, -1.0, 0.0, 0.5) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(pair_volume(0.9, 1.0, -1.0, 1.0, 0.5) == doctest::Approx(0.1 * std::sqrt(2.0) * 0.5).epsilon(1e-12));
}

TEST_CASE("pair contact value and gradient") {
  const auto t = static_triangle(Vec3(0.25, 0.25, 1), Vec3(0.25, 0.25, 0));
  ContactParams params;
  params.d_sep = 0.1;
  params.epsilon = 0.0;
  const auto c = pair_contact(t, params);
  REQUIRE(c.has_value());
  CHECK(c->tau == doctest::Approx(0.9));
  CHECK(c->value == doctest::Approx(0.1 * 1.0 * 0.5).epsilon(1e-10));
  CHECK_FALSE(c->finite_difference);
  const auto fd = pair_volume_gradient_fd(t, params, 1e-6, true);
  CHECK((c->gradient - fd).norm() < 1e-6 * fd.norm());
}

TEST_CASE("pair gradient is translation invariant") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  int checked = 0;
  for (int i = 0; i < 200 && checked < 50; ++i) {
    auto t = static_triangle(Vec3(0.3 + u(rng), 0.3 + u(rng), 0.8), Vec3(0.3 + u(rng), 0.3 + u(rng), -0.1));
    for (auto& p : t.tri1) p += Vec3(u(rng), u(rng), u(rng));
    ContactParams params;
    params.d_sep = 0.05;
    params.epsilon = 0.5;
    const auto c = pair_contact(t, params);
    if (!c) continue;
    ++checked;
    Vec3 sum = Vec3::Zero();
    for (int k = 0; k < 4; ++k) sum += c->gradient.segment<3>(3 * k);
    CHECK(sum.norm() < 1e-9 * c->gradient.norm());
  }
  CHECK(checked > 0);
}

TEST_CASE("far apart spheres have no volumes") {
  const auto a = sphere(0, Vec3(-3, 0, 0), Vec3(-3, 0, 0));
  const auto b = sphere(1, Vec3(3, 0, 0), Vec3(3, 0, 0));
  ContactParams params;
  params.d_sep = 0.01;
  CHECK(body_pair_volumes(a, b, params).empty());
}

TEST_CASE("head-on spheres produce positive volumes") {
  const auto a = sphere(0, Vec3(-1.2, 0, 0), Vec3(-0.95, 0, 0));
  const auto b = sphere(1, Vec3(1.2, 0, 0), Vec3(0.95, 0, 0));
  ContactParams params;
  params.d_sep = 0.01;
  const auto v = body_pair_volumes(a, b, params);
  REQUIRE_FALSE(v.empty());
  for (const auto& c : v) CHECK(c.value > 0.0);
}

TEST_CASE("distributed contact volumes do not depend on rank count") {
  std::vector<MeshBody> bodies;
  for (int i = 0; i < 4; ++i) {
    const Vec3 c(2.1 * i, 0.1 * i, 0.0);
    bodies.push_back(sphere(i, c, c + Vec3(i % 2 == 0 ? 0.1 : -0.1, 0, 0), 7, 14));
  }
  ContactParams params;
  params.d_sep = 0.02;
  const auto collect = [&](int ranks) {
    std::vector<ContactVolume> out;
    comm::run_ranks(ranks, [&](comm::Communicator& c) {
      const auto [lo, hi] = comm::block_range(4, c.rank(), c.size());
      std::vector<MeshBody> mine(bodies.begin() + lo, bodies.begin() + hi);
      const auto all = c.allgatherv(compute_contact_volumes(mine, params, c).volumes);
      if (c.rank() == 0) out = all;
    });
    return out;
  };
  const auto one = collect(1);
  REQUIRE_FALSE(one.empty());
  for (int ranks : {2, 4}) {
    const auto many = collect(ranks);
    REQUIRE(many.size() == one.size());
    for (std::size_t i = 0; i < one.size(); ++i) {
      CHECK(many[i].global_index == one[i].global_index);
      CHECK(std::abs(many[i].value - one[i].value) <= 1e-12 * std::abs(one[i].value));
      REQUIRE(many[i].gradient.size() == one[i].gradient.size());
      for (std::size_t k = 0; k < one[i].gradient.size(); ++k) {
        CHECK(many[i].gradient[k].vertex == one[i].gradient[k].vertex);
        CHECK((many[i].gradient[k].grad - one[i].gradient[k].grad).norm() <= 1e-12);
      }
    }
  }
}

TEST_CASE("ghost exchange") {
  std::vector<MeshBody> bodies{sphere(0, Vec3(-1.05, 0, 0), Vec3(-1.05, 0, 0)),
                               sphere(1, Vec3(1.05, 0, 0), Vec3(1.05, 0, 0))};
  const auto ghosts_on = [&](int ranks) {
    std::vector<std::size_t> counts(ranks);
    comm::run_ranks(ranks, [&](comm::Communicator& c) {
      const auto [lo, hi] = comm::block_range(2, c.rank(), c.size());
      std::vector<MeshBody> mine(bodies.begin() + lo, bodies.begin() + hi);
      const auto pairs = find_intersecting_box_pairs(body_boxes(mine, 0.2), c);
      counts[c.rank()] = exchange_ghosts(pairs, mine, c).size();
    });
    return counts;
  };
  CHECK(ghosts_on(1) == std::vector<std::size_t>{0});
  CHECK(ghosts_on(2) == std::vector<std::size_t>{1, 1});
}
