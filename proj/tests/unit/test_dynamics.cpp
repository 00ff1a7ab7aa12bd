#include <doctest.h>

#include <cmath>
#include <limits>

#include "stiv/dynamics.hpp"
#include "stiv/simulation.hpp"

using namespace stiv;

namespace {

MeshBody sphere(std::int64_t id, const Vec3& c, int n_lat = 9, int n_lon = 18) {
  auto b = triangulate_latlon_sphere(n_lat, n_lon, c, Vec3::Ones());
  b.global_id = id;
  return b;
}

template <class F>
void on_one_rank(F f) {
  comm::run_ranks(1, [&](comm::Communicator& c) { f(c); });
}

StepConfig base_config() {
  StepConfig cfg;
  cfg.dt = 0.05;
  cfg.d_m = 0.01;
  cfg.mobility = MobilityModel::make_rigid(1.0);
  return cfg;
}

}  // namespace

TEST_CASE("drag mobility is a per-vertex scaling") {
  const std::vector<MeshBody> bodies{sphere(0, Vec3::Zero())};
  std::vector<std::vector<Vec3>> f{std::vector<Vec3>(bodies[0].vertex_count(), Vec3(0, 0, 1))};
  const auto u = mobility_velocity(MobilityModel::make_drag(1.0), bodies, f);
  for (const auto& v : u[0]) CHECK((v - Vec3(0, 0, 1)).norm() == 0.0);
  f[0].assign(bodies[0].vertex_count(), Vec3::Zero());
  for (const auto& model : {MobilityModel::make_drag(2.0), MobilityModel::make_stokeslet(1.0),
                            MobilityModel::make_rigid(1.0, 1.0)}) {
    const auto u0 = mobility_velocity(model, bodies, f);
    for (const auto& v : u0[0]) CHECK(v.norm() == 0.0);
  }
}

TEST_CASE("regularized Stokeslet far field decays like 1/R") {
  std::vector<double> speed;
  for (double r : {10.0, 20.0, 40.0}) {
    const std::vector<MeshBody> bodies{sphere(0, Vec3::Zero(), 5, 10), sphere(1, Vec3(r, 0, 0), 2, 3)};
    std::vector<std::vector<Vec3>> f{std::vector<Vec3>(bodies[0].vertex_count(), Vec3(0, 0, 1)),
                                     std::vector<Vec3>(bodies[1].vertex_count(), Vec3::Zero())};
    const auto u = mobility_velocity(MobilityModel::make_stokeslet(1.0), bodies, f);
    speed.push_back(centroid(u[1]).norm() * r);
  }
  CHECK(speed[1] == doctest::Approx(speed[0]).epsilon(0.02));
  CHECK(speed[2] == doctest::Approx(speed[1]).epsilon(0.01));
}

TEST_CASE("Stokeslet kernel is symmetric") {
  const Mat3 g = regularized_stokeslet(Vec3(0.3, -0.2, 0.5), 1.0, 0.1);
  CHECK((g - g.transpose()).norm() < 1e-15);
  CHECK(regularized_stokeslet(Vec3::Zero(), 1.0, 0.1).determinant() > 0.0);
}

TEST_CASE("zero flow and zero force leave the state unchanged") {
  auto cfg = base_config();
  on_one_rank([&](comm::Communicator& c) {
    auto state = make_state({sphere(0, Vec3::Zero()), sphere(1, Vec3(3, 0, 0))});
    const auto before = state.bodies;
    step_li(state, cfg, c);
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(state.bodies[i].vertices0 == before[i].vertices0);
    CHECK(state.step == 1);
    CHECK(state.time == doctest::Approx(cfg.dt));
  });
}

TEST_CASE("a body in shear moves with the flow at its centroid") {
  auto cfg = base_config();
  cfg.flow = BackgroundFlow::shear(1.0);
  on_one_rank([&](comm::Communicator& c) {
    auto state = make_state({sphere(0, Vec3(0, 0, 0.7))});
    const Vec3 c0 = centroid(state.bodies[0].vertices0);
    step_li(state, cfg, c);
    const Vec3 c1 = centroid(state.bodies[0].vertices0);
    CHECK((c1.x() - c0.x()) / cfg.dt == doctest::Approx(c0.z()).epsilon(1e-6));
  });
}

TEST_CASE("without neighbours the constrained and repulsive steps equal the free step") {
  auto cfg = base_config();
  cfg.flow = BackgroundFlow::extensional();
  cfg.repulsion = 0.01;
  cfg.activation_distance = 0.02;
  on_one_rank([&](comm::Communicator& c) {
    auto li = make_state({sphere(0, Vec3(-4, 0, 0)), sphere(1, Vec3(4, 0, 0))});
    auto cli = li;
    auto rep = li;
    step_li(li, cfg, c);
    const auto r_cli = step_cli(cli, cfg, c);
    const auto r_rep = step_repulsion(rep, cfg, c);
    CHECK(r_cli.ncp_iterations == 0);
    CHECK(r_rep.repulsion_force == 0.0);
    for (std::size_t i = 0; i < li.bodies.size(); ++i) {
      CHECK(cli.bodies[i].vertices0 == li.bodies[i].vertices0);
      CHECK(rep.bodies[i].vertices0 == li.bodies[i].vertices0);
    }
  });
}

TEST_CASE("zero repulsion coefficient equals the free step") {
  auto cfg = base_config();
  cfg.flow = BackgroundFlow::extensional();
  cfg.repulsion = 0.0;
  cfg.activation_distance = 0.5;
  on_one_rank([&](comm::Communicator& c) {
    auto li = make_state({sphere(0, Vec3(-1.1, 0, 0)), sphere(1, Vec3(1.1, 0, 0))});
    auto rep = li;
    step_li(li, cfg, c);
    step_repulsion(rep, cfg, c);
    for (std::size_t i = 0; i < li.bodies.size(); ++i) CHECK(rep.bodies[i].vertices0 == li.bodies[i].vertices0);
  });
}

TEST_CASE("minimum separation") {
  on_one_rank([&](comm::Communicator& c) {
    const std::vector<MeshBody> two{sphere(0, Vec3::Zero(), 15, 32), sphere(1, Vec3(3, 0, 0), 15, 32)};
    const double dev = max_deviation_from_reference(two[0]);
    CHECK(std::abs(min_separation(two, 2.0, c) - 1.0) <= 2.0 * dev);
    CHECK(min_separation({sphere(0, Vec3::Zero())}, 2.0, c) == std::numeric_limits<double>::infinity());
    CHECK(min_separation({sphere(0, Vec3::Zero()), sphere(1, Vec3(1.5, 0, 0))}, 2.0, c) < 0.0);
  });
  const auto s = sphere(0, Vec3::Zero());
  CHECK(winding_number(s, Vec3(0.1, 0.2, 0.0)) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(winding_number(s, Vec3(3, 0, 0))) < 1e-9);
  CHECK(point_triangle_distance(Vec3(0.2, 0.2, 1), Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)) ==
        doctest::Approx(1.0));
  CHECK(point_triangle_distance(Vec3(2, 0, 0), Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)) ==
        doctest::Approx(1.0));
}

TEST_CASE("mirrored bodies stay mirrored through contact") {
  auto s = preset_scenario("extensional-two-body");
  const auto r = simulate(s);
  REQUIRE(r.status == RunStatus::ok);
  bool contact = false;
  for (const auto& rec : r.records) contact = contact || rec.row.ncp_iters > 0;
  CHECK(contact);
  const auto& a = r.final_bodies[0].vertices0;
  const auto& b = r.final_bodies[1].vertices0;
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, (b[i] - Vec3(-a[i].x(), a[i].y(), a[i].z())).norm());
  CHECK(worst < 1e-8);
}

TEST_CASE("free step interpenetrates where the constrained step does not") {
  auto s = preset_scenario("extensional-two-body");
  s.stepper = Stepper::li;
  const auto li = simulate(s);
  double m = std::numeric_limits<double>::infinity();
  for (const auto& rec : li.records) m = std::min(m, rec.row.min_separation);
  CHECK(m < 0.0);
}
