#include <doctest.h>

#include <array>
#include <random>

#include <Eigen/Dense>

#include "stiv/contact_solver.hpp"
#include "stiv/dynamics.hpp"

using namespace stiv;

namespace {

Eigen::VectorXd solve_dense(const Eigen::MatrixXd& b, const Eigen::VectorXd& q, int ranks = 1) {
  Eigen::VectorXd out(q.size());
  comm::run_ranks(ranks, [&](comm::Communicator& c) {
    const auto system = distribute_lcp(b, q, c);
    const auto r = solve_lcp(system, LcpOptions{}, c);
    CHECK(r.converged);
    const auto all = c.allgatherv(r.lambda);
    if (c.rank() == 0) out = Eigen::Map<const Eigen::VectorXd>(all.data(), q.size());
  });
  return out;
}

MeshBody sphere(std::int64_t id, const Vec3& c0, const Vec3& c1) {
  auto b = triangulate_latlon_sphere(9, 18, c0, Vec3::Ones());
  b.global_id = id;
  for (auto& v : b.vertices1) v += c1 - c0;
  return b;
}

struct NcpRun {
  std::vector<MeshBody> bodies;
  ForceMap forces;
  NcpReport report;
};

NcpRun resolve(std::vector<MeshBody> bodies, double d_sep, int ranks = 1) {
  NcpRun out;
  const auto op = make_step_operator(MobilityModel::make_rigid(1.0), 0.1);
  ContactParams params;
  params.d_sep = d_sep;
  params.dt = 0.1;
  comm::run_ranks(ranks, [&](comm::Communicator& c) {
    const auto [lo, hi] = comm::block_range(static_cast<std::int64_t>(bodies.size()), c.rank(), c.size());
    std::vector<MeshBody> mine(bodies.begin() + lo, bodies.begin() + hi);
    ForceMap forces;
    const auto report = resolve_contacts_ncp(mine, forces, *op, params, NcpOptions{}, c);
    const auto all = c.allgatherv(mine);
    std::vector<std::pair<std::int64_t, std::vector<Vec3>>> f(forces.begin(), forces.end());
    const auto all_f = c.allgatherv(f);
    if (c.rank() == 0) {
      out.bodies = all;
      out.forces = ForceMap(all_f.begin(), all_f.end());
      out.report = report;
    }
  });
  return out;
}

double separation_after(std::vector<MeshBody> bodies) {
  for (auto& b : bodies) b.accept_candidate();
  double m = 0.0;
  comm::run_ranks(1, [&](comm::Communicator& c) { m = min_separation(bodies, 1.0, c); });
  return m;
}

Vec3 net(const std::vector<Vec3>& f) {
  Vec3 s = Vec3::Zero();
  for (const auto& v : f) s += v;
  return s;
}

}  // namespace

TEST_CASE("small LCP examples") {
  CHECK(solve_dense(Eigen::MatrixXd::Constant(1, 1, 2.0), Eigen::VectorXd::Constant(1, -1.0))[0] ==
        doctest::Approx(0.5));
  CHECK(solve_dense(Eigen::MatrixXd::Constant(1, 1, 1.0), Eigen::VectorXd::Constant(1, 1.0))[0] == 0.0);
  const auto l = solve_dense(Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(-1.0, 2.0));
  CHECK(l[0] == doctest::Approx(1.0));
  CHECK(l[1] == 0.0);
}

TEST_CASE("LCP solution is rank-count independent") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int n = 20;
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = u(rng);
  const Eigen::MatrixXd b = a * a.transpose() + Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd q(n);
  for (int i = 0; i < n; ++i) q[i] = u(rng);
  const auto one = solve_dense(b, q, 1);
  CHECK((b * one + q).minCoeff() > -1e-8);
  CHECK(one.minCoeff() >= 0.0);
  for (int ranks : {2, 3, 4}) CHECK((solve_dense(b, q, ranks) - one).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("distributed products") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int n = 17;
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    b(i, i) = 3.0;
    for (int j = 0; j < i; ++j) {
      if (u(rng) > 0.6) b(i, j) = b(j, i) = u(rng);
    }
  }
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = u(rng);
  const Eigen::MatrixXd diag = Eigen::VectorXd::LinSpaced(n, 1.0, 2.0).asDiagonal();
  for (int ranks : {1, 4}) {
    comm::run_ranks(ranks, [&](comm::Communicator& c) {
      for (const Eigen::MatrixXd* m : std::array<const Eigen::MatrixXd*, 2>{&b, &diag}) {
        const auto system = distribute_lcp(*m, Eigen::VectorXd::Zero(n), c);
        const auto lo = system.row_begin;
        std::vector<double> xl(x.data() + lo, x.data() + lo + system.local_size());
        const auto y = c.allgatherv(lcp_matvec(system, xl, c));
        const Eigen::VectorXd ref = *m * x;
        for (int i = 0; i < n; ++i) CHECK(std::abs(y[i] - ref[i]) < 1e-12);
      }
      const auto eye = distribute_lcp(Eigen::MatrixXd::Identity(n, n), Eigen::VectorXd::Zero(n), c);
      std::vector<double> xl(x.data() + eye.row_begin, x.data() + eye.row_begin + eye.local_size());
      CHECK(lcp_matvec(eye, xl, c) == xl);
      CHECK(ordered_dot(xl, xl, c) == doctest::Approx(x.squaredNorm()).epsilon(1e-14));
    });
  }
}

TEST_CASE("volumes on disjoint body pairs give a diagonal matrix") {
  std::vector<MeshBody> bodies{sphere(0, Vec3(-1.1, 0, 0), Vec3(-0.9, 0, 0)),
                               sphere(1, Vec3(1.1, 0, 0), Vec3(0.9, 0, 0)),
                               sphere(2, Vec3(-1.1, 10, 0), Vec3(-0.9, 10, 0)),
                               sphere(3, Vec3(1.1, 10, 0), Vec3(0.9, 10, 0))};
  const auto op = make_step_operator(MobilityModel::make_rigid(1.0), 0.1);
  ContactParams params;
  params.d_sep = 0.02;
  params.dt = 0.1;
  const auto rows_on = [&](int ranks) {
    std::vector<std::vector<std::pair<std::int64_t, double>>> rows;
    comm::run_ranks(ranks, [&](comm::Communicator& c) {
      const auto [lo, hi] = comm::block_range(4, c.rank(), c.size());
      std::vector<MeshBody> mine(bodies.begin() + lo, bodies.begin() + hi);
      const auto det = compute_contact_volumes(mine, params, c);
      const auto system = assemble_lcp_matrix(det, mine, *op, c);
      const auto all = c.allgatherv(system.rows);
      if (c.rank() == 0) rows = all;
    });
    return rows;
  };
  const auto one = rows_on(1);
  REQUIRE(one.size() == 2);
  for (std::size_t i = 0; i < one.size(); ++i) {
    REQUIRE(one[i].size() == 1);
    CHECK(one[i][0].first == static_cast<std::int64_t>(i));
    CHECK(one[i][0].second > 0.0);
  }
  const auto four = rows_on(4);
  REQUIRE(four.size() == one.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    REQUIRE(four[i].size() == one[i].size());
    for (std::size_t k = 0; k < one[i].size(); ++k) {
      CHECK(four[i][k].first == one[i][k].first);
      CHECK(std::abs(four[i][k].second - one[i][k].second) <= 1e-12 * std::abs(one[i][k].second));
    }
  }
}

TEST_CASE("no contact leaves the candidate untouched") {
  std::vector<MeshBody> bodies{sphere(0, Vec3(-3, 0, 0), Vec3(-2.9, 0, 0)), sphere(1, Vec3(3, 0, 0), Vec3(3, 0, 0))};
  const auto r = resolve(bodies, 0.01);
  CHECK(r.report.iterations == 0);
  CHECK(r.report.converged);
  for (std::size_t i = 0; i < bodies.size(); ++i) CHECK(r.bodies[i].vertices1 == bodies[i].vertices1);
  for (const auto& [id, f] : r.forces) CHECK(net(f).norm() == 0.0);
}

TEST_CASE("head-on squeeze stops at the separation distance") {
  const double d_sep = 0.02;
  std::vector<MeshBody> bodies{sphere(0, Vec3(-1.2, 0, 0), Vec3(-0.9, 0, 0)),
                               sphere(1, Vec3(1.2, 0, 0), Vec3(0.9, 0, 0))};
  for (int ranks : {1, 2}) {
    const auto r = resolve(bodies, d_sep, ranks);
    CHECK(r.report.converged);
    CHECK(r.report.total_lambda > 0.0);
    CHECK(r.report.max_volume <= NcpOptions{}.ncp_tol);
    const double gap = separation_after(r.bodies);
    CHECK(gap >= 0.95 * d_sep);
    CHECK(gap <= 1.5 * d_sep);
    const Vec3 f0 = net(r.forces.at(0));
    const Vec3 f1 = net(r.forces.at(1));
    CHECK(f0.x() < 0.0);
    CHECK((f0 + f1).norm() < 1e-9 * f0.norm());
  }
}

TEST_CASE("symmetric triple squeeze gives symmetric forces") {
  std::vector<MeshBody> bodies{sphere(0, Vec3(-2.2, 0, 0), Vec3(-1.9, 0, 0)), sphere(1, Vec3::Zero(), Vec3::Zero()),
                               sphere(2, Vec3(2.2, 0, 0), Vec3(1.9, 0, 0))};
  const auto r = resolve(bodies, 0.02);
  CHECK(r.report.converged);
  const Vec3 f0 = net(r.forces.at(0));
  const Vec3 f1 = net(r.forces.at(1));
  const Vec3 f2 = net(r.forces.at(2));
  CHECK(f0.x() < 0.0);
  CHECK(std::abs(f0.x() + f2.x()) < 1e-8 * std::abs(f0.x()));
  CHECK(f1.norm() < 1e-8 * f0.norm());
}

TEST_CASE("iteration cap raises NcpFailure") {
  std::vector<MeshBody> bodies{sphere(0, Vec3(-1.2, 0, 0), Vec3(-0.9, 0, 0)),
                               sphere(1, Vec3(1.2, 0, 0), Vec3(0.9, 0, 0))};
  const auto op = make_step_operator(MobilityModel::make_rigid(1.0), 0.1);
  ContactParams params;
  params.d_sep = 0.02;
  params.dt = 0.1;
  NcpOptions opts;
  opts.max_iterations = 0;
  CHECK_THROWS_AS(comm::run_ranks(1,
                                  [&](comm::Communicator& c) {
                                    ForceMap f;
                                    resolve_contacts_ncp(bodies, f, *op, params, opts, c);
                                  }),
                  NcpFailure);
}
