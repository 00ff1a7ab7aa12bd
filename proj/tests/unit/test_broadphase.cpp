#include <doctest.h>

#include <algorithm>
#include <mutex>
#include <random>

#include "stiv/broadphase.hpp"

using namespace stiv;

namespace {

std::vector<BoxPair> collective_pairs(const std::vector<IndexedBox>& boxes, int ranks) {
  std::vector<BoxPair> all;
  std::mutex m;
  comm::run_ranks(ranks, [&](comm::Communicator& c) {
    const auto [lo, hi] = comm::block_range(static_cast<std::int64_t>(boxes.size()), c.rank(), c.size());
    std::vector<IndexedBox> mine(boxes.begin() + lo, boxes.begin() + hi);
    const auto r = find_intersecting_box_pairs(mine, c);
    std::lock_guard lock(m);
    all.insert(all.end(), r.pairs.begin(), r.pairs.end());
  });
  std::sort(all.begin(), all.end());
  return all;
}

SpaceTimeBox cube(const Vec3& lo, double side) { return {lo, lo + Vec3::Constant(side)}; }

}  // namespace

TEST_CASE("grid cell size is the global mean diagonal") {
  const auto box_with_diag = [](std::int64_t i, double d) {
    return IndexedBox{i, cube(Vec3::Zero(), d / std::sqrt(3.0))};
  };
  comm::run_ranks(1, [&](comm::Communicator& c) {
    CHECK(grid_cell_size({box_with_diag(0, 1), box_with_diag(1, 3)}, c) == doctest::Approx(2.0));
    CHECK(grid_cell_size({box_with_diag(0, 1.5)}, c) == doctest::Approx(1.5));
  });
  comm::run_ranks(2, [&](comm::Communicator& c) {
    const auto mine = c.rank() == 0 ? std::vector<IndexedBox>{box_with_diag(0, 1)}
                                    : std::vector<IndexedBox>{box_with_diag(1, 3), box_with_diag(2, 5)};
    CHECK(grid_cell_size(mine, c) == doctest::Approx(3.0));
  });
}

TEST_CASE("Morton encoding") {
  CHECK(morton_encode({0, 0, 0}, 5) == 0);
  CHECK(morton_encode({1, 1, 1}, 1) == 7);
  CHECK(morton_encode({3, 1, 2}, 2) == 43);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const int depth = 1 + static_cast<int>(rng() % kMaxMortonDepth);
    const std::uint32_t mask = (1u << depth) - 1;
    const std::array<std::uint32_t, 3> c{static_cast<std::uint32_t>(rng()) & mask,
                                         static_cast<std::uint32_t>(rng()) & mask,
                                         static_cast<std::uint32_t>(rng()) & mask};
    CHECK(morton_decode(morton_encode(c, depth), depth) == c);
  }
}

TEST_CASE("AABB overlap uses closed intervals") {
  const auto a = cube(Vec3::Zero(), 1.0);
  CHECK(aabb_overlap(a, a));
  CHECK(aabb_overlap(a, cube(Vec3(1, 0, 0), 1.0)));
  CHECK_FALSE(aabb_overlap(a, cube(Vec3(2, 0, 0), 1.0)));
}

TEST_CASE("simple pair sets") {
  CHECK(collective_pairs({{0, cube(Vec3::Zero(), 1)}, {1, cube(Vec3(10, 10, 10), 1)}}, 1).empty());
  const auto p = collective_pairs({{0, cube(Vec3::Zero(), 1)}, {1, cube(Vec3::Constant(0.5), 1)}}, 1);
  CHECK(p == std::vector<BoxPair>{{0, 1}, {1, 0}});
  CHECK(collective_pairs({{0, cube(Vec3::Zero(), 1)}, {1, cube(Vec3::Constant(0.5), 1)}}, 2) == p);
}

TEST_CASE("random scenes agree with all pairs on any rank count") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> pos(0.0, 6.0), size(0.05, 1.5);
  std::vector<IndexedBox> boxes;
  for (int i = 0; i < 100; ++i) {
    const Vec3 lo(pos(rng), pos(rng), pos(rng));
    boxes.push_back({i, {lo, lo + Vec3(size(rng), size(rng), size(rng))}});
  }
  const auto oracle = brute_force_box_pairs(boxes);
  for (int ranks = 1; ranks <= 8; ++ranks) CHECK(collective_pairs(boxes, ranks) == oracle);
}

TEST_CASE("Morton grid covers the domain") {
  const auto g = MortonGrid::covering(Vec3::Zero(), Vec3(3, 1, 1), 0.5);
  CHECK(g.cell <= 0.5);
  CHECK(g.length >= 4.0);
  const auto c = g.cell_of(Vec3(3, 1, 1));
  for (auto v : c) CHECK(v < (1u << g.depth));
}
