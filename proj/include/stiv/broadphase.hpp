#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "stiv/comm.hpp"
#include "stiv/geometry.hpp"

namespace stiv {

inline constexpr int kMaxMortonDepth = 21;

/// Uniform octree grid used to bucket check points.
struct MortonGrid {
  Vec3 origin = Vec3::Zero();
  double length = 1.0;  // domain edge length L
  int depth = 0;
  double cell = 1.0;    // L / 2^depth

  /// Grid covering [lo, hi] padded by one h_m on every side, with the
  /// coarsest cell not exceeding h_m (unless the depth cap forces coarser).
  static MortonGrid covering(const Vec3& lo, const Vec3& hi, double h_m);

  std::array<std::uint32_t, 3> cell_of(const Vec3& p) const;
  std::uint64_t code_of(const Vec3& p) const;
};

/// Interleaves cell bits: at level l (from the most significant) the digit
/// z_l*4 + y_l*2 + x_l has weight 8^(depth-1-l).
std::uint64_t morton_encode(const std::array<std::uint32_t, 3>& cell, int depth);
std::array<std::uint32_t, 3> morton_decode(std::uint64_t code, int depth);

/// Closed-interval overlap on all three axes.
bool aabb_overlap(const SpaceTimeBox& a, const SpaceTimeBox& b);

/// A box owned by the calling rank, with its global index.
struct IndexedBox {
  std::int64_t index = 0;
  SpaceTimeBox box;
};

using BoxPair = std::pair<std::int64_t, std::int64_t>;

struct BroadphaseStats {
  double h_m = 0.0;
  int depth = 0;
  std::int64_t check_points = 0;      // after per-box per-cell deduplication
  std::int64_t occupied_cells = 0;    // on this rank after the sort
  std::int64_t candidate_tests = 0;   // distinct pairs reaching the exact test on this rank
  std::int64_t max_cell_occupancy = 0;
};

/// Ordered pairs (j, k) with j owned by the calling rank, sorted and unique.
/// Every intersecting unordered pair {j, k} appears as (j, k) on j's owner
/// and as (k, j) on k's owner.
struct CandidatePairSet {
  std::vector<BoxPair> pairs;
  BroadphaseStats stats;
};

/// Global mean of box diagonals (collective).
double grid_cell_size(const std::vector<IndexedBox>& boxes, comm::Communicator& comm);

/// Collective box-box intersection over all ranks' boxes via check points,
/// Morton codes and a global sort.
CandidatePairSet find_intersecting_box_pairs(const std::vector<IndexedBox>& boxes,
                                             comm::Communicator& comm);

/// O(N^2) reference, used by tests and diagnostics.
std::vector<BoxPair> brute_force_box_pairs(const std::vector<IndexedBox>& boxes);

}  // namespace stiv
