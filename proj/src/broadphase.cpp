#include "stiv/broadphase.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace stiv {

std::uint64_t morton_encode(const std::array<std::uint32_t, 3>& cell, int depth) {
  if (depth < 0 || depth > kMaxMortonDepth) {
    throw GeometryError("morton_encode: depth " + std::to_string(depth) + " outside [0, 21]");
  }
  const std::uint64_t limit = std::uint64_t{1} << depth;
  for (auto c : cell) {
    if (c >= limit) throw GeometryError("morton_encode: cell component out of range");
  }
  std::uint64_t code = 0;
  for (int level = depth - 1; level >= 0; --level) {
    const std::uint64_t digit = ((cell[2] >> level) & 1u) * 4 + ((cell[1] >> level) & 1u) * 2 +
                                ((cell[0] >> level) & 1u);
    code = code * 8 + digit;
  }
  return code;
}

std::array<std::uint32_t, 3> morton_decode(std::uint64_t code, int depth) {
  std::array<std::uint32_t, 3> cell{0, 0, 0};
  for (int level = 0; level < depth; ++level) {
    const auto digit = static_cast<std::uint32_t>((code >> (3 * level)) & 7u);
    cell[0] |= (digit & 1u) << level;
    cell[1] |= ((digit >> 1) & 1u) << level;
    cell[2] |= ((digit >> 2) & 1u) << level;
  }
  return cell;
}

MortonGrid MortonGrid::covering(const Vec3& lo, const Vec3& hi, double h_m) {
  if (!(h_m > 0.0) || !std::isfinite(h_m)) throw GeometryError("grid cell size must be positive");
  MortonGrid grid;
  grid.origin = lo.array() - h_m;
  grid.length = (hi - lo).maxCoeff() + 2 * h_m;
  const double ratio = grid.length / h_m;
  grid.depth = std::clamp(static_cast<int>(std::ceil(std::log2(ratio))), 0, kMaxMortonDepth);
  grid.cell = grid.length / static_cast<double>(std::uint64_t{1} << grid.depth);
  return grid;
}

std::array<std::uint32_t, 3> MortonGrid::cell_of(const Vec3& p) const {
  const auto max_index = static_cast<double>((std::uint64_t{1} << depth) - 1);
  std::array<std::uint32_t, 3> c{};
  for (int d = 0; d < 3; ++d) {
    const double f = std::floor((p[d] - origin[d]) / cell);
    c[d] = static_cast<std::uint32_t>(std::clamp(f, 0.0, max_index));
  }
  return c;
}

std::uint64_t MortonGrid::code_of(const Vec3& p) const { return morton_encode(cell_of(p), depth); }

bool aabb_overlap(const SpaceTimeBox& a, const SpaceTimeBox& b) {
  return (a.lo.array() <= b.hi.array()).all() && (b.lo.array() <= a.hi.array()).all();
}

double grid_cell_size(const std::vector<IndexedBox>& boxes, comm::Communicator& comm) {
  // Gather (index, diagonal) and sum in global index order so that the
  // result does not depend on the rank layout.
  std::vector<std::pair<std::int64_t, double>> local;
  local.reserve(boxes.size());
  for (const auto& b : boxes) local.emplace_back(b.index, b.box.diagonal());
  auto all = comm.allgatherv(local);
  if (all.empty()) throw GeometryError("grid_cell_size: no boxes on any rank");
  std::sort(all.begin(), all.end());
  double sum = 0.0;
  for (const auto& [index, diag] : all) sum += diag;
  return sum / static_cast<double>(all.size());
}

namespace {

// Payload carried with each check point through the sort.
struct CheckRecord {
  std::int64_t check_index;
  std::int64_t box_index;
  int owner;
  Vec3 lo, hi;
};

}  // namespace

CandidatePairSet find_intersecting_box_pairs(const std::vector<IndexedBox>& boxes,
                                             comm::Communicator& comm) {
  CandidatePairSet result;
  const auto total_boxes = comm.allgather(static_cast<std::int64_t>(boxes.size()));
  std::int64_t global_count = 0;
  for (auto c : total_boxes) global_count += c;
  if (global_count == 0) return result;

  // (1) Grid from the mean diagonal and the global domain bounds.
  const double h_m_raw = grid_cell_size(boxes, comm);
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& b : boxes) {
    lo = lo.cwiseMin(b.box.lo);
    hi = hi.cwiseMax(b.box.hi);
  }
  const auto all_lo = comm.allgather(lo);
  const auto all_hi = comm.allgather(hi);
  for (int q = 0; q < comm.size(); ++q) {
    lo = lo.cwiseMin(all_lo[q]);
    hi = hi.cwiseMax(all_hi[q]);
  }
  // Point-sized boxes have zero diagonal; fall back to the domain scale.
  double h_m = h_m_raw;
  if (!(h_m > 0.0)) h_m = std::max((hi - lo).maxCoeff(), 1.0);
  const MortonGrid grid = MortonGrid::covering(lo, hi, h_m);
  result.stats.h_m = h_m;
  result.stats.depth = grid.depth;

  // Check points at the grid's cell spacing, one kept per (box, cell).
  std::vector<std::uint64_t> keys;
  std::vector<CheckRecord> records;
  for (const auto& b : boxes) {
    const auto points = generate_check_points(b.box, grid.cell, b.index, 0);
    std::set<std::uint64_t> seen;
    for (const auto& cp : points) {
      const auto code = grid.code_of(cp.position);
      if (!seen.insert(code).second) continue;
      keys.push_back(code);
      records.push_back(CheckRecord{0, b.index, comm.rank(), b.box.lo, b.box.hi});
    }
  }
  const std::int64_t first = comm.scan_exclusive(static_cast<std::int64_t>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i].check_index = first + static_cast<std::int64_t>(i);
  }
  result.stats.check_points = static_cast<std::int64_t>(records.size());

  // (2) Global sort by Morton code; payload travels with the key.
  auto sorted = comm.sort_by_key(std::move(keys), std::move(records));

  // (3) All pairs per cell, each distinct pair tested once on this rank.
  std::set<BoxPair> tested;
  std::map<int, std::vector<BoxPair>> outgoing;
  std::size_t begin = 0;
  const auto& sk = sorted.keys;
  const auto& sv = sorted.values;
  while (begin < sk.size()) {
    std::size_t end = begin;
    while (end < sk.size() && sk[end] == sk[begin]) ++end;
    ++result.stats.occupied_cells;
    result.stats.max_cell_occupancy =
        std::max<std::int64_t>(result.stats.max_cell_occupancy, static_cast<std::int64_t>(end - begin));
    for (std::size_t a = begin; a < end; ++a) {
      for (std::size_t b = a + 1; b < end; ++b) {
        const auto& ra = sv[a];
        const auto& rb = sv[b];
        if (ra.box_index == rb.box_index) continue;
        const BoxPair key{std::min(ra.box_index, rb.box_index), std::max(ra.box_index, rb.box_index)};
        if (!tested.insert(key).second) continue;
        if (aabb_overlap(SpaceTimeBox{ra.lo, ra.hi}, SpaceTimeBox{rb.lo, rb.hi})) {
          outgoing[ra.owner].emplace_back(ra.box_index, rb.box_index);
          outgoing[rb.owner].emplace_back(rb.box_index, ra.box_index);
        }
      }
    }
    begin = end;
  }
  result.stats.candidate_tests = static_cast<std::int64_t>(tested.size());

  const auto incoming = comm.sparse_all_to_all(outgoing);
  result.pairs.reserve(incoming.size());
  for (const auto& env : incoming) result.pairs.push_back(env.payload);
  std::sort(result.pairs.begin(), result.pairs.end());
  result.pairs.erase(std::unique(result.pairs.begin(), result.pairs.end()), result.pairs.end());
  return result;
}

std::vector<BoxPair> brute_force_box_pairs(const std::vector<IndexedBox>& boxes) {
  std::vector<BoxPair> pairs;
  for (std::size_t a = 0; a < boxes.size(); ++a) {
    for (std::size_t b = a + 1; b < boxes.size(); ++b) {
      if (boxes[a].index == boxes[b].index) continue;
      if (aabb_overlap(boxes[a].box, boxes[b].box)) {
        pairs.emplace_back(boxes[a].index, boxes[b].index);
        pairs.emplace_back(boxes[b].index, boxes[a].index);
      }
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

}  // namespace stiv
