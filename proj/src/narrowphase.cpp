#include "stiv/narrowphase.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <unsupported/Eigen/AutoDiff>

namespace stiv {

namespace {

using AD = Eigen::AutoDiffScalar<Gradient12>;
template <class S>
using Vec3T = Eigen::Matrix<S, 3, 1>;

constexpr double kRootTol = 1e-14;
// Relative size below which the separation polynomial is treated as zero.
constexpr double kNoise = 1e-13;

// Quadratic vector polynomial n(s) = n0 + s n1 + s^2 n2.
struct NormalPoly {
  Vec3 n0, n1, n2;
};

NormalPoly normal_poly(const TriangleVertexTrajectory& t) {
  const Vec3 e1 = t.tri0[1] - t.tri0[0];
  const Vec3 e2 = t.tri0[2] - t.tri0[0];
  const Vec3 de1 = (t.tri1[1] - t.tri1[0]) - e1;
  const Vec3 de2 = (t.tri1[2] - t.tri1[0]) - e2;
  return {e1.cross(e2), e1.cross(de2) + de1.cross(e2), de1.cross(de2)};
}

double scale_of(const TriangleVertexTrajectory& t) {
  double l = 0.0;
  for (const auto* tri : {&t.tri0, &t.tri1}) {
    const auto& p = *tri;
    l = std::max({l, (p[1] - p[0]).norm(), (p[2] - p[1]).norm(), (p[0] - p[2]).norm()});
  }
  return l;
}

bool degenerate(const NormalPoly& n, double scale) {
  const double eps = 1e-12 * scale * scale;
  return n.n0.norm() <= eps && n.n1.norm() <= eps && n.n2.norm() <= eps;
}

bool inside(const std::array<Vec3, 4>& p, double beta) {
  const Vec3 b = projected_barycentric(p);
  return (b.array() >= -beta).all() && (b.array() <= 1.0 + beta).all();
}

double plane_distance(const std::array<Vec3, 4>& p) {
  const Vec3 n = (p[1] - p[0]).cross(p[2] - p[0]);
  const double nn = n.norm();
  return nn > 0.0 ? std::abs((p[3] - p[0]).dot(n)) / nn : std::numeric_limits<double>::infinity();
}

// Magnitude of the terms that cancel in the separation polynomial on [0, 1].
double separation_scale(const TriangleVertexTrajectory& traj, double d_sep) {
  const auto n = normal_poly(traj);
  const double w = std::max((traj.vertex0 - traj.tri0[0]).norm(), (traj.vertex1 - traj.tri1[0]).norm());
  const double nn = n.n0.norm() + n.n1.norm() + n.n2.norm();
  return (w * w + d_sep * d_sep) * nn * nn;
}

// Cubic (x_k - a) . n in unit time.
Polynomial plane_polynomial(const TriangleVertexTrajectory& traj) {
  const auto n = normal_poly(traj);
  const Vec3 w0 = traj.vertex0 - traj.tri0[0];
  const Vec3 dw = (traj.vertex1 - traj.tri1[0]) - w0;
  return Polynomial{w0.dot(n.n0), w0.dot(n.n1) + dw.dot(n.n0), w0.dot(n.n2) + dw.dot(n.n1), dw.dot(n.n2)};
}

// Earliest qualifying unit time. With `entering_only`, roots where the
// vertex leaves the zone are skipped.
std::optional<double> find_contact(const TriangleVertexTrajectory& traj, double d_sep,
                                   double beta, bool entering_only) {
  if (degenerate(normal_poly(traj), scale_of(traj))) return std::nullopt;
  // With no separation the squared residual only has double roots; the
  // signed plane product has the same roots as simple ones.
  const bool touching = d_sep == 0.0;
  const Polynomial f = touching ? plane_polynomial(traj) : separation_polynomial(traj, d_sep);
  if ((touching ? f(0.0) == 0.0 : f(0.0) <= 0.0) && inside(traj.at(0.0), beta)) return 0.0;
  const Polynomial df = f.derivative();
  const double scale = separation_scale(traj, d_sep);
  std::optional<double> hit;
  for_each_root(
      f, 0.0, 1.0, kRootTol,
      [&](double s) {
        if (entering_only && !touching && df(s) > 0.0) return false;
        if (!inside(traj.at(s), beta)) return false;
        hit = s;
        return true;
      },
      kNoise * (touching ? std::sqrt(scale) : scale));
  return hit;
}

template <class S>
S separation_residual(const std::array<Vec3T<S>, 4>& p, double d_sep) {
  const Vec3T<S> n = (p[1] - p[0]).cross(p[2] - p[0]);
  const S wn = (p[3] - p[0]).dot(n);
  return wn * wn - d_sep * d_sep * n.squaredNorm();
}

template <class S>
struct PairEval {
  S value;
  Vec3T<S> normal;
  S area;
  S normal_speed;
};

// Value of the pair at unit contact time s. Positions move linearly from x0
// to the candidate x1; the vertex velocity is taken relative to the
// triangle's material point under it.
template <class S>
PairEval<S> evaluate(const std::array<Vec3, 4>& x0, const std::array<Vec3T<S>, 4>& x1, const S& s,
                     const ContactParams& params) {
  using std::sqrt;
  std::array<Vec3T<S>, 4> p, u;
  for (int i = 0; i < 4; ++i) {
    const Vec3T<S> d = x1[i] - x0[i].template cast<S>();
    u[i] = d / S(params.dt);
    p[i] = x0[i].template cast<S>() + d * s;
  }
  const Vec3T<S> e1 = p[1] - p[0];
  const Vec3T<S> e2 = p[2] - p[0];
  const Vec3T<S> w = p[3] - p[0];
  const Vec3T<S> cross = e1.cross(e2);
  const S cross_norm = sqrt(cross.squaredNorm());
  const Vec3T<S> n = cross / cross_norm;
  const S d11 = e1.dot(e1), d12 = e1.dot(e2), d22 = e2.dot(e2);
  const S w1 = w.dot(e1), w2 = w.dot(e2);
  const S denom = d11 * d22 - d12 * d12;
  const S bu = (d22 * w1 - d12 * w2) / denom;
  const S bv = (d11 * w2 - d12 * w1) / denom;
  const S ba = S(1.0) - bu - bv;
  const Vec3T<S> u_rel = u[3] - (u[0] * ba + u[1] * bu + u[2] * bv);
  const S un = u_rel.dot(n);
  const S area = S(0.5) * cross_norm;
  const S value = S(params.dt) * (S(1.0) - s) *
                  sqrt(S(params.epsilon * params.epsilon) + un * un) * area;
  return {value, n, area, un};
}

std::array<Vec3, 4> starts(const TriangleVertexTrajectory& t) {
  return {t.tri0[0], t.tri0[1], t.tri0[2], t.vertex0};
}

std::array<Vec3, 4> ends(const TriangleVertexTrajectory& t) {
  return {t.tri1[0], t.tri1[1], t.tri1[2], t.vertex1};
}

TriangleVertexTrajectory with_ends(const TriangleVertexTrajectory& t, const Gradient12& x1) {
  TriangleVertexTrajectory r = t;
  for (int i = 0; i < 3; ++i) r.tri1[i] = x1.segment<3>(3 * i);
  r.vertex1 = x1.segment<3>(9);
  return r;
}

Gradient12 flatten_ends(const TriangleVertexTrajectory& t) {
  Gradient12 x;
  const auto e = ends(t);
  for (int i = 0; i < 4; ++i) x.segment<3>(3 * i) = e[i];
  return x;
}

double value_only(const TriangleVertexTrajectory& traj, const ContactParams& params) {
  const auto c = pair_contact(traj, params, false);
  return c ? c->value : 0.0;
}

}  // namespace

std::array<Vec3, 4> TriangleVertexTrajectory::at(double s) const {
  return {tri0[0] + s * (tri1[0] - tri0[0]), tri0[1] + s * (tri1[1] - tri0[1]),
          tri0[2] + s * (tri1[2] - tri0[2]), vertex0 + s * (vertex1 - vertex0)};
}

Polynomial separation_polynomial(const TriangleVertexTrajectory& traj, double d_sep) {
  const auto n = normal_poly(traj);
  const Polynomial wn = plane_polynomial(traj);
  const Polynomial nn{n.n0.dot(n.n0), 2 * n.n0.dot(n.n1), n.n1.dot(n.n1) + 2 * n.n0.dot(n.n2),
                      2 * n.n1.dot(n.n2), n.n2.dot(n.n2)};
  return wn * wn - (d_sep * d_sep) * nn;
}

Vec3 projected_barycentric(const std::array<Vec3, 4>& p) {
  const Vec3 e1 = p[1] - p[0];
  const Vec3 e2 = p[2] - p[0];
  const Vec3 w = p[3] - p[0];
  const double d11 = e1.dot(e1), d12 = e1.dot(e2), d22 = e2.dot(e2);
  const double w1 = w.dot(e1), w2 = w.dot(e2);
  const double denom = d11 * d22 - d12 * d12;
  if (!(std::abs(denom) > 0.0)) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return Vec3(nan, nan, nan);
  }
  const double u = (d22 * w1 - d12 * w2) / denom;
  const double v = (d11 * w2 - d12 * w1) / denom;
  return Vec3(1.0 - u - v, u, v);
}

std::optional<double> earliest_contact_unit_time(const TriangleVertexTrajectory& traj, double d_sep,
                                                 double beta) {
  if (d_sep < 0.0) throw GeometryError("earliest_contact_time: negative separation");
  return find_contact(traj, d_sep, beta, false);
}

std::optional<double> earliest_contact_time(const TriangleVertexTrajectory& traj, double d_sep,
                                            double dt, double beta) {
  if (!(dt > 0.0)) throw GeometryError("earliest_contact_time: dt must be positive");
  const auto s = earliest_contact_unit_time(traj, d_sep, beta);
  if (!s) return std::nullopt;
  return *s * dt;
}

double pair_volume(double tau, double dt, double normal_speed, double epsilon, double tri_area) {
  return (dt - tau) * std::sqrt(epsilon * epsilon + normal_speed * normal_speed) * tri_area;
}

std::optional<PairContact> pair_contact(const TriangleVertexTrajectory& traj,
                                        const ContactParams& params, bool with_gradient) {
  const auto s = find_contact(traj, params.d_sep, params.beta, true);
  if (!s) return std::nullopt;

  const auto x0 = starts(traj);
  const auto x1 = ends(traj);
  PairContact out;
  out.tau = *s * params.dt;
  out.effective_separation = params.d_sep;
  {
    const auto e = evaluate<double>(x0, x1, *s, params);
    out.value = e.value;
    out.normal = e.normal;
    out.area = e.area;
    out.normal_speed = e.normal_speed;
  }
  if (!with_gradient) return out;

  std::array<Vec3T<AD>, 4> x1_ad;
  for (int i = 0; i < 4; ++i) {
    for (int d = 0; d < 3; ++d) x1_ad[i][d] = AD(x1[i][d], 12, 3 * i + d);
  }

  AD s_ad(*s);
  s_ad.derivatives().setZero();
  if (*s > 0.0) {
    // Implicit root: ds/dx1 = -(df/dx1) / (df/ds).
    std::array<Vec3T<AD>, 4> p;
    for (int i = 0; i < 4; ++i) p[i] = x0[i].cast<AD>() + (x1_ad[i] - x0[i].cast<AD>()) * AD(*s);
    const AD f = separation_residual(p, params.d_sep);
    const Polynomial poly = separation_polynomial(traj, params.d_sep);
    const double dfds = poly.derivative()(*s);
    if (!(std::abs(dfds) > 1e-9 * poly.max_abs_coeff())) {
      out.gradient = pair_volume_gradient_fd(traj, params, 1e-7, false);
      out.finite_difference = true;
      return out;
    }
    s_ad.derivatives() = -f.derivatives() / dfds;
  }
  const auto e = evaluate<AD>(x0, x1_ad, s_ad, params);
  out.gradient = e.value.derivatives();
  return out;
}

std::optional<PairContact> detect_pair(const TriangleVertexTrajectory& traj,
                                       const ContactParams& params, bool with_gradient) {
  const auto start = traj.at(0.0);
  const double d0 = plane_distance(start);
  // Held at the starting plane distance whether or not the projection is
  // inside yet: a vertex sliding sideways into the triangle's region while
  // already closer than d_sep crosses no root of the separation polynomial.
  if (d0 <= params.d_sep && d0 > 0.0) {
    ContactParams held = params;
    held.d_sep = d0 * (1.0 - params.start_shrink);
    return pair_contact(traj, held, with_gradient);
  }
  return pair_contact(traj, params, with_gradient);
}

Gradient12 pair_volume_gradient_fd(const TriangleVertexTrajectory& traj,
                                   const ContactParams& params, double rel_step, bool central) {
  const double h = rel_step * std::max(scale_of(traj), 1e-300);
  const Gradient12 x = flatten_ends(traj);
  const double f0 = central ? 0.0 : value_only(traj, params);
  Gradient12 g;
  for (int i = 0; i < 12; ++i) {
    Gradient12 xp = x;
    xp[i] += h;
    const double fp = value_only(with_ends(traj, xp), params);
    if (central) {
      Gradient12 xm = x;
      xm[i] -= h;
      g[i] = (fp - value_only(with_ends(traj, xm), params)) / (2 * h);
    } else {
      g[i] = (fp - f0) / h;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

int ContactDetection::owner_of(std::int64_t volume) const {
  const auto it = std::upper_bound(rank_offsets.begin(), rank_offsets.end(), volume);
  return static_cast<int>(it - rank_offsets.begin()) - 1;
}

std::map<std::int64_t, int> body_directory(const std::vector<MeshBody>& local,
                                           comm::Communicator& comm) {
  std::vector<std::pair<std::int64_t, int>> mine;
  for (const auto& b : local) mine.emplace_back(b.global_id, comm.rank());
  std::map<std::int64_t, int> dir;
  for (const auto& [id, rank] : comm.allgatherv(mine)) {
    if (!dir.emplace(id, rank).second) {
      throw GeometryError("body id " + std::to_string(id) + " owned by more than one rank");
    }
  }
  return dir;
}

std::vector<MeshBody> exchange_ghosts(const CandidatePairSet& pairs,
                                      const std::vector<MeshBody>& local,
                                      comm::Communicator& comm) {
  const auto dir = body_directory(local, comm);
  std::map<std::int64_t, const MeshBody*> mine;
  for (const auto& b : local) mine[b.global_id] = &b;

  // Owners push: pair (j, k) on this rank means k's owner holds (k, j) and
  // needs j as a ghost.
  std::set<std::pair<int, std::int64_t>> sends;
  for (const auto& [j, k] : pairs.pairs) {
    const auto owner_k = dir.find(k);
    if (owner_k == dir.end() || !mine.count(j)) {
      throw GeometryError("exchange_ghosts: unknown body in pair (" + std::to_string(j) + ", " +
                          std::to_string(k) + ")");
    }
    if (owner_k->second != comm.rank()) sends.emplace(owner_k->second, j);
  }
  std::map<int, std::vector<MeshBody>> outgoing;
  for (const auto& [dst, id] : sends) outgoing[dst].push_back(*mine.at(id));
  std::vector<MeshBody> ghosts;
  for (auto& env : comm.sparse_all_to_all(outgoing)) ghosts.push_back(std::move(env.payload));
  std::sort(ghosts.begin(), ghosts.end(),
            [](const MeshBody& a, const MeshBody& b) { return a.global_id < b.global_id; });
  return ghosts;
}

std::vector<IndexedBox> body_boxes(const std::vector<MeshBody>& local, double d_sep) {
  std::vector<IndexedBox> boxes;
  boxes.reserve(local.size());
  for (const auto& b : local) boxes.push_back({b.global_id, get_bounding_box(b, d_sep)});
  return boxes;
}

namespace {

struct PairHit {
  std::array<VertexKey, 4> keys;  // triangle a, b, c, then vertex
  PairContact contact;
};

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

SpaceTimeBox swept_box(std::initializer_list<const Vec3*> points, double grow) {
  SpaceTimeBox box{*(*points.begin()), *(*points.begin())};
  for (const auto* p : points) {
    box.lo = box.lo.cwiseMin(*p);
    box.hi = box.hi.cwiseMax(*p);
  }
  box.lo.array() -= grow;
  box.hi.array() += grow;
  return box;
}

void collect_hits(const MeshBody& vertex_body, const MeshBody& tri_body,
                  const ContactParams& params, std::vector<PairHit>& hits,
                  NarrowphaseStats* stats) {
  const auto& tv0 = tri_body.vertices0;
  const auto& tv1 = tri_body.vertices1;
  std::vector<SpaceTimeBox> tri_boxes;
  tri_boxes.reserve(tri_body.triangles.size());
  SpaceTimeBox all{Vec3::Constant(std::numeric_limits<double>::infinity()),
                   Vec3::Constant(-std::numeric_limits<double>::infinity())};
  for (const auto& t : tri_body.triangles) {
    double edge = 0.0;
    for (int e = 0; e < 3; ++e) {
      edge = std::max({edge, (tv0[t[e]] - tv0[t[(e + 1) % 3]]).norm(),
                       (tv1[t[e]] - tv1[t[(e + 1) % 3]]).norm()});
    }
    // The barycentric slack lets contacts sit up to ~2 beta edges outside.
    const auto box = swept_box({&tv0[t[0]], &tv0[t[1]], &tv0[t[2]], &tv1[t[0]], &tv1[t[1]], &tv1[t[2]]},
                               2.0 * params.beta * edge);
    all.lo = all.lo.cwiseMin(box.lo);
    all.hi = all.hi.cwiseMax(box.hi);
    tri_boxes.push_back(box);
  }
  for (std::size_t v = 0; v < vertex_body.vertices0.size(); ++v) {
    const auto& p0 = vertex_body.vertices0[v];
    const auto& p1 = vertex_body.vertices1[v];
    const auto vbox = swept_box({&p0, &p1}, params.d_sep);
    if (!aabb_overlap(vbox, all)) continue;
    for (std::size_t ti = 0; ti < tri_body.triangles.size(); ++ti) {
      if (!aabb_overlap(vbox, tri_boxes[ti])) continue;
      const auto& t = tri_body.triangles[ti];
      if (stats) ++stats->pairs_tested;
      TriangleVertexTrajectory traj{{tv0[t[0]], tv0[t[1]], tv0[t[2]]},
                                    {tv1[t[0]], tv1[t[1]], tv1[t[2]]},
                                    p0,
                                    p1};
      auto c = detect_pair(traj, params, true);
      if (!c) continue;
      if (stats) {
        ++stats->pairs_colliding;
        if (c->finite_difference) ++stats->fd_fallbacks;
      }
      const auto tb = tri_body.global_id;
      hits.push_back(PairHit{{VertexKey{tb, t[0]}, VertexKey{tb, t[1]}, VertexKey{tb, t[2]},
                              VertexKey{vertex_body.global_id, static_cast<int>(v)}},
                             *c});
    }
  }
}

}  // namespace

std::vector<ContactVolume> body_pair_volumes(const MeshBody& first, const MeshBody& second,
                                             const ContactParams& params,
                                             NarrowphaseStats* stats) {
  std::vector<PairHit> hits;
  collect_hits(first, second, params, hits, stats);
  collect_hits(second, first, params, hits, stats);
  if (hits.empty()) return {};

  std::map<VertexKey, std::size_t> slot;
  for (const auto& h : hits) {
    for (const auto& k : h.keys) slot.emplace(k, slot.size());
  }
  UnionFind uf(slot.size());
  for (const auto& h : hits) {
    for (int i = 1; i < 4; ++i) uf.unite(slot.at(h.keys[0]), slot.at(h.keys[i]));
  }

  struct Accum {
    ContactVolume volume;
    std::map<VertexKey, GradientEntry> entries;
    VertexKey first_key;
  };
  std::map<std::size_t, Accum> components;
  for (const auto& h : hits) {
    auto& acc = components[uf.find(slot.at(h.keys[0]))];
    if (acc.volume.pair_count == 0) {
      acc.volume.body_lo = std::min(first.global_id, second.global_id);
      acc.volume.body_hi = std::max(first.global_id, second.global_id);
      acc.volume.min_tau = h.contact.tau;
      acc.first_key = h.keys[0];
    }
    ++acc.volume.pair_count;
    acc.volume.value += h.contact.value;
    acc.volume.min_tau = std::min(acc.volume.min_tau, h.contact.tau);
    for (int i = 0; i < 4; ++i) {
      acc.first_key = std::min(acc.first_key, h.keys[i]);
      auto [it, fresh] = acc.entries.try_emplace(h.keys[i]);
      if (fresh) {
        it->second.vertex = h.keys[i];
        it->second.tau = h.contact.tau;
      }
      it->second.grad += h.contact.gradient.segment<3>(3 * i);
      it->second.tau = std::min(it->second.tau, h.contact.tau);
    }
  }
  std::vector<std::pair<VertexKey, ContactVolume>> ordered;
  for (auto& [root, acc] : components) {
    for (auto& [key, entry] : acc.entries) acc.volume.gradient.push_back(entry);
    ordered.emplace_back(acc.first_key, std::move(acc.volume));
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<ContactVolume> volumes;
  for (auto& [key, v] : ordered) volumes.push_back(std::move(v));
  return volumes;
}

ContactDetection compute_contact_volumes(const std::vector<MeshBody>& local,
                                         const ContactParams& params, comm::Communicator& comm) {
  const auto pairs = find_intersecting_box_pairs(body_boxes(local, params.d_sep), comm);
  const auto ghosts = exchange_ghosts(pairs, local, comm);
  return compute_contact_volumes(local, ghosts, pairs, params, comm);
}

namespace {

struct RoutedEntry {
  std::int64_t volume;
  VertexKey vertex;
  Vec3 grad;
  double tau;
};

}  // namespace

ContactDetection compute_contact_volumes(const std::vector<MeshBody>& local,
                                         const std::vector<MeshBody>& ghosts,
                                         const CandidatePairSet& pairs,
                                         const ContactParams& params, comm::Communicator& comm) {
  ContactDetection out;
  std::map<std::int64_t, const MeshBody*> lookup;
  for (const auto& b : local) lookup[b.global_id] = &b;
  for (const auto& b : ghosts) lookup.emplace(b.global_id, &b);

  // Both orientations of {j, k} are evaluated on the owner of min(j, k).
  NarrowphaseStats stats;
  for (const auto& [j, k] : pairs.pairs) {
    if (j > k) continue;
    const auto a = lookup.find(j);
    const auto b = lookup.find(k);
    if (a == lookup.end() || b == lookup.end()) {
      throw GeometryError("compute_contact_volumes: missing body data for pair (" +
                          std::to_string(j) + ", " + std::to_string(k) + ")");
    }
    auto vols = body_pair_volumes(*a->second, *b->second, params, &stats);
    for (auto& v : vols) out.volumes.push_back(std::move(v));
  }

  const auto counts = comm.allgather(static_cast<std::int64_t>(out.volumes.size()));
  const std::int64_t offset = comm.scan_exclusive(static_cast<std::int64_t>(out.volumes.size()));
  out.rank_offsets.assign(counts.size() + 1, 0);
  for (std::size_t q = 0; q < counts.size(); ++q) out.rank_offsets[q + 1] = out.rank_offsets[q] + counts[q];
  for (std::size_t i = 0; i < out.volumes.size(); ++i) {
    out.volumes[i].global_index = offset + static_cast<std::int64_t>(i);
  }

  // Route Jacobian entries to the vertex owners; each vertex keeps the volume
  // where it made contact first (smallest tau, then smallest index).
  const auto dir = body_directory(local, comm);
  std::map<int, std::vector<RoutedEntry>> outgoing;
  for (const auto& v : out.volumes) {
    for (const auto& e : v.gradient) {
      outgoing[dir.at(e.vertex.body)].push_back({v.global_index, e.vertex, e.grad, e.tau});
    }
  }
  auto incoming = comm.sparse_all_to_all(outgoing);
  std::sort(incoming.begin(), incoming.end(), [](const auto& a, const auto& b) {
    return std::tie(a.payload.vertex, a.payload.volume) < std::tie(b.payload.vertex, b.payload.volume);
  });
  for (const auto& b : local) out.jacobian[b.global_id].assign(b.vertex_count(), JacobianColumn{});
  std::map<VertexKey, double> best_tau;
  for (const auto& env : incoming) {
    const auto& r = env.payload;
    auto& col = out.jacobian.at(r.vertex.body).at(static_cast<std::size_t>(r.vertex.vertex));
    if (col.volume < 0) {
      col = {r.volume, r.grad};
      best_tau[r.vertex] = r.tau;
      continue;
    }
    ++stats.conflicts_resolved;
    if (r.tau < best_tau[r.vertex]) {
      col = {r.volume, r.grad};
      best_tau[r.vertex] = r.tau;
    }
  }

  // Global statistics; sums are formed in volume index order.
  const auto values = gather_volume_values(out, comm);
  out.stats = stats;
  const auto sum_i64 = [&](std::int64_t x) {
    std::int64_t s = 0;
    for (auto v : comm.allgather(x)) s += v;
    return s;
  };
  out.stats.pairs_tested = sum_i64(stats.pairs_tested);
  out.stats.pairs_colliding = sum_i64(stats.pairs_colliding);
  out.stats.fd_fallbacks = sum_i64(stats.fd_fallbacks);
  out.stats.conflicts_resolved = sum_i64(stats.conflicts_resolved);
  out.stats.volumes = out.global_count();
  double local_min_tau = std::numeric_limits<double>::infinity();
  for (const auto& v : out.volumes) local_min_tau = std::min(local_min_tau, v.min_tau);
  out.stats.min_tau = std::numeric_limits<double>::infinity();
  for (double t : comm.allgather(local_min_tau)) out.stats.min_tau = std::min(out.stats.min_tau, t);
  out.stats.total_value = 0.0;
  out.stats.max_value = 0.0;
  for (double v : values) {
    out.stats.total_value += v;
    out.stats.max_value = std::max(out.stats.max_value, v);
  }
  return out;
}

std::vector<double> gather_volume_values(const ContactDetection& detection,
                                         comm::Communicator& comm) {
  std::vector<double> mine;
  mine.reserve(detection.volumes.size());
  for (const auto& v : detection.volumes) mine.push_back(v.value);
  return comm.allgatherv(mine);
}

}  // namespace stiv
