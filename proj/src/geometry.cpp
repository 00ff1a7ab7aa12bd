#include "stiv/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace stiv {

namespace {

Mat3 mirror_matrix(bool mirror_x) {
  Mat3 s = Mat3::Identity();
  if (mirror_x) s(0, 0) = -1.0;
  return s;
}

}  // namespace

Vec3 LatLonParameterization::surface_point(double theta, double phi) const {
  const Vec3 local(radii.x() * std::sin(theta) * std::cos(phi),
                   radii.y() * std::sin(theta) * std::sin(phi), radii.z() * std::cos(theta));
  return center + mirror_matrix(mirror_x) * (rotation * local);
}

MeshBody triangulate_latlon(const LatLonParameterization& param, std::int64_t global_id) {
  const int n_lat = param.n_lat;
  const int n_lon = param.n_lon;
  if (n_lat < 2) throw GeometryError("n_lat must be >= 2, got " + std::to_string(n_lat));
  if (n_lon < 3) throw GeometryError("n_lon must be >= 3, got " + std::to_string(n_lon));
  if (!(param.radii.array() > 0.0).all()) throw GeometryError("radii must be positive");

  MeshBody body;
  body.global_id = global_id;
  body.param = param;
  const auto ring_vertex = [&](int i, int j) { return 1 + i * n_lon + (j % n_lon); };
  const int north = 0;
  const int south = n_lat * n_lon + 1;

  auto& v = body.vertices0;
  v.reserve(static_cast<std::size_t>(south + 1));
  v.push_back(param.surface_point(0.0, 0.0));
  for (int i = 0; i < n_lat; ++i) {
    const double theta = std::numbers::pi * (i + 1) / (n_lat + 1);
    for (int j = 0; j < n_lon; ++j) {
      v.push_back(param.surface_point(theta, 2.0 * std::numbers::pi * j / n_lon));
    }
  }
  v.push_back(param.surface_point(std::numbers::pi, 0.0));

  auto& t = body.triangles;
  t.reserve(static_cast<std::size_t>(2 * n_lat * n_lon));
  for (int j = 0; j < n_lon; ++j) t.push_back({north, ring_vertex(0, j), ring_vertex(0, j + 1)});
  for (int i = 0; i + 1 < n_lat; ++i) {
    for (int j = 0; j < n_lon; ++j) {
      const int a = ring_vertex(i, j), b = ring_vertex(i + 1, j);
      const int c = ring_vertex(i + 1, j + 1), d = ring_vertex(i, j + 1);
      t.push_back({a, b, c});
      t.push_back({a, c, d});
    }
  }
  for (int j = 0; j < n_lon; ++j) {
    t.push_back({south, ring_vertex(n_lat - 1, j + 1), ring_vertex(n_lat - 1, j)});
  }
  if (param.mirror_x) {
    for (auto& tri : t) std::swap(tri[1], tri[2]);
  }
  body.vertices1 = body.vertices0;
  return body;
}

MeshBody triangulate_latlon_sphere(int n_lat, int n_lon, const Vec3& center, const Vec3& radii,
                                   const Mat3& rotation, bool mirror_x) {
  LatLonParameterization param;
  param.n_lat = n_lat;
  param.n_lon = n_lon;
  param.center = center;
  param.radii = radii;
  param.rotation = rotation;
  param.mirror_x = mirror_x;
  return triangulate_latlon(param);
}

MeshBody upsample_mesh(const MeshBody& body, int factor) {
  if (factor < 1) throw GeometryError("upsample factor must be >= 1");
  if (!body.param) throw GeometryError("upsample_mesh: body has no lat-lon parameterization");
  if (factor == 1) return body;
  auto param = *body.param;
  param.n_lat *= factor;
  param.n_lon *= factor;
  return triangulate_latlon(param, body.global_id);
}

double max_deviation_from_reference(const MeshBody& body) {
  if (!body.param) throw GeometryError("max_deviation_from_reference: no parameterization");
  const auto& p = *body.param;
  const Mat3 to_local = p.rotation.transpose() * mirror_matrix(p.mirror_x);
  const auto deviation = [&](const Vec3& x) {
    const Vec3 q = to_local * (x - p.center);
    const double s = q.cwiseQuotient(p.radii).norm();
    return (q - q / s).norm();
  };
  const auto& v = body.vertices0;
  double worst = 0.0;
  for (const auto& tri : body.triangles) {
    const Vec3 &a = v[tri[0]], &b = v[tri[1]], &c = v[tri[2]];
    worst = std::max({worst, deviation(a), deviation((a + b) / 2), deviation((b + c) / 2),
                      deviation((c + a) / 2), deviation((a + b + c) / 3)});
  }
  return worst;
}

MeshAudit audit_mesh(const MeshBody& body) {
  MeshAudit audit;
  audit.vertices = body.vertices0.size();
  audit.faces = body.triangles.size();
  // directed edge -> use count
  std::map<std::pair<int, int>, int> directed;
  bool indices_ok = true;
  const int n = static_cast<int>(body.vertices0.size());
  for (const auto& tri : body.triangles) {
    for (int e = 0; e < 3; ++e) {
      const int a = tri[e], b = tri[(e + 1) % 3];
      if (a < 0 || a >= n || b < 0 || b >= n || a == b) indices_ok = false;
      ++directed[{a, b}];
    }
  }
  std::map<std::pair<int, int>, int> undirected;
  for (const auto& [edge, count] : directed) {
    undirected[{std::min(edge.first, edge.second), std::max(edge.first, edge.second)}] += count;
  }
  audit.edges = undirected.size();
  audit.closed = indices_ok && !undirected.empty();
  audit.oriented = audit.closed;
  for (const auto& [edge, count] : undirected) {
    if (count != 2) audit.closed = false;
    const auto fwd = directed.find(edge);
    const auto bwd = directed.find({edge.second, edge.first});
    if (fwd == directed.end() || bwd == directed.end() || fwd->second != 1 || bwd->second != 1) {
      audit.oriented = false;
    }
  }
  audit.euler_characteristic =
      static_cast<int>(audit.vertices) - static_cast<int>(audit.edges) + static_cast<int>(audit.faces);
  if (indices_ok) {
    double vol = 0.0;
    for (const auto& tri : body.triangles) {
      const auto& v = body.vertices0;
      vol += v[tri[0]].dot(v[tri[1]].cross(v[tri[2]]));
    }
    audit.signed_volume = vol / 6.0;
  }
  return audit;
}

void require_valid_mesh(const MeshBody& body) {
  const auto audit = audit_mesh(body);
  const std::string id = "body " + std::to_string(body.global_id);
  if (body.vertices0.size() != body.vertices1.size()) {
    throw GeometryError(id + ": vertices0/vertices1 length mismatch");
  }
  if (!audit.closed) throw GeometryError(id + ": mesh is not closed");
  if (!audit.oriented) throw GeometryError(id + ": mesh is not consistently oriented");
  if (audit.euler_characteristic != 2) {
    throw GeometryError(id + ": Euler characteristic " + std::to_string(audit.euler_characteristic));
  }
  if (!(audit.signed_volume > 0.0)) throw GeometryError(id + ": triangles face inward");
}

bool SpaceTimeBox::contains(const Vec3& p, double slack) const {
  return (p.array() >= lo.array() - slack).all() && (p.array() <= hi.array() + slack).all();
}

bool SpaceTimeBox::contains(const SpaceTimeBox& other) const {
  return (other.lo.array() >= lo.array()).all() && (other.hi.array() <= hi.array()).all();
}

SpaceTimeBox get_bounding_box(std::span<const Vec3> points0, std::span<const Vec3> points1,
                              double d_m_eff) {
  if (d_m_eff < 0.0) throw GeometryError("get_bounding_box: negative separation");
  if (points0.empty() && points1.empty()) throw GeometryError("get_bounding_box: no vertices");
  SpaceTimeBox box;
  box.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  box.hi = -box.lo;
  for (const auto& set : {points0, points1}) {
    for (const auto& p : set) {
      box.lo = box.lo.cwiseMin(p);
      box.hi = box.hi.cwiseMax(p);
    }
  }
  box.lo.array() -= d_m_eff / 2;
  box.hi.array() += d_m_eff / 2;
  return box;
}

SpaceTimeBox get_bounding_box(const MeshBody& body, double d_m_eff) {
  return get_bounding_box(body.vertices0, body.vertices1, d_m_eff);
}

int check_points_per_axis(double extent, double spacing) {
  if (!(spacing > 0.0)) throw GeometryError("check point spacing must be positive");
  if (!(extent > 0.0)) return 1;
  // floor + 2 keeps the lattice step strictly below `spacing`; the 1e-9
  // guards against a ratio that lands on an integer after rounding.
  return static_cast<int>(std::floor(extent / spacing * (1.0 + 1e-9))) + 2;
}

std::vector<CheckPoint> generate_check_points(const SpaceTimeBox& box, double spacing,
                                              std::int64_t box_index,
                                              std::int64_t first_global_index) {
  const Vec3 extent = box.hi - box.lo;
  std::array<int, 3> k{};
  for (int d = 0; d < 3; ++d) k[d] = check_points_per_axis(extent[d], spacing);
  const auto coord = [&](int d, int i) {
    if (k[d] == 1) return box.lo[d];
    if (i == k[d] - 1) return box.hi[d];
    return box.lo[d] + extent[d] * i / (k[d] - 1);
  };
  std::vector<CheckPoint> points;
  points.reserve(static_cast<std::size_t>(k[0]) * k[1] * k[2]);
  std::int64_t index = first_global_index;
  for (int iz = 0; iz < k[2]; ++iz) {
    for (int iy = 0; iy < k[1]; ++iy) {
      for (int ix = 0; ix < k[0]; ++ix) {
        CheckPoint cp;
        cp.position = Vec3(coord(0, ix), coord(1, iy), coord(2, iz));
        cp.global_index = index++;
        cp.box_index = box_index;
        cp.box_lo = box.lo;
        cp.box_hi = box.hi;
        points.push_back(cp);
      }
    }
  }
  return points;
}

Vec3 background_velocity(const BackgroundFlow& flow, const Vec3& x) {
  switch (flow.kind) {
    case BackgroundFlow::Kind::none:
      return Vec3::Zero();
    case BackgroundFlow::Kind::extensional:
      return Vec3(-x.x(), x.y() / 2, x.z() / 2);
    case BackgroundFlow::Kind::shear:
      return Vec3(flow.shear_rate * x.z(), 0.0, 0.0);
    case BackgroundFlow::Kind::taylor_vortex: {
      const double k = 2.0 * std::numbers::pi / flow.vortex_period;
      const double sx = std::sin(k * x.x()), cx = std::cos(k * x.x());
      const double sy = std::sin(k * x.y()), cy = std::cos(k * x.y());
      const double sz = std::sin(k * x.z());
      // The e2 component carries a minus sign so the field is solenoidal.
      return flow.vortex_scale * Vec3(sx * cy * sz, -cx * sy * sz, 0.0);
    }
  }
  return Vec3::Zero();
}

std::string to_string(BackgroundFlow::Kind kind) {
  switch (kind) {
    case BackgroundFlow::Kind::none: return "none";
    case BackgroundFlow::Kind::extensional: return "extensional";
    case BackgroundFlow::Kind::shear: return "shear";
    case BackgroundFlow::Kind::taylor_vortex: return "taylor_vortex";
  }
  return "unknown";
}

Vec3 centroid(std::span<const Vec3> points) {
  Vec3 sum = Vec3::Zero();
  for (const auto& p : points) sum += p;
  return points.empty() ? sum : Vec3(sum / static_cast<double>(points.size()));
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

std::vector<std::array<int, 2>> unique_edges(const MeshBody& body) {
  std::vector<std::array<int, 2>> edges;
  std::map<std::pair<int, int>, bool> seen;
  for (const auto& tri : body.triangles) {
    for (int e = 0; e < 3; ++e) {
      const int a = std::min(tri[e], tri[(e + 1) % 3]);
      const int b = std::max(tri[e], tri[(e + 1) % 3]);
      if (seen.emplace(std::pair{a, b}, true).second) edges.push_back({a, b});
    }
  }
  return edges;
}

double mean_edge_length(const MeshBody& body) {
  const auto edges = unique_edges(body);
  if (edges.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& e : edges) sum += (body.vertices0[e[0]] - body.vertices0[e[1]]).norm();
  return sum / static_cast<double>(edges.size());
}

std::vector<double> vertex_area_weights(const MeshBody& body) {
  std::vector<double> w(body.vertices0.size(), 0.0);
  for (const auto& tri : body.triangles) {
    const double a =
        triangle_area(body.vertices0[tri[0]], body.vertices0[tri[1]], body.vertices0[tri[2]]) / 3;
    for (int v : tri) w[v] += a;
  }
  return w;
}

}  // namespace stiv
