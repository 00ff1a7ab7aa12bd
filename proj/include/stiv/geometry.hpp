#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace stiv {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Triangle = std::array<int, 3>;

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Analytic reference surface a lat-lon body was sampled from. Kept on the
/// body so it can be resampled at a finer resolution.
struct LatLonParameterization {
  int n_lat = 0;
  int n_lon = 0;
  Vec3 center = Vec3::Zero();
  Vec3 radii = Vec3::Ones();
  Mat3 rotation = Mat3::Identity();
  /// Reflect x about the body center (mirror image of the unreflected body).
  bool mirror_x = false;

  /// Point on the reference ellipsoid for polar angle theta in [0, pi] and
  /// longitude phi.
  Vec3 surface_point(double theta, double phi) const;
};

/// Closed triangle mesh with start-of-step (vertices0) and candidate
/// end-of-step (vertices1) positions. Triangles are counterclockwise seen
/// from outside.
struct MeshBody {
  std::int64_t global_id = 0;
  std::vector<Vec3> vertices0;
  std::vector<Vec3> vertices1;
  std::vector<Triangle> triangles;
  std::optional<LatLonParameterization> param;

  std::size_t vertex_count() const { return vertices0.size(); }
  /// Sets vertices0 = vertices1 (accept the candidate).
  void accept_candidate() { vertices0 = vertices1; }
};

struct MeshAudit {
  bool closed = false;    // every edge shared by exactly two triangles
  bool oriented = false;  // the two uses of each edge run in opposite directions
  int euler_characteristic = 0;
  double signed_volume = 0.0;
  std::size_t vertices = 0, edges = 0, faces = 0;

  bool ok() const { return closed && oriented && euler_characteristic == 2 && signed_volume > 0.0; }
};

MeshAudit audit_mesh(const MeshBody& body);
/// Throws GeometryError describing the first failed check.
void require_valid_mesh(const MeshBody& body);

/// Lat-lon triangulation of an ellipsoid: n_lat interior rings of n_lon
/// vertices plus two poles. Quads split along (i,j)-(i+1,j+1).
MeshBody triangulate_latlon_sphere(int n_lat, int n_lon, const Vec3& center, const Vec3& radii,
                                   const Mat3& rotation = Mat3::Identity(), bool mirror_x = false);
MeshBody triangulate_latlon(const LatLonParameterization& param, std::int64_t global_id = 0);

/// Resamples the body's reference surface with n_lat, n_lon multiplied by
/// `factor`. Both position sets are set to the resampled surface.
MeshBody upsample_mesh(const MeshBody& body, int factor);

/// Largest distance from sampled mesh points (vertices, edge midpoints and
/// triangle centroids) to the reference ellipsoid.
double max_deviation_from_reference(const MeshBody& body);

struct SpaceTimeBox {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  double diagonal() const { return (hi - lo).norm(); }
  bool contains(const Vec3& p, double slack = 0.0) const;
  bool contains(const SpaceTimeBox& other) const;
};

/// Box around vertices0 and vertices1, grown by d_m_eff / 2 on every face.
SpaceTimeBox get_bounding_box(const MeshBody& body, double d_m_eff);
SpaceTimeBox get_bounding_box(std::span<const Vec3> points0, std::span<const Vec3> points1,
                              double d_m_eff);

struct CheckPoint {
  Vec3 position = Vec3::Zero();
  std::int64_t global_index = 0;
  std::int64_t box_index = 0;
  std::uint64_t morton = 0;
  Vec3 box_lo = Vec3::Zero();
  Vec3 box_hi = Vec3::Zero();
};

/// Uniform lattice inside the box with spacing strictly below `spacing` on
/// every non-degenerate axis (both box faces included).
std::vector<CheckPoint> generate_check_points(const SpaceTimeBox& box, double spacing,
                                              std::int64_t box_index,
                                              std::int64_t first_global_index);
/// Points per axis used by generate_check_points.
int check_points_per_axis(double extent, double spacing);

struct BackgroundFlow {
  enum class Kind { none, extensional, shear, taylor_vortex };
  Kind kind = Kind::none;
  double shear_rate = 1.0;      // shear: u = (chi z, 0, 0)
  double vortex_scale = 1.0;    // taylor_vortex amplitude
  double vortex_period = 1.0;   // taylor_vortex periodic length L

  static BackgroundFlow none() { return {}; }
  static BackgroundFlow extensional() { return {Kind::extensional}; }
  static BackgroundFlow shear(double chi) { return {Kind::shear, chi}; }
  static BackgroundFlow taylor_vortex(double alpha, double length) {
    return {Kind::taylor_vortex, 1.0, alpha, length};
  }
};

Vec3 background_velocity(const BackgroundFlow& flow, const Vec3& x);
std::string to_string(BackgroundFlow::Kind kind);

// Small mesh helpers shared by the later stages.
Vec3 centroid(std::span<const Vec3> points);
double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);
double mean_edge_length(const MeshBody& body);
/// Unique undirected edges (i < j) in first-seen order.
std::vector<std::array<int, 2>> unique_edges(const MeshBody& body);
/// Per-vertex area weights (one third of each incident triangle area) at vertices0.
std::vector<double> vertex_area_weights(const MeshBody& body);

}  // namespace stiv
