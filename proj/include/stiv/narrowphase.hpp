#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "stiv/broadphase.hpp"
#include "stiv/comm.hpp"
#include "stiv/geometry.hpp"
#include "stiv/polynomial.hpp"

namespace stiv {

/// Barycentric slack for accepting a plane contact near triangle edges.
inline constexpr double kEdgeTolerance = 0.05;

/// Linear trajectories of a triangle (a, b, c) and a vertex over one step.
struct TriangleVertexTrajectory {
  std::array<Vec3, 3> tri0;
  std::array<Vec3, 3> tri1;
  Vec3 vertex0 = Vec3::Zero();
  Vec3 vertex1 = Vec3::Zero();

  /// Positions at unit time s in [0, 1]; index 3 is the vertex.
  std::array<Vec3, 4> at(double s) const;
};

/// Degree-six polynomial in unit time s whose roots are the instants the
/// vertex is exactly `d_sep` from the triangle's plane:
/// (w . n)^2 - d_sep^2 |n|^2 with n = (b - a) x (c - a), w = x_k - a.
Polynomial separation_polynomial(const TriangleVertexTrajectory& traj, double d_sep);

/// Barycentric coordinates of the vertex's projection onto the triangle plane.
Vec3 projected_barycentric(const std::array<Vec3, 4>& points);

/// First unit time in [0, 1] at which the vertex is within `d_sep` of the
/// triangle plane with its projection inside the triangle grown by `beta` in
/// barycentric coordinates: s = 0 if that already holds at the start,
/// otherwise the earliest validated root.
std::optional<double> earliest_contact_unit_time(const TriangleVertexTrajectory& traj, double d_sep,
                                                 double beta = kEdgeTolerance);

/// earliest_contact_unit_time rescaled to [0, dt]. Returns nullopt for a
/// degenerate (zero-area) triangle.
std::optional<double> earliest_contact_time(const TriangleVertexTrajectory& traj, double d_sep,
                                            double dt, double beta = kEdgeTolerance);

/// (dt - tau) * sqrt(eps^2 + (U . n)^2) * area.
double pair_volume(double tau, double dt, double normal_speed, double epsilon, double tri_area);

struct ContactParams {
  double d_sep = 0.0;     // effective separation d_m_eff
  double epsilon = 1.0;   // velocity scale in the space-time metric
  double dt = 1.0;
  double beta = kEdgeTolerance;
  /// A vertex that starts closer than d_sep to a triangle plane is held at its starting
  /// plane distance shrunk by this relative amount.
  double start_shrink = 1e-6;
};

using Gradient12 = Eigen::Matrix<double, 12, 1>;

/// One colliding triangle-vertex pair. The gradient is taken with respect to
/// the candidate positions of (a, b, c, vertex), 3 components each.
struct PairContact {
  double tau = 0.0;
  double value = 0.0;
  Vec3 normal = Vec3::Zero();  // unit triangle normal at tau
  double area = 0.0;           // triangle area at tau
  double normal_speed = 0.0;   // relative vertex velocity along the normal
  Gradient12 gradient = Gradient12::Zero();
  bool finite_difference = false;  // tau was not a simple root
  double effective_separation = 0.0;
};

/// Contact value of a pair with separation exactly `params.d_sep` (no
/// start-inside adjustment). Uses the vertex velocity relative to the
/// triangle's material point under it.
std::optional<PairContact> pair_contact(const TriangleVertexTrajectory& traj,
                                        const ContactParams& params, bool with_gradient = true);

/// pair_contact with the start-inside adjustment used by the detection pipeline.
std::optional<PairContact> detect_pair(const TriangleVertexTrajectory& traj,
                                       const ContactParams& params, bool with_gradient = true);

/// Finite-difference reference gradient of the pair value (central if
/// `central`, else forward). Step is `rel_step` times the trajectory scale.
Gradient12 pair_volume_gradient_fd(const TriangleVertexTrajectory& traj,
                                   const ContactParams& params, double rel_step, bool central);

// ---------------------------------------------------------------------------
// Distributed contact volumes

struct VertexKey {
  std::int64_t body = 0;
  int vertex = 0;
  auto operator<=>(const VertexKey&) const = default;
};

struct GradientEntry {
  VertexKey vertex;
  Vec3 grad = Vec3::Zero();
  double tau = 0.0;  // earliest contact time of this vertex within the volume
};

struct ContactVolume {
  std::int64_t global_index = -1;
  double value = 0.0;
  std::int64_t body_lo = 0;
  std::int64_t body_hi = 0;
  double min_tau = 0.0;
  int pair_count = 0;
  std::vector<GradientEntry> gradient;  // sorted by vertex
};

/// Compact column storage of the Jacobian for one owned body: volume index
/// (-1 when the vertex touches no volume) and gradient per vertex.
struct JacobianColumn {
  std::int64_t volume = -1;
  Vec3 grad = Vec3::Zero();
};

struct NarrowphaseStats {
  std::int64_t pairs_tested = 0;     // triangle-vertex pairs past the swept-box cull
  std::int64_t pairs_colliding = 0;
  std::int64_t fd_fallbacks = 0;
  std::int64_t conflicts_resolved = 0;  // gradient entries dropped for vertex uniqueness
  std::int64_t volumes = 0;             // global
  double min_tau = 0.0;                 // global, +inf without contact
  double total_value = 0.0;             // global, summed in volume index order
  double max_value = 0.0;               // global
};

struct ContactDetection {
  std::vector<ContactVolume> volumes;  // owned by this rank, ascending index
  std::vector<std::int64_t> rank_offsets;  // volume index ranges per rank, size P + 1
  std::map<std::int64_t, std::vector<JacobianColumn>> jacobian;  // local body id -> columns
  NarrowphaseStats stats;

  std::int64_t global_count() const { return rank_offsets.empty() ? 0 : rank_offsets.back(); }
  std::int64_t offset(int rank) const { return rank_offsets[rank]; }
  int owner_of(std::int64_t volume) const;
};

/// Body id -> owning rank, built collectively from every rank's local ids.
std::map<std::int64_t, int> body_directory(const std::vector<MeshBody>& local,
                                           comm::Communicator& comm);

/// Copies of the non-local bodies named in `pairs`, sent by their owners.
std::vector<MeshBody> exchange_ghosts(const CandidatePairSet& pairs,
                                      const std::vector<MeshBody>& local,
                                      comm::Communicator& comm);

/// Space-time boxes of the local bodies, inflated for `d_sep`.
std::vector<IndexedBox> body_boxes(const std::vector<MeshBody>& local, double d_sep);

/// Colliding triangle-vertex pairs between two bodies, in both orientations,
/// merged into contact volumes (connected components over shared vertices).
/// Global indices are left unset.
std::vector<ContactVolume> body_pair_volumes(const MeshBody& first, const MeshBody& second,
                                             const ContactParams& params,
                                             NarrowphaseStats* stats = nullptr);

/// Full collective pipeline: broad phase, ghost exchange, pair volumes on
/// the rank owning the lower body id, global indexing, Jacobian routing to
/// vertex owners with one volume per vertex.
ContactDetection compute_contact_volumes(const std::vector<MeshBody>& local,
                                         const ContactParams& params, comm::Communicator& comm);

/// Same, reusing a candidate set and ghosts already computed.
ContactDetection compute_contact_volumes(const std::vector<MeshBody>& local,
                                         const std::vector<MeshBody>& ghosts,
                                         const CandidatePairSet& pairs,
                                         const ContactParams& params, comm::Communicator& comm);

/// Every volume's values gathered in global index order (collective).
std::vector<double> gather_volume_values(const ContactDetection& detection,
                                         comm::Communicator& comm);

}  // namespace stiv
