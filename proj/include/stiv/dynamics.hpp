#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "stiv/comm.hpp"
#include "stiv/contact_solver.hpp"
#include "stiv/geometry.hpp"
#include "stiv/narrowphase.hpp"

namespace stiv {

/// Linear force -> velocity map standing in for the single-layer operator.
struct MobilityModel {
  enum class Kind { drag, regularized_stokeslet, rigid };
  Kind kind = Kind::drag;
  double drag = 1.0;            // drag: u = m f per vertex
  double viscosity = 1.0;       // regularized_stokeslet: mu
  double regularization = 0.0;  // regularized_stokeslet: delta, 0 = mean edge length of the source body
  double translational = 1.0;   // rigid: V = m_t F
  double rotational = 0.0;      // rigid: omega = m_r T (torque about the centroid)

  static MobilityModel make_drag(double m) { return {Kind::drag, m}; }
  static MobilityModel make_stokeslet(double mu, double delta = 0.0) {
    MobilityModel r;
    r.kind = Kind::regularized_stokeslet;
    r.viscosity = mu;
    r.regularization = delta;
    return r;
  }
  static MobilityModel make_rigid(double m_t, double m_r = 0.0) {
    MobilityModel r;
    r.kind = Kind::rigid;
    r.translational = m_t;
    r.rotational = m_r;
    return r;
  }
};

std::string to_string(MobilityModel::Kind kind);

/// Regularized Stokeslet [(r^2 + 2 delta^2) I + r r^T] / (8 pi mu (r^2 + delta^2)^(3/2)).
Mat3 regularized_stokeslet(const Vec3& r, double viscosity, double delta);

/// Per-vertex velocities from per-vertex forces on all listed bodies. For
/// the regularized Stokeslet the forces are densities, weighted by vertex
/// areas and summed over every body; drag and rigid act per body.
std::vector<std::vector<Vec3>> mobility_velocity(const MobilityModel& model,
                                                 const std::vector<MeshBody>& bodies,
                                                 const std::vector<std::vector<Vec3>>& forces);

/// dt times the per-body (self) mobility acting on point forces, at vertices0.
std::unique_ptr<StepOperator> make_step_operator(const MobilityModel& model, double dt);

/// Angular velocity 0.5 curl u at x (central differences).
Vec3 flow_rotation_rate(const BackgroundFlow& flow, const Vec3& x, double h);

enum class Stepper { cli, li, repulsion };
std::string to_string(Stepper s);

struct StepConfig {
  BackgroundFlow flow;
  MobilityModel mobility;
  double dt = 0.01;
  /// Edge springs towards the initial edge lengths; shape regularization for
  /// deformable mobilities, zero disables.
  double spring_stiffness = 0.0;

  double d_m = 0.0;
  double alpha = 0.05;
  double epsilon = 1.0;
  double beta = kEdgeTolerance;
  NcpOptions ncp;

  double repulsion = 0.0;            // C_r
  double activation_distance = 0.0;  // d_act

  double d_eff() const { return (1.0 + 2.0 * alpha) * d_m; }
  ContactParams contact_params() const;
};

struct SimState {
  std::vector<MeshBody> bodies;  // owned by this rank, ascending id
  std::map<std::int64_t, std::vector<double>> rest_lengths;  // per body, unique_edges order
  ForceMap contact_force;  // of the last step
  double time = 0.0;
  std::int64_t step = 0;
};

/// Wraps the local bodies; rest lengths are taken from vertices0.
SimState make_state(std::vector<MeshBody> local);

struct StepReport {
  int ncp_iterations = 0;
  int newton_iterations = 0;
  double total_volume = 0.0;  // interference before resolution
  double total_lambda = 0.0;
  std::int64_t contact_volumes = 0;
  std::vector<double> volume_history;
  double repulsion_force = 0.0;  // summed magnitude, global
};

/// Unconstrained step: X1 = X0 + dt (u_inf + mobility(forces)). Rigid
/// bodies translate with the flow at their centroid and rotate with half
/// its vorticity.
StepReport step_li(SimState& state, const StepConfig& config, comm::Communicator& comm);

/// step_li candidate followed by contact resolution at d_eff.
StepReport step_cli(SimState& state, const StepConfig& config, comm::Communicator& comm);

/// step_li with pairwise repulsion C_r (1 - d / d_act)^2 between each vertex
/// and its nearest vertex on every other body closer than d_act.
StepReport step_repulsion(SimState& state, const StepConfig& config, comm::Communicator& comm);

StepReport advance(SimState& state, Stepper stepper, const StepConfig& config,
                   comm::Communicator& comm);

/// Closest distance from p to triangle (a, b, c).
double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Generalized winding number of a closed mesh around p (1 inside, 0 outside).
double winding_number(const MeshBody& body, const Vec3& p);

/// Smallest signed vertex-triangle distance between distinct bodies among
/// pairs whose static boxes (grown by d_probe) overlap, at vertices0.
/// Negative when a vertex lies inside another body; +inf without candidates.
double min_separation(const std::vector<MeshBody>& local, double d_probe, comm::Communicator& comm);

}  // namespace stiv
