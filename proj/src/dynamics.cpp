#include "stiv/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Geometry>

#include "stiv/broadphase.hpp"

namespace stiv {

std::string to_string(MobilityModel::Kind kind) {
  switch (kind) {
    case MobilityModel::Kind::drag: return "drag";
    case MobilityModel::Kind::regularized_stokeslet: return "regularized_stokeslet";
    case MobilityModel::Kind::rigid: return "rigid";
  }
  return "unknown";
}

std::string to_string(Stepper s) {
  switch (s) {
    case Stepper::cli: return "cli";
    case Stepper::li: return "li";
    case Stepper::repulsion: return "repulsion";
  }
  return "unknown";
}

Mat3 regularized_stokeslet(const Vec3& r, double viscosity, double delta) {
  const double r2 = r.squaredNorm();
  const double d2 = delta * delta;
  const double denom = 8.0 * std::numbers::pi * viscosity * std::pow(r2 + d2, 1.5);
  return ((r2 + 2.0 * d2) * Mat3::Identity() + r * r.transpose()) / denom;
}

namespace {

struct Source {
  Vec3 x;
  Vec3 f;  // already weighted
  double delta;
};

double stokeslet_delta(const MobilityModel& model, const MeshBody& body) {
  return model.regularization > 0.0 ? model.regularization : mean_edge_length(body);
}

Vec3 stokeslet_sum(const Vec3& target, const std::vector<Source>& sources, double viscosity) {
  Vec3 u = Vec3::Zero();
  for (const auto& s : sources) u += regularized_stokeslet(target - s.x, viscosity, s.delta) * s.f;
  return u;
}

std::vector<Source> weighted_sources(const MobilityModel& model, const MeshBody& body,
                                     const std::vector<Vec3>& density) {
  const auto w = vertex_area_weights(body);
  const double delta = stokeslet_delta(model, body);
  std::vector<Source> out;
  out.reserve(body.vertex_count());
  for (std::size_t v = 0; v < body.vertex_count(); ++v) {
    out.push_back({body.vertices0[v], density[v] * w[v], delta});
  }
  return out;
}

void require_finite(const std::vector<Vec3>& forces) {
  for (const auto& f : forces) {
    if (!f.allFinite()) throw SolverError("mobility: non-finite force");
  }
}

// Rigid response: V = m_t sum f, omega = m_r sum r x f.
std::pair<Vec3, Vec3> rigid_response(const MobilityModel& model, const MeshBody& body,
                                     const std::vector<Vec3>& forces) {
  const Vec3 c = centroid(body.vertices0);
  Vec3 total = Vec3::Zero(), torque = Vec3::Zero();
  for (std::size_t v = 0; v < forces.size(); ++v) {
    total += forces[v];
    torque += (body.vertices0[v] - c).cross(forces[v]);
  }
  return {model.translational * total, model.rotational * torque};
}

class DragOperator final : public StepOperator {
 public:
  explicit DragOperator(double scale) : scale_(scale) {}
  std::vector<Vec3> apply(const MeshBody&, const std::vector<Vec3>& forces) const override {
    std::vector<Vec3> out(forces.size());
    for (std::size_t i = 0; i < forces.size(); ++i) out[i] = scale_ * forces[i];
    return out;
  }

 private:
  double scale_;
};

class StokesletOperator final : public StepOperator {
 public:
  StokesletOperator(MobilityModel model, double dt) : model_(model), dt_(dt) {}
  std::vector<Vec3> apply(const MeshBody& body, const std::vector<Vec3>& forces) const override {
    const double delta = stokeslet_delta(model_, body);
    std::vector<Vec3> out(forces.size(), Vec3::Zero());
    for (std::size_t j = 0; j < forces.size(); ++j) {
      if (forces[j].isZero(0.0)) continue;
      for (std::size_t i = 0; i < forces.size(); ++i) {
        out[i] += dt_ * (regularized_stokeslet(body.vertices0[i] - body.vertices0[j], model_.viscosity, delta) *
                         forces[j]);
      }
    }
    return out;
  }

 private:
  MobilityModel model_;
  double dt_;
};

class RigidOperator final : public StepOperator {
 public:
  RigidOperator(MobilityModel model, double dt) : model_(model), dt_(dt) {}
  std::vector<Vec3> apply(const MeshBody& body, const std::vector<Vec3>& forces) const override {
    const auto [vel, omega] = rigid_response(model_, body, forces);
    const Vec3 c = centroid(body.vertices0);
    std::vector<Vec3> out(forces.size());
    for (std::size_t i = 0; i < forces.size(); ++i) {
      out[i] = dt_ * (vel + omega.cross(body.vertices0[i] - c));
    }
    return out;
  }

 private:
  MobilityModel model_;
  double dt_;
};

}  // namespace

std::vector<std::vector<Vec3>> mobility_velocity(const MobilityModel& model,
                                                 const std::vector<MeshBody>& bodies,
                                                 const std::vector<std::vector<Vec3>>& forces) {
  if (forces.size() != bodies.size()) throw SolverError("mobility_velocity: one force set per body required");
  for (std::size_t b = 0; b < bodies.size(); ++b) {
    if (forces[b].size() != bodies[b].vertex_count()) {
      throw SolverError("mobility_velocity: force count mismatch for body " + std::to_string(bodies[b].global_id));
    }
    require_finite(forces[b]);
  }
  std::vector<std::vector<Vec3>> out(bodies.size());
  switch (model.kind) {
    case MobilityModel::Kind::drag:
      for (std::size_t b = 0; b < bodies.size(); ++b) {
        for (const auto& f : forces[b]) out[b].push_back(model.drag * f);
      }
      break;
    case MobilityModel::Kind::regularized_stokeslet: {
      std::vector<Source> sources;
      for (std::size_t b = 0; b < bodies.size(); ++b) {
        auto s = weighted_sources(model, bodies[b], forces[b]);
        sources.insert(sources.end(), s.begin(), s.end());
      }
      for (std::size_t b = 0; b < bodies.size(); ++b) {
        for (const auto& x : bodies[b].vertices0) out[b].push_back(stokeslet_sum(x, sources, model.viscosity));
      }
      break;
    }
    case MobilityModel::Kind::rigid:
      for (std::size_t b = 0; b < bodies.size(); ++b) {
        const auto [vel, omega] = rigid_response(model, bodies[b], forces[b]);
        const Vec3 c = centroid(bodies[b].vertices0);
        for (const auto& x : bodies[b].vertices0) out[b].push_back(vel + omega.cross(x - c));
      }
      break;
  }
  return out;
}

std::unique_ptr<StepOperator> make_step_operator(const MobilityModel& model, double dt) {
  switch (model.kind) {
    case MobilityModel::Kind::drag: return std::make_unique<DragOperator>(dt * model.drag);
    case MobilityModel::Kind::regularized_stokeslet: return std::make_unique<StokesletOperator>(model, dt);
    case MobilityModel::Kind::rigid: return std::make_unique<RigidOperator>(model, dt);
  }
  throw SolverError("make_step_operator: unknown mobility");
}

Vec3 flow_rotation_rate(const BackgroundFlow& flow, const Vec3& x, double h) {
  Mat3 grad;  // grad(i, j) = d u_i / d x_j
  for (int j = 0; j < 3; ++j) {
    Vec3 e = Vec3::Zero();
    e[j] = h;
    grad.col(j) = (background_velocity(flow, x + e) - background_velocity(flow, x - e)) / (2 * h);
  }
  return 0.5 * Vec3(grad(2, 1) - grad(1, 2), grad(0, 2) - grad(2, 0), grad(1, 0) - grad(0, 1));
}

ContactParams StepConfig::contact_params() const {
  ContactParams p;
  p.d_sep = d_eff();
  p.epsilon = epsilon;
  p.dt = dt;
  p.beta = beta;
  return p;
}

SimState make_state(std::vector<MeshBody> local) {
  SimState s;
  std::sort(local.begin(), local.end(),
            [](const MeshBody& a, const MeshBody& b) { return a.global_id < b.global_id; });
  for (auto& b : local) {
    require_valid_mesh(b);
    b.vertices1 = b.vertices0;
    auto& rest = s.rest_lengths[b.global_id];
    for (const auto& e : unique_edges(b)) rest.push_back((b.vertices0[e[0]] - b.vertices0[e[1]]).norm());
  }
  s.bodies = std::move(local);
  return s;
}

namespace {

std::vector<std::vector<Vec3>> spring_forces(const SimState& state, double k) {
  std::vector<std::vector<Vec3>> out;
  for (const auto& b : state.bodies) {
    auto& f = out.emplace_back(b.vertex_count(), Vec3::Zero());
    if (k == 0.0) continue;
    const auto& rest = state.rest_lengths.at(b.global_id);
    const auto edges = unique_edges(b);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const Vec3 d = b.vertices0[edges[e][1]] - b.vertices0[edges[e][0]];
      const double l = d.norm();
      if (l == 0.0) continue;
      const Vec3 pull = k * (l - rest[e]) * d / l;
      f[edges[e][0]] += pull;
      f[edges[e][1]] -= pull;
    }
  }
  return out;
}

// Sets vertices1 to the unconstrained candidate.
void unconstrained_candidate(SimState& state, const StepConfig& cfg,
                             const std::vector<std::vector<Vec3>>& forces, comm::Communicator& comm) {
  const double dt = cfg.dt;
  const auto& model = cfg.mobility;
  for (const auto& f : forces) require_finite(f);

  if (model.kind == MobilityModel::Kind::rigid) {
    for (std::size_t b = 0; b < state.bodies.size(); ++b) {
      auto& body = state.bodies[b];
      const Vec3 c = centroid(body.vertices0);
      const double h = 1e-5 * (1.0 + c.norm());
      const auto [vel, omega] = rigid_response(model, body, forces[b]);
      const Vec3 v = background_velocity(cfg.flow, c) + vel;
      const Vec3 w = flow_rotation_rate(cfg.flow, c, h) + omega;
      const double angle = w.norm() * dt;
      const Mat3 rot = angle > 0.0 ? Eigen::AngleAxisd(angle, w.normalized()).toRotationMatrix() : Mat3::Identity();
      for (std::size_t i = 0; i < body.vertex_count(); ++i) {
        body.vertices1[i] = c + dt * v + rot * (body.vertices0[i] - c);
      }
    }
    return;
  }

  std::vector<std::vector<Vec3>> vel;
  if (model.kind == MobilityModel::Kind::regularized_stokeslet) {
    // Sums run over every body's sources in global body order.
    std::vector<Source> mine;
    for (std::size_t b = 0; b < state.bodies.size(); ++b) {
      auto s = weighted_sources(model, state.bodies[b], forces[b]);
      mine.insert(mine.end(), s.begin(), s.end());
    }
    const auto sources = comm.allgatherv(mine);
    for (const auto& body : state.bodies) {
      auto& u = vel.emplace_back();
      for (const auto& x : body.vertices0) u.push_back(stokeslet_sum(x, sources, model.viscosity));
    }
  } else {
    vel = mobility_velocity(model, state.bodies, forces);
  }
  for (std::size_t b = 0; b < state.bodies.size(); ++b) {
    auto& body = state.bodies[b];
    for (std::size_t i = 0; i < body.vertex_count(); ++i) {
      body.vertices1[i] = body.vertices0[i] + dt * (background_velocity(cfg.flow, body.vertices0[i]) + vel[b][i]);
    }
  }
}

void accept(SimState& state, const StepConfig& cfg) {
  for (auto& b : state.bodies) {
    for (const auto& x : b.vertices1) {
      if (!x.allFinite()) throw SolverError("non-finite position in body " + std::to_string(b.global_id));
    }
    b.accept_candidate();
  }
  state.time += cfg.dt;
  ++state.step;
}

void clear_contact_force(SimState& state) {
  state.contact_force.clear();
  for (const auto& b : state.bodies) state.contact_force[b.global_id].assign(b.vertex_count(), Vec3::Zero());
}

// Static boxes at vertices0 grown so that boxes within `reach` overlap.
std::vector<IndexedBox> static_boxes(const std::vector<MeshBody>& local, double reach) {
  std::vector<IndexedBox> boxes;
  for (const auto& b : local) boxes.push_back({b.global_id, get_bounding_box(b.vertices0, b.vertices0, reach)});
  return boxes;
}

SpaceTimeBox grown_box(const MeshBody& b, double grow) {
  SpaceTimeBox box{b.vertices0.front(), b.vertices0.front()};
  for (const auto& x : b.vertices0) {
    box.lo = box.lo.cwiseMin(x);
    box.hi = box.hi.cwiseMax(x);
  }
  box.lo.array() -= grow;
  box.hi.array() += grow;
  return box;
}

std::map<std::int64_t, const MeshBody*> body_lookup(const std::vector<MeshBody>& local,
                                                    const std::vector<MeshBody>& ghosts) {
  std::map<std::int64_t, const MeshBody*> m;
  for (const auto& b : local) m[b.global_id] = &b;
  for (const auto& b : ghosts) m.emplace(b.global_id, &b);
  return m;
}

}  // namespace

StepReport step_li(SimState& state, const StepConfig& config, comm::Communicator& comm) {
  if (!(config.dt > 0.0)) throw SolverError("step: dt must be positive");
  unconstrained_candidate(state, config, spring_forces(state, config.spring_stiffness), comm);
  clear_contact_force(state);
  accept(state, config);
  return {};
}

StepReport step_cli(SimState& state, const StepConfig& config, comm::Communicator& comm) {
  if (!(config.dt > 0.0)) throw SolverError("step: dt must be positive");
  unconstrained_candidate(state, config, spring_forces(state, config.spring_stiffness), comm);
  clear_contact_force(state);
  const auto op = make_step_operator(config.mobility, config.dt);
  const auto ncp = resolve_contacts_ncp(state.bodies, state.contact_force, *op, config.contact_params(),
                                        config.ncp, comm);
  StepReport r;
  r.ncp_iterations = ncp.iterations;
  r.newton_iterations = ncp.newton_iterations;
  r.total_volume = ncp.total_volume.empty() ? 0.0 : ncp.total_volume.front();
  r.total_lambda = ncp.total_lambda;
  r.contact_volumes = ncp.first_detection.volumes;
  r.volume_history = ncp.total_volume;
  accept(state, config);
  return r;
}

StepReport step_repulsion(SimState& state, const StepConfig& config, comm::Communicator& comm) {
  if (!(config.dt > 0.0)) throw SolverError("step: dt must be positive");
  if (config.repulsion < 0.0) throw SolverError("step_repulsion: negative repulsion coefficient");
  if (!(config.activation_distance > 0.0)) throw SolverError("step_repulsion: activation distance must be positive");
  auto forces = spring_forces(state, config.spring_stiffness);
  std::vector<double> magnitude(state.bodies.size(), 0.0);
  if (config.repulsion > 0.0) {
    const double d_act = config.activation_distance;
    const auto pairs = find_intersecting_box_pairs(static_boxes(state.bodies, d_act), comm);
    const auto ghosts = exchange_ghosts(pairs, state.bodies, comm);
    const auto lookup = body_lookup(state.bodies, ghosts);
    for (std::size_t b = 0; b < state.bodies.size(); ++b) {
      const auto& body = state.bodies[b];
      for (const auto& [j, k] : pairs.pairs) {
        if (j != body.global_id) continue;
        const auto& other = *lookup.at(k);
        const auto box = grown_box(other, d_act);
        for (std::size_t v = 0; v < body.vertex_count(); ++v) {
          const Vec3& x = body.vertices0[v];
          if (!box.contains(x)) continue;
          double best = std::numeric_limits<double>::infinity();
          Vec3 nearest = Vec3::Zero();
          for (const auto& y : other.vertices0) {
            const double d = (x - y).norm();
            if (d < best) {
              best = d;
              nearest = y;
            }
          }
          if (!(best < d_act) || best == 0.0) continue;
          const double s = 1.0 - best / d_act;
          const Vec3 f = config.repulsion * s * s * (x - nearest) / best;
          forces[b][v] += f;
          magnitude[b] += f.norm();
        }
      }
    }
  }
  unconstrained_candidate(state, config, forces, comm);
  clear_contact_force(state);
  accept(state, config);
  StepReport r;
  for (double m : comm.allgatherv(magnitude)) r.repulsion_force += m;
  return r;
}

StepReport advance(SimState& state, Stepper stepper, const StepConfig& config, comm::Communicator& comm) {
  switch (stepper) {
    case Stepper::cli: return step_cli(state, config, comm);
    case Stepper::li: return step_li(state, config, comm);
    case Stepper::repulsion: return step_repulsion(state, config, comm);
  }
  throw SolverError("advance: unknown stepper");
}

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Closest point by Voronoi region of the triangle.
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return ap.norm();
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return bp.norm();
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return (p - (a + ab * (d1 / (d1 - d3)))).norm();
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return cp.norm();
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return (p - (a + ac * (d2 / (d2 - d6)))).norm();
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return (p - (b + (c - b) * w)).norm();
  }
  const double denom = 1.0 / (va + vb + vc);
  return (p - (a + ab * (vb * denom) + ac * (vc * denom))).norm();
}

double winding_number(const MeshBody& body, const Vec3& p) {
  // Sum of signed solid angles (Van Oosterom and Strackee).
  double total = 0.0;
  for (const auto& t : body.triangles) {
    const Vec3 a = body.vertices0[t[0]] - p;
    const Vec3 b = body.vertices0[t[1]] - p;
    const Vec3 c = body.vertices0[t[2]] - p;
    const double la = a.norm(), lb = b.norm(), lc = c.norm();
    const double num = a.dot(b.cross(c));
    const double den = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
    total += 2.0 * std::atan2(num, den);
  }
  return total / (4.0 * std::numbers::pi);
}

namespace {

double one_sided_separation(const MeshBody& vertices, const MeshBody& surface, double d_probe) {
  const auto box = grown_box(surface, d_probe);
  const auto tight = grown_box(surface, 0.0);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& x : vertices.vertices0) {
    if (!box.contains(x)) continue;
    double d = std::numeric_limits<double>::infinity();
    for (const auto& t : surface.triangles) {
      d = std::min(d, point_triangle_distance(x, surface.vertices0[t[0]], surface.vertices0[t[1]],
                                              surface.vertices0[t[2]]));
    }
    if (tight.contains(x) && winding_number(surface, x) > 0.5) d = -d;
    best = std::min(best, d);
  }
  return best;
}

}  // namespace

double min_separation(const std::vector<MeshBody>& local, double d_probe, comm::Communicator& comm) {
  if (!(d_probe > 0.0)) throw GeometryError("min_separation: probe distance must be positive");
  const auto pairs = find_intersecting_box_pairs(static_boxes(local, d_probe), comm);
  const auto ghosts = exchange_ghosts(pairs, local, comm);
  const auto lookup = body_lookup(local, ghosts);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [j, k] : pairs.pairs) {
    if (j > k) continue;
    const auto& a = *lookup.at(j);
    const auto& b = *lookup.at(k);
    best = std::min({best, one_sided_separation(a, b, d_probe), one_sided_separation(b, a, d_probe)});
  }
  for (double v : comm.allgather(best)) best = std::min(best, v);
  return best;
}

}  // namespace stiv
