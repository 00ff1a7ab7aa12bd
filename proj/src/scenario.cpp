#include "stiv/scenario.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "stiv/broadphase.hpp"

namespace stiv {

ScenarioError::ScenarioError(std::string field, int line, const std::string& message)
    : std::runtime_error((line > 0 ? "line " + std::to_string(line) + ": " : std::string()) +
                         (field.empty() ? std::string() : field + ": ") + message),
      field_(std::move(field)),
      line_(line) {}

LatLonParameterization BodySpec::parameterization() const {
  LatLonParameterization p;
  p.n_lat = n_lat;
  p.n_lon = n_lon;
  p.center = center;
  p.radii = radii;
  p.rotation = Eigen::AngleAxisd(rotation_angle, rotation_axis.normalized()).toRotationMatrix();
  p.mirror_x = mirror_x;
  return p;
}

bool BodySpec::operator==(const BodySpec& o) const {
  return id == o.id && n_lat == o.n_lat && n_lon == o.n_lon && center == o.center && radii == o.radii &&
         rotation_axis == o.rotation_axis && rotation_angle == o.rotation_angle && mirror_x == o.mirror_x;
}

MeshBody build_body(const BodySpec& spec) { return triangulate_latlon(spec.parameterization(), spec.id); }

std::int64_t Scenario::step_count() const {
  return static_cast<std::int64_t>(std::ceil(horizon / dt - 1e-9));
}

double Scenario::effective_probe_distance() const {
  if (probe_distance > 0.0) return probe_distance;
  double smallest = std::numeric_limits<double>::infinity();
  for (const auto& b : bodies) smallest = std::min(smallest, b.radii.minCoeff());
  if (!std::isfinite(smallest)) smallest = 1.0;
  return std::max(4.0 * d_eff(), 0.25 * smallest);
}

StepConfig Scenario::step_config() const {
  StepConfig c;
  c.flow = flow;
  c.mobility = mobility;
  c.dt = dt;
  c.spring_stiffness = spring_stiffness;
  c.d_m = d_m;
  c.alpha = alpha;
  c.epsilon = epsilon;
  c.beta = beta;
  c.ncp.ncp_tol = tolerances.ncp;
  c.ncp.max_iterations = tolerances.max_ncp_iterations;
  c.ncp.lcp.tol = tolerances.lcp;
  c.ncp.lcp.gmres_tol = tolerances.gmres;
  c.ncp.lcp.max_iter = tolerances.max_newton_iterations;
  c.repulsion = repulsion_coefficient.value_or(0.0);
  c.activation_distance = activation_distance.value_or(2.0 * d_m);
  return c;
}

bool Scenario::operator==(const Scenario& o) const {
  const auto flow_eq = flow.kind == o.flow.kind && flow.shear_rate == o.flow.shear_rate &&
                       flow.vortex_scale == o.flow.vortex_scale && flow.vortex_period == o.flow.vortex_period;
  const auto mob_eq = mobility.kind == o.mobility.kind && mobility.drag == o.mobility.drag &&
                      mobility.viscosity == o.mobility.viscosity &&
                      mobility.regularization == o.mobility.regularization &&
                      mobility.translational == o.mobility.translational &&
                      mobility.rotational == o.mobility.rotational;
  return name == o.name && seed == o.seed && ranks == o.ranks && stepper == o.stepper && dt == o.dt &&
         horizon == o.horizon && flow_eq && mob_eq && d_m == o.d_m && alpha == o.alpha &&
         epsilon == o.epsilon && beta == o.beta && tolerances == o.tolerances &&
         repulsion_coefficient == o.repulsion_coefficient && activation_distance == o.activation_distance &&
         spring_stiffness == o.spring_stiffness && probe_distance == o.probe_distance && output == o.output &&
         bodies == o.bodies;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

using LineMap = std::map<std::string, int>;

int line_of(const YAML::Node& n) {
  const auto m = n.Mark();
  return m.line >= 0 ? m.line + 1 : 0;
}

class MapReader {
 public:
  MapReader(const YAML::Node& node, std::string path, LineMap& lines)
      : node_(node), path_(std::move(path)), lines_(lines) {
    if (!node_.IsMap()) throw ScenarioError(path_.empty() ? "<root>" : path_, line_of(node_), "expected a mapping");
    if (!path_.empty()) lines_[path_] = line_of(node_);
    for (const auto& kv : node_) lines_[field(kv.first.as<std::string>())] = line_of(kv.first);
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void allow(std::initializer_list<std::string> keys) const {
    const std::set<std::string> ok(keys);
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!ok.count(key)) throw ScenarioError(field(key), line_of(kv.first), "unknown field");
    }
  }

  bool has(const std::string& key) const { return static_cast<bool>(node_[key]); }

  YAML::Node child(const std::string& key) const { return node_[key]; }

  [[noreturn]] void missing(const std::string& key) const {
    throw ScenarioError(field(key), line_of(node_), "missing required field");
  }

  template <class T>
  T get(const std::string& key, const char* what) const {
    const auto n = node_[key];
    if (!n) missing(key);
    if (!n.IsScalar()) throw ScenarioError(field(key), line_of(n), std::string("expected ") + what);
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      throw ScenarioError(field(key), line_of(n), std::string("expected ") + what + ", got '" + n.Scalar() + "'");
    }
  }

  double number(const std::string& key) const {
    const auto v = get<double>(key, "a number");
    if (!std::isfinite(v)) throw ScenarioError(field(key), line_of(node_[key]), "must be finite");
    return v;
  }
  double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }
  int integer(const std::string& key, int fallback) const { return has(key) ? get<int>(key, "an integer") : fallback; }
  std::string text(const std::string& key) const { return get<std::string>(key, "a string"); }
  std::string text(const std::string& key, const std::string& fallback) const {
    return has(key) ? text(key) : fallback;
  }
  bool flag(const std::string& key, bool fallback) const { return has(key) ? get<bool>(key, "true or false") : fallback; }

  Vec3 vec3(const std::string& key) const {
    const auto n = node_[key];
    if (!n) missing(key);
    if (!n.IsSequence() || n.size() != 3) throw ScenarioError(field(key), line_of(n), "expected a list of 3 numbers");
    Vec3 v;
    for (int i = 0; i < 3; ++i) {
      try {
        v[i] = n[i].as<double>();
      } catch (const YAML::Exception&) {
        throw ScenarioError(field(key), line_of(n[i]), "expected a number, got '" + n[i].Scalar() + "'");
      }
    }
    if (!v.allFinite()) throw ScenarioError(field(key), line_of(n), "must be finite");
    return v;
  }
  Vec3 vec3(const std::string& key, const Vec3& fallback) const { return has(key) ? vec3(key) : fallback; }

 private:
  YAML::Node node_;
  std::string path_;
  LineMap& lines_;
};

[[noreturn]] void invalid(const LineMap& lines, const std::string& field, const std::string& message) {
  const auto it = lines.find(field);
  throw ScenarioError(field, it == lines.end() ? 0 : it->second, message);
}

void check_scenario(const Scenario& s, const LineMap& lines) {
  auto positive = [&](double v, const std::string& field) {
    if (!(v > 0.0)) invalid(lines, field, "must be positive, got " + std::to_string(v));
  };
  if (s.name.empty()) invalid(lines, "name", "must not be empty");
  if (s.ranks < 1) invalid(lines, "ranks", "must be at least 1");
  positive(s.dt, "dt");
  positive(s.horizon, "horizon");
  if (s.d_m < 0.0) invalid(lines, "contact.d_m", "must not be negative");
  if (s.stepper == Stepper::cli && !(s.d_m > 0.0)) invalid(lines, "contact.d_m", "cli stepper requires d_m > 0");
  if (s.alpha < 0.0) invalid(lines, "contact.alpha", "must not be negative");
  positive(s.epsilon, "contact.epsilon");
  if (s.beta < 0.0) invalid(lines, "contact.edge_tolerance", "must not be negative");
  positive(s.tolerances.ncp, "tolerances.ncp");
  positive(s.tolerances.lcp, "tolerances.lcp");
  positive(s.tolerances.gmres, "tolerances.gmres");
  if (s.tolerances.max_ncp_iterations < 1) invalid(lines, "tolerances.max_ncp_iterations", "must be at least 1");
  if (s.tolerances.max_newton_iterations < 1) invalid(lines, "tolerances.max_newton_iterations", "must be at least 1");

  const bool repulsion = s.stepper == Stepper::repulsion;
  if (repulsion && !s.repulsion_coefficient) invalid(lines, "repulsion.coefficient", "missing required field");
  if (!repulsion && (s.repulsion_coefficient || s.activation_distance)) {
    invalid(lines, "repulsion", "only valid with stepper 'repulsion'");
  }
  if (s.repulsion_coefficient && *s.repulsion_coefficient < 0.0) {
    invalid(lines, "repulsion.coefficient", "must not be negative");
  }
  if (s.activation_distance) positive(*s.activation_distance, "repulsion.activation_distance");
  if (repulsion && !s.activation_distance && !(s.d_m > 0.0)) {
    invalid(lines, "repulsion.activation_distance", "required when contact.d_m is not set");
  }

  switch (s.flow.kind) {
    case BackgroundFlow::Kind::taylor_vortex: positive(s.flow.vortex_period, "flow.period"); break;
    default: break;
  }
  switch (s.mobility.kind) {
    case MobilityModel::Kind::drag: positive(s.mobility.drag, "mobility.drag"); break;
    case MobilityModel::Kind::regularized_stokeslet:
      positive(s.mobility.viscosity, "mobility.viscosity");
      if (s.mobility.regularization < 0.0) invalid(lines, "mobility.regularization", "must not be negative");
      break;
    case MobilityModel::Kind::rigid:
      if (s.mobility.translational < 0.0) invalid(lines, "mobility.translational", "must not be negative");
      if (s.mobility.rotational < 0.0) invalid(lines, "mobility.rotational", "must not be negative");
      break;
  }
  if (s.spring_stiffness < 0.0) invalid(lines, "springs.stiffness", "must not be negative");
  if (s.probe_distance < 0.0) invalid(lines, "diagnostics.probe_distance", "must not be negative");
  if (s.output.vertex_dump_every < 0) invalid(lines, "output.vertex_dump_every", "must not be negative");

  if (s.bodies.empty()) invalid(lines, "bodies", "at least one body is required");
  std::set<std::int64_t> ids;
  for (std::size_t i = 0; i < s.bodies.size(); ++i) {
    const auto& b = s.bodies[i];
    const std::string p = "bodies[" + std::to_string(i) + "]";
    if (!ids.insert(b.id).second) invalid(lines, p + ".id", "duplicate body id " + std::to_string(b.id));
    if (b.id < 0) invalid(lines, p + ".id", "must not be negative");
    if (b.n_lat < 2) invalid(lines, p + ".n_lat", "must be at least 2");
    if (b.n_lon < 3) invalid(lines, p + ".n_lon", "must be at least 3");
    if (!(b.radii.array() > 0.0).all()) invalid(lines, p + ".radii", "all radii must be positive");
    if (!(b.rotation_axis.norm() > 0.0)) invalid(lines, p + ".rotation.axis", "must be non-zero");
  }
}

BackgroundFlow parse_flow(const MapReader& r) {
  const auto kind = r.text("kind");
  if (kind == "none") {
    r.allow({"kind"});
    return BackgroundFlow::none();
  }
  if (kind == "extensional") {
    r.allow({"kind"});
    return BackgroundFlow::extensional();
  }
  if (kind == "shear") {
    r.allow({"kind", "shear_rate"});
    return BackgroundFlow::shear(r.number("shear_rate", 1.0));
  }
  if (kind == "taylor_vortex") {
    r.allow({"kind", "scale", "period"});
    return BackgroundFlow::taylor_vortex(r.number("scale", 1.0), r.number("period"));
  }
  throw ScenarioError(r.field("kind"), 0, "unknown flow kind '" + kind + "'");
}

MobilityModel parse_mobility(const MapReader& r) {
  const auto kind = r.text("kind");
  if (kind == "drag") {
    r.allow({"kind", "drag"});
    return MobilityModel::make_drag(r.number("drag", 1.0));
  }
  if (kind == "regularized_stokeslet") {
    r.allow({"kind", "viscosity", "regularization"});
    return MobilityModel::make_stokeslet(r.number("viscosity", 1.0), r.number("regularization", 0.0));
  }
  if (kind == "rigid") {
    r.allow({"kind", "translational", "rotational"});
    return MobilityModel::make_rigid(r.number("translational", 1.0), r.number("rotational", 0.0));
  }
  throw ScenarioError(r.field("kind"), 0, "unknown mobility kind '" + kind + "'");
}

Stepper parse_stepper(const std::string& s, const MapReader& r) {
  if (s == "cli") return Stepper::cli;
  if (s == "li") return Stepper::li;
  if (s == "repulsion") return Stepper::repulsion;
  throw ScenarioError(r.field("stepper"), 0, "expected one of cli, li, repulsion; got '" + s + "'");
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& origin) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ScenarioError("", e.mark.line + 1, origin + ": " + e.msg);
  }
  LineMap lines;
  const MapReader top(root, "", lines);
  top.allow({"name", "seed", "ranks", "stepper", "dt", "horizon", "flow", "mobility", "contact", "tolerances",
             "repulsion", "springs", "diagnostics", "output", "bodies"});

  Scenario s;
  s.name = top.text("name", s.name);
  if (top.has("seed")) s.seed = top.get<std::uint64_t>("seed", "a non-negative integer");
  s.ranks = top.integer("ranks", 1);
  s.stepper = parse_stepper(top.text("stepper"), top);
  s.dt = top.number("dt");
  s.horizon = top.number("horizon");

  if (top.has("flow")) s.flow = parse_flow(MapReader(top.child("flow"), "flow", lines));
  if (top.has("mobility")) s.mobility = parse_mobility(MapReader(top.child("mobility"), "mobility", lines));
  if (top.has("contact")) {
    const MapReader r(top.child("contact"), "contact", lines);
    r.allow({"d_m", "alpha", "epsilon", "edge_tolerance"});
    s.d_m = r.number("d_m", 0.0);
    s.alpha = r.number("alpha", s.alpha);
    s.epsilon = r.number("epsilon", s.epsilon);
    s.beta = r.number("edge_tolerance", s.beta);
  }
  if (top.has("tolerances")) {
    const MapReader r(top.child("tolerances"), "tolerances", lines);
    r.allow({"ncp", "lcp", "gmres", "max_ncp_iterations", "max_newton_iterations"});
    auto& t = s.tolerances;
    t.ncp = r.number("ncp", t.ncp);
    t.lcp = r.number("lcp", t.lcp);
    t.gmres = r.number("gmres", t.gmres);
    t.max_ncp_iterations = r.integer("max_ncp_iterations", t.max_ncp_iterations);
    t.max_newton_iterations = r.integer("max_newton_iterations", t.max_newton_iterations);
  }
  if (top.has("repulsion")) {
    const MapReader r(top.child("repulsion"), "repulsion", lines);
    r.allow({"coefficient", "activation_distance"});
    if (r.has("coefficient")) s.repulsion_coefficient = r.number("coefficient");
    if (r.has("activation_distance")) s.activation_distance = r.number("activation_distance");
  }
  if (top.has("springs")) {
    const MapReader r(top.child("springs"), "springs", lines);
    r.allow({"stiffness"});
    s.spring_stiffness = r.number("stiffness", 0.0);
  }
  if (top.has("diagnostics")) {
    const MapReader r(top.child("diagnostics"), "diagnostics", lines);
    r.allow({"probe_distance"});
    s.probe_distance = r.number("probe_distance", 0.0);
  }
  if (top.has("output")) {
    const MapReader r(top.child("output"), "output", lines);
    r.allow({"directory", "trajectory", "diagnostics", "final_state", "vertex_dump_every"});
    auto& o = s.output;
    o.directory = r.text("directory", o.directory);
    o.trajectory = r.text("trajectory", o.trajectory);
    o.diagnostics = r.text("diagnostics", o.diagnostics);
    o.final_state = r.text("final_state", o.final_state);
    o.vertex_dump_every = r.integer("vertex_dump_every", 0);
  }
  if (!top.has("bodies")) top.missing("bodies");
  const auto list = top.child("bodies");
  if (!list.IsSequence()) throw ScenarioError("bodies", line_of(list), "expected a list");
  lines["bodies"] = line_of(list);
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string path = "bodies[" + std::to_string(i) + "]";
    const MapReader r(list[i], path, lines);
    r.allow({"id", "n_lat", "n_lon", "center", "radii", "rotation", "mirror_x"});
    BodySpec b;
    b.id = r.has("id") ? r.get<std::int64_t>("id", "an integer") : static_cast<std::int64_t>(i);
    b.n_lat = r.integer("n_lat", b.n_lat);
    b.n_lon = r.integer("n_lon", b.n_lon);
    b.center = r.vec3("center");
    b.radii = r.vec3("radii", b.radii);
    if (r.has("rotation")) {
      const MapReader rot(r.child("rotation"), path + ".rotation", lines);
      rot.allow({"axis", "angle"});
      b.rotation_axis = rot.vec3("axis", b.rotation_axis);
      b.rotation_angle = rot.number("angle", 0.0);
    }
    b.mirror_x = r.flag("mirror_x", false);
    s.bodies.push_back(b);
  }
  check_scenario(s, lines);
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("", 0, "cannot open scenario file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path);
}

void validate_scenario(const Scenario& scenario) { check_scenario(scenario, {}); }

// ---------------------------------------------------------------------------
// Serialization

namespace {

// Shortest text that reads back to the same double.
struct Num {
  double v;
};

YAML::Emitter& operator<<(YAML::Emitter& out, Num n) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, n.v);
  return out << std::string(buf, r.ptr);
}

void emit_vec3(YAML::Emitter& out, const Vec3& v) {
  out << YAML::Flow << YAML::BeginSeq << Num{v.x()} << Num{v.y()} << Num{v.z()} << YAML::EndSeq;
}

}  // namespace

std::string serialize_scenario(const Scenario& s) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << s.name;
  out << YAML::Key << "seed" << YAML::Value << s.seed;
  out << YAML::Key << "ranks" << YAML::Value << s.ranks;
  out << YAML::Key << "stepper" << YAML::Value << to_string(s.stepper);
  out << YAML::Key << "dt" << YAML::Value << Num{s.dt};
  out << YAML::Key << "horizon" << YAML::Value << Num{s.horizon};

  out << YAML::Key << "flow" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << to_string(s.flow.kind);
  if (s.flow.kind == BackgroundFlow::Kind::shear) out << YAML::Key << "shear_rate" << YAML::Value << Num{s.flow.shear_rate};
  if (s.flow.kind == BackgroundFlow::Kind::taylor_vortex) {
    out << YAML::Key << "scale" << YAML::Value << Num{s.flow.vortex_scale};
    out << YAML::Key << "period" << YAML::Value << Num{s.flow.vortex_period};
  }
  out << YAML::EndMap;

  out << YAML::Key << "mobility" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << to_string(s.mobility.kind);
  switch (s.mobility.kind) {
    case MobilityModel::Kind::drag: out << YAML::Key << "drag" << YAML::Value << Num{s.mobility.drag}; break;
    case MobilityModel::Kind::regularized_stokeslet:
      out << YAML::Key << "viscosity" << YAML::Value << Num{s.mobility.viscosity};
      out << YAML::Key << "regularization" << YAML::Value << Num{s.mobility.regularization};
      break;
    case MobilityModel::Kind::rigid:
      out << YAML::Key << "translational" << YAML::Value << Num{s.mobility.translational};
      out << YAML::Key << "rotational" << YAML::Value << Num{s.mobility.rotational};
      break;
  }
  out << YAML::EndMap;

  out << YAML::Key << "contact" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "d_m" << YAML::Value << Num{s.d_m};
  out << YAML::Key << "alpha" << YAML::Value << Num{s.alpha};
  out << YAML::Key << "epsilon" << YAML::Value << Num{s.epsilon};
  out << YAML::Key << "edge_tolerance" << YAML::Value << Num{s.beta};
  out << YAML::EndMap;

  const auto& t = s.tolerances;
  out << YAML::Key << "tolerances" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "ncp" << YAML::Value << Num{t.ncp};
  out << YAML::Key << "lcp" << YAML::Value << Num{t.lcp};
  out << YAML::Key << "gmres" << YAML::Value << Num{t.gmres};
  out << YAML::Key << "max_ncp_iterations" << YAML::Value << t.max_ncp_iterations;
  out << YAML::Key << "max_newton_iterations" << YAML::Value << t.max_newton_iterations;
  out << YAML::EndMap;

  if (s.repulsion_coefficient || s.activation_distance) {
    out << YAML::Key << "repulsion" << YAML::Value << YAML::BeginMap;
    if (s.repulsion_coefficient) out << YAML::Key << "coefficient" << YAML::Value << Num{*s.repulsion_coefficient};
    if (s.activation_distance) out << YAML::Key << "activation_distance" << YAML::Value << Num{*s.activation_distance};
    out << YAML::EndMap;
  }
  out << YAML::Key << "springs" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "stiffness" << YAML::Value << Num{s.spring_stiffness} << YAML::EndMap;
  out << YAML::Key << "diagnostics" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "probe_distance" << YAML::Value << Num{s.probe_distance} << YAML::EndMap;

  const auto& o = s.output;
  out << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "directory" << YAML::Value << o.directory;
  out << YAML::Key << "trajectory" << YAML::Value << o.trajectory;
  out << YAML::Key << "diagnostics" << YAML::Value << o.diagnostics;
  out << YAML::Key << "final_state" << YAML::Value << o.final_state;
  out << YAML::Key << "vertex_dump_every" << YAML::Value << o.vertex_dump_every;
  out << YAML::EndMap;

  out << YAML::Key << "bodies" << YAML::Value << YAML::BeginSeq;
  for (const auto& b : s.bodies) {
    out << YAML::BeginMap;
    out << YAML::Key << "id" << YAML::Value << b.id;
    out << YAML::Key << "n_lat" << YAML::Value << b.n_lat;
    out << YAML::Key << "n_lon" << YAML::Value << b.n_lon;
    out << YAML::Key << "center" << YAML::Value;
    emit_vec3(out, b.center);
    out << YAML::Key << "radii" << YAML::Value;
    emit_vec3(out, b.radii);
    out << YAML::Key << "rotation" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "axis" << YAML::Value;
    emit_vec3(out, b.rotation_axis);
    out << YAML::Key << "angle" << YAML::Value << Num{b.rotation_angle} << YAML::EndMap;
    out << YAML::Key << "mirror_x" << YAML::Value << b.mirror_x;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

ScenarioReport describe_scenario(const Scenario& s) {
  validate_scenario(s);
  ScenarioReport r;
  r.d_eff = s.d_eff();
  r.steps = s.step_count();
  r.bodies = s.bodies.size();
  r.probe_distance = s.effective_probe_distance();
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  double diag = 0.0;
  for (const auto& spec : s.bodies) {
    const auto body = build_body(spec);
    r.vertices += body.vertex_count();
    r.triangles += body.triangles.size();
    const auto box = get_bounding_box(body, s.d_eff());
    diag += box.diagonal();
    lo = lo.cwiseMin(box.lo);
    hi = hi.cwiseMax(box.hi);
  }
  r.grid_cell = diag / static_cast<double>(s.bodies.size());
  const auto grid = MortonGrid::covering(lo, hi, r.grid_cell);
  r.grid_depth = grid.depth;
  return r;
}

// ---------------------------------------------------------------------------
// Presets

namespace {

Scenario extensional_two_body(Stepper stepper) {
  Scenario s;
  s.name = stepper == Stepper::repulsion ? "repulsion-two-body" : "extensional-two-body";
  s.stepper = stepper;
  s.dt = 0.02;
  s.horizon = 2.0;
  s.flow = BackgroundFlow::extensional();
  s.mobility = MobilityModel::make_rigid(1.0);
  s.d_m = 0.009;
  s.alpha = 0.05;
  // Mirrored tilted ellipsoids; the gap closes near t = 1 without contact handling.
  BodySpec a;
  a.id = 0;
  a.radii = Vec3(1.0, 0.8, 0.9);
  a.rotation_axis = Vec3(0.0, 1.0, 1.0);
  a.rotation_angle = 0.3;
  a.center = Vec3(2.7, 0.0, 0.0);
  BodySpec b = a;
  b.id = 1;
  b.center = Vec3(-2.7, 0.0, 0.0);
  b.mirror_x = true;
  s.bodies = {a, b};
  if (stepper == Stepper::repulsion) {
    // High mobility so a C_r of order 0.01 can hold the bodies against the
    // flow; the explicit force then needs a smaller step.
    s.repulsion_coefficient = 0.01;
    s.mobility = MobilityModel::make_rigid(400.0);
    s.dt = 0.001;
  }
  return s;
}

Scenario shear_two_body() {
  Scenario s;
  s.name = "shear-two-body";
  s.stepper = Stepper::cli;
  s.dt = 0.1;
  s.horizon = 16.0;
  s.flow = BackgroundFlow::shear(1.0);
  s.mobility = MobilityModel::make_rigid(1.0);
  s.d_m = 0.05;
  s.epsilon = 0.01;
  BodySpec a;
  a.id = 0;
  a.n_lat = 9;
  a.n_lon = 18;
  a.center = Vec3(-3.0, 0.0, 0.25);
  BodySpec b = a;
  b.id = 1;
  b.center = Vec3(3.0, 0.0, -0.25);
  s.bodies = {a, b};
  return s;
}

Scenario taylor_vortex_lattice() {
  Scenario s;
  s.name = "taylor-vortex-lattice";
  s.stepper = Stepper::cli;
  s.dt = 0.05;
  s.horizon = 3.0;
  s.seed = 7;
  const double period = 2.0 * std::numbers::pi;
  s.flow = BackgroundFlow::taylor_vortex(1.0, period);
  s.mobility = MobilityModel::make_rigid(1.0);
  s.d_m = 0.009;
  std::mt19937_64 rng(s.seed);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  const double spacing = period / 6.0;
  std::int64_t id = 0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) {
        BodySpec b;
        b.id = id++;
        b.n_lat = 7;
        b.n_lon = 14;
        b.radii = Vec3::Constant(0.42);
        b.center = Vec3(spacing * (i + 0.5) + jitter(rng), spacing * (j + 0.5) + jitter(rng),
                        spacing * (k + 0.5) + jitter(rng));
        s.bodies.push_back(b);
      }
    }
  }
  return s;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"extensional-two-body", "shear-two-body", "taylor-vortex-lattice", "repulsion-two-body"};
}

Scenario preset_scenario(const std::string& name) {
  if (name == "extensional-two-body") return extensional_two_body(Stepper::cli);
  if (name == "repulsion-two-body") return extensional_two_body(Stepper::repulsion);
  if (name == "shear-two-body") return shear_two_body();
  if (name == "taylor-vortex-lattice") return taylor_vortex_lattice();
  throw ScenarioError("preset", 0, "unknown preset '" + name + "'");
}

}  // namespace stiv
