#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stiv/dynamics.hpp"
#include "stiv/geometry.hpp"

namespace stiv {

/// Invalid or unreadable scenario. `field` is a dotted path such as
/// "bodies[1].radii"; `line` is 1-based, 0 when unknown.
class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(std::string field, int line, const std::string& message);
  const std::string& field() const { return field_; }
  int line() const { return line_; }

 private:
  std::string field_;
  int line_;
};

struct BodySpec {
  std::int64_t id = 0;
  int n_lat = 15;
  int n_lon = 32;
  Vec3 center = Vec3::Zero();
  Vec3 radii = Vec3::Ones();
  Vec3 rotation_axis = Vec3::UnitZ();
  double rotation_angle = 0.0;  // radians
  bool mirror_x = false;

  LatLonParameterization parameterization() const;
  bool operator==(const BodySpec& o) const;
};

struct Tolerances {
  double ncp = 1e-10;
  double lcp = 1e-10;
  double gmres = 1e-8;
  int max_ncp_iterations = 50;
  int max_newton_iterations = 200;
  bool operator==(const Tolerances&) const = default;
};

struct OutputSpec {
  std::string directory = ".";
  std::string trajectory = "trajectory.jsonl";
  std::string diagnostics = "diagnostics.csv";
  std::string final_state = "final_state.json";
  int vertex_dump_every = 0;  // 0 = centroids only
  bool operator==(const OutputSpec&) const = default;
};

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 0;
  int ranks = 1;
  Stepper stepper = Stepper::cli;
  double dt = 0.01;
  double horizon = 1.0;
  BackgroundFlow flow;
  MobilityModel mobility;

  // contact
  double d_m = 0.0;
  double alpha = 0.05;
  double epsilon = 1.0;
  double beta = kEdgeTolerance;
  Tolerances tolerances;

  // repulsion stepper only
  std::optional<double> repulsion_coefficient;
  std::optional<double> activation_distance;

  double spring_stiffness = 0.0;
  double probe_distance = 0.0;  // 0 = derived from body sizes
  OutputSpec output;
  std::vector<BodySpec> bodies;

  std::int64_t step_count() const;
  double d_eff() const { return (1.0 + 2.0 * alpha) * d_m; }
  double effective_probe_distance() const;
  StepConfig step_config() const;
  bool operator==(const Scenario& o) const;
};

/// Parses YAML text. `origin` names the source in error messages.
Scenario parse_scenario(const std::string& text, const std::string& origin = "<string>");
Scenario load_scenario(const std::string& path);
std::string serialize_scenario(const Scenario& scenario);

/// Invariant checks shared by parse and programmatic construction.
void validate_scenario(const Scenario& scenario);

struct ScenarioReport {
  double d_eff = 0.0;
  std::int64_t steps = 0;
  std::size_t bodies = 0;
  std::size_t vertices = 0;
  std::size_t triangles = 0;
  double grid_cell = 0.0;
  int grid_depth = 0;
  double probe_distance = 0.0;
};

/// Derived quantities of a valid scenario (builds the meshes once).
ScenarioReport describe_scenario(const Scenario& scenario);

std::vector<std::string> preset_names();
/// Built-in scenario by name; throws ScenarioError for unknown names.
Scenario preset_scenario(const std::string& name);

MeshBody build_body(const BodySpec& spec);

}  // namespace stiv
