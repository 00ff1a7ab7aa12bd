#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stiv/scenario.hpp"

namespace stiv {

inline constexpr int kDiagnosticsVersion = 1;

struct DiagnosticsRow {
  std::int64_t step = 0;
  double time = 0.0;
  double min_separation = 0.0;
  int ncp_iters = 0;
  int newton_iters = 0;
  double total_V = 0.0;
  double total_lambda = 0.0;
  double wall_ms = 0.0;
};

struct BodySnapshot {
  std::int64_t id = 0;
  Vec3 centroid = Vec3::Zero();
  std::vector<Vec3> vertices;  // empty unless dumped this step
};

struct StepRecord {
  DiagnosticsRow row;
  std::int64_t contact_volumes = 0;
  std::vector<BodySnapshot> bodies;  // ascending id
};

enum class RunStatus { ok, ncp_failure, numeric_failure };

struct SimulationResult {
  RunStatus status = RunStatus::ok;
  std::string message;
  std::int64_t failed_step = -1;
  std::vector<StepRecord> records;  // step 0 is the initial state
  std::vector<MeshBody> final_bodies;  // ascending id, last accepted state
};

struct SimulationOptions {
  std::optional<int> ranks;  // overrides the scenario
  int vertex_dump_every = 0;
  bool keep_records = true;
  /// Called on rank 0 after each recorded step (including step 0).
  std::function<void(const StepRecord&)> on_record;
};

/// Runs the scenario on virtual ranks. NCP failures and non-finite states
/// end the run early and are reported in the result; other errors propagate.
SimulationResult simulate(const Scenario& scenario, const SimulationOptions& options = {});

std::string diagnostics_header();
std::string diagnostics_line(const DiagnosticsRow& row);

/// Command-line exit codes.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitParse = 2, kExitNcp = 3, kExitNumeric = 4 };

struct RunFiles {
  std::string trajectory;
  std::string diagnostics;
  std::string final_state;
};

/// simulate() with trajectory JSONL, diagnostics CSV and final-state JSON
/// written under the output directory. Returns the exit code.
int run_to_files(const Scenario& scenario, const SimulationOptions& options, RunFiles* files = nullptr,
                 std::string* message = nullptr);

}  // namespace stiv
