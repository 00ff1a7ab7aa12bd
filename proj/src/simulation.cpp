#include "stiv/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace stiv {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

}  // namespace

std::string diagnostics_header() {
  return "# diagnostics_version=" + std::to_string(kDiagnosticsVersion) +
         "\nstep,time,min_separation,ncp_iters,newton_iters,total_V,total_lambda,wall_ms\n";
}

std::string diagnostics_line(const DiagnosticsRow& r) {
  return std::to_string(r.step) + "," + fmt_double(r.time) + "," + fmt_double(r.min_separation) + "," +
         std::to_string(r.ncp_iters) + "," + std::to_string(r.newton_iters) + "," + fmt_double(r.total_V) + "," +
         fmt_double(r.total_lambda) + "," + fmt_double(r.wall_ms) + "\n";
}

SimulationResult simulate(const Scenario& scenario, const SimulationOptions& options) {
  validate_scenario(scenario);
  const int ranks = options.ranks.value_or(scenario.ranks);
  if (ranks < 1) throw ScenarioError("ranks", 0, "must be at least 1");

  auto specs = scenario.bodies;
  std::sort(specs.begin(), specs.end(), [](const BodySpec& a, const BodySpec& b) { return a.id < b.id; });
  const auto config = scenario.step_config();
  const std::int64_t steps = scenario.step_count();
  const double probe = scenario.effective_probe_distance();

  SimulationResult result;
  std::atomic<std::int64_t> current_step{0};
  try {
    comm::run_ranks(ranks, [&](comm::Communicator& comm) {
      const auto [lo, hi] = comm::block_range(static_cast<std::int64_t>(specs.size()), comm.rank(), comm.size());
      std::vector<MeshBody> local;
      for (auto i = lo; i < hi; ++i) local.push_back(build_body(specs[static_cast<std::size_t>(i)]));
      SimState state = make_state(std::move(local));

      const auto record = [&](const StepReport& rep, double wall_ms) {
        StepRecord rec;
        rec.row.step = state.step;
        rec.row.time = state.time;
        rec.row.min_separation = min_separation(state.bodies, probe, comm);
        rec.row.ncp_iters = rep.ncp_iterations;
        rec.row.newton_iters = rep.newton_iterations;
        rec.row.total_V = rep.total_volume;
        rec.row.total_lambda = rep.total_lambda;
        rec.row.wall_ms = wall_ms;
        rec.contact_volumes = rep.contact_volumes;
        const bool dump = options.vertex_dump_every > 0 && state.step % options.vertex_dump_every == 0;
        std::vector<BodySnapshot> mine;
        for (const auto& b : state.bodies) {
          mine.push_back({b.global_id, centroid(b.vertices0), dump ? b.vertices0 : std::vector<Vec3>{}});
        }
        rec.bodies = comm.allgatherv(mine);
        if (comm.rank() != 0) return;
        if (options.on_record) options.on_record(rec);
        if (options.keep_records) result.records.push_back(std::move(rec));
      };

      record(StepReport{}, 0.0);
      for (std::int64_t s = 1; s <= steps; ++s) {
        if (comm.rank() == 0) current_step = s;
        const auto t0 = std::chrono::steady_clock::now();
        StepReport rep;
        try {
          rep = advance(state, scenario.stepper, config, comm);
        } catch (const NcpFailure& e) {
          // Raised collectively from globally reduced quantities.
          if (comm.rank() == 0) {
            result.status = RunStatus::ncp_failure;
            result.message = e.what();
            result.failed_step = s;
          }
          break;
        }
        const double wall =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        record(rep, wall);
      }
      for (auto& b : state.bodies) b.vertices1 = b.vertices0;
      auto all = comm.allgatherv(state.bodies);
      if (comm.rank() == 0) result.final_bodies = std::move(all);
    });
  } catch (const SolverError& e) {
    result.status = RunStatus::numeric_failure;
    result.message = e.what();
    result.failed_step = current_step.load();
  }
  return result;
}

int run_to_files(const Scenario& scenario, const SimulationOptions& options, RunFiles* files,
                 std::string* message) {
  namespace fs = std::filesystem;
  const fs::path dir(scenario.output.directory);
  fs::create_directories(dir);
  RunFiles paths{(dir / scenario.output.trajectory).string(), (dir / scenario.output.diagnostics).string(),
                 (dir / scenario.output.final_state).string()};
  if (files) *files = paths;

  std::ofstream traj(paths.trajectory);
  std::ofstream diag(paths.diagnostics);
  if (!traj || !diag) throw std::runtime_error("cannot open output files in '" + dir.string() + "'");
  diag << diagnostics_header();

  SimulationOptions opts = options;
  opts.keep_records = false;
  opts.on_record = [&](const StepRecord& rec) {
    diag << diagnostics_line(rec.row);
    for (const auto& b : rec.bodies) {
      nlohmann::json j;
      j["step"] = rec.row.step;
      j["time"] = rec.row.time;
      j["body"] = b.id;
      j["centroid"] = vec_json(b.centroid);
      if (!b.vertices.empty()) {
        auto& verts = j["vertices"] = nlohmann::json::array();
        for (const auto& v : b.vertices) verts.push_back(vec_json(v));
      }
      traj << j.dump() << "\n";
    }
    if (options.on_record) options.on_record(rec);
  };
  const auto result = simulate(scenario, opts);
  traj.flush();
  diag.flush();

  nlohmann::json fin;
  fin["version"] = kDiagnosticsVersion;
  fin["scenario"] = scenario.name;
  fin["status"] = result.status == RunStatus::ok ? "ok"
                  : result.status == RunStatus::ncp_failure ? "ncp_failure"
                                                            : "numeric_failure";
  if (result.failed_step >= 0 && result.status != RunStatus::ok) {
    fin["failed_step"] = result.failed_step;
    fin["message"] = result.message;
  }
  auto& bodies = fin["bodies"] = nlohmann::json::array();
  for (const auto& b : result.final_bodies) {
    nlohmann::json jb;
    jb["id"] = b.global_id;
    jb["centroid"] = vec_json(centroid(b.vertices0));
    auto& verts = jb["vertices"] = nlohmann::json::array();
    for (const auto& v : b.vertices0) verts.push_back(vec_json(v));
    auto& tris = jb["triangles"] = nlohmann::json::array();
    for (const auto& t : b.triangles) tris.push_back({t[0], t[1], t[2]});
    bodies.push_back(std::move(jb));
  }
  std::ofstream(paths.final_state) << fin.dump(1) << "\n";

  if (message) *message = result.message;
  switch (result.status) {
    case RunStatus::ok: return kExitOk;
    case RunStatus::ncp_failure: return kExitNcp;
    case RunStatus::numeric_failure: return kExitNumeric;
  }
  return kExitNumeric;
}

}  // namespace stiv
