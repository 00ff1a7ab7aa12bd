// Scenario-driven front end: run, validate, and print built-in presets.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "stiv/simulation.hpp"

namespace {

// A path to a YAML file, or the name of a built-in preset.
stiv::Scenario resolve(const std::string& arg) {
  if (std::filesystem::is_regular_file(arg)) return stiv::load_scenario(arg);
  for (const auto& name : stiv::preset_names()) {
    if (name == arg) return stiv::preset_scenario(arg);
  }
  throw stiv::ScenarioError("", 0, "'" + arg + "' is neither a scenario file nor a preset name");
}

int cmd_validate(const std::string& arg) {
  const auto s = resolve(arg);
  const auto r = stiv::describe_scenario(s);
  std::cout << "ok\n"
            << "name: " << s.name << "\n"
            << "stepper: " << stiv::to_string(s.stepper) << "\n"
            << "d_m_eff: " << r.d_eff << "\n"
            << "steps: " << r.steps << "\n"
            << "bodies: " << r.bodies << "\n"
            << "vertices: " << r.vertices << "\n"
            << "triangles: " << r.triangles << "\n"
            << "grid_cell: " << r.grid_cell << "\n"
            << "grid_depth: " << r.grid_depth << "\n"
            << "probe_distance: " << r.probe_distance << "\n"
            << "ranks: " << s.ranks << "\n";
  return stiv::kExitOk;
}

int cmd_run(const std::string& arg, int ranks, const std::string& output_dir, int dump_every, bool quiet) {
  auto s = resolve(arg);
  if (!output_dir.empty()) s.output.directory = output_dir;
  if (ranks > 0) s.ranks = ranks;
  stiv::SimulationOptions opts;
  opts.vertex_dump_every = dump_every >= 0 ? dump_every : s.output.vertex_dump_every;
  const auto steps = s.step_count();
  if (!quiet) {
    opts.on_record = [steps](const stiv::StepRecord& rec) {
      if (rec.row.step == 0 || rec.row.step % 10 == 0 || rec.row.step == steps) {
        std::fprintf(stderr, "step %lld/%lld t=%.4g min_sep=%.6g ncp=%d\n", static_cast<long long>(rec.row.step),
                     static_cast<long long>(steps), rec.row.time, rec.row.min_separation, rec.row.ncp_iters);
      }
    };
  }
  stiv::RunFiles files;
  std::string message;
  const int code = stiv::run_to_files(s, opts, &files, &message);
  if (code != stiv::kExitOk) std::cerr << "stivsim: " << message << "\n";
  if (!quiet) {
    std::cerr << "wrote " << files.diagnostics << ", " << files.trajectory << ", " << files.final_state << "\n";
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contact-aware mesh body simulation"};
  app.require_subcommand(1);

  std::string scenario;
  int ranks = 0;
  std::string output_dir;
  int dump_every = -1;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "Run a scenario file or preset to its horizon");
  run->add_option("scenario", scenario, "Scenario YAML file or preset name")->required();
  run->add_option("--ranks", ranks, "Number of virtual ranks (overrides the scenario)")->check(CLI::PositiveNumber);
  run->add_option("--output-dir", output_dir, "Directory for output files (overrides the scenario)");
  run->add_option("--vertex-dump-every", dump_every, "Dump all vertices every k steps (0 = centroids only)")
      ->check(CLI::NonNegativeNumber);
  run->add_flag("-q,--quiet", quiet, "No progress output");

  auto* validate = app.add_subcommand("validate", "Check a scenario without running it");
  validate->add_option("scenario", scenario, "Scenario YAML file or preset name")->required();

  std::string preset;
  auto* show = app.add_subcommand("preset", "Print a built-in scenario as YAML");
  show->add_option("name", preset, "Preset name; omit to list presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? stiv::kExitOk : stiv::kExitUsage;
  }

  try {
    if (*validate) return cmd_validate(scenario);
    if (*run) return cmd_run(scenario, ranks, output_dir, dump_every, quiet);
    if (*show) {
      if (preset.empty()) {
        for (const auto& n : stiv::preset_names()) std::cout << n << "\n";
      } else {
        std::cout << stiv::serialize_scenario(stiv::preset_scenario(preset));
      }
      return stiv::kExitOk;
    }
  } catch (const stiv::ScenarioError& e) {
    std::cerr << "stivsim: " << e.what() << "\n";
    return stiv::kExitParse;
  } catch (const stiv::GeometryError& e) {
    std::cerr << "stivsim: " << e.what() << "\n";
    return stiv::kExitParse;
  } catch (const std::exception& e) {
    std::cerr << "stivsim: " << e.what() << "\n";
    return stiv::kExitUsage;
  }
  return stiv::kExitUsage;
}
