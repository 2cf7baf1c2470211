#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hpf/io.hpp"
#include "hpf/oracle.hpp"
#include "hpf/solver.hpp"
#include "hpf/transforms.hpp"

namespace {

int run_solve(const hpf::StudyConfig& config) {
  const hpf::HpfProblem problem = hpf::load_study(config);
  const hpf::HpfSolution solution = hpf::solve_hpf(problem);
  const hpf::NodalSpectra spectra = hpf::recover_outputs(problem, solution);

  if (!config.out_csv.empty()) {
    hpf::write_text_file(config.out_csv, hpf::spectrum_csv(spectra, problem.H));
  }
  if (!config.log_path.empty()) {
    hpf::write_text_file(config.log_path, hpf::convergence_log_lines(solution));
  }

  const hpf::Real residual = solution.history.empty() ? 0.0
                                                      : std::max(solution.history.back().max_dv,
                                                                 solution.history.back().max_di);
  std::printf("converged: %s\niterations: %d\nresidual: %.3e\nkcl residual: %.3e\n",
              solution.converged ? "true" : "false", solution.iterations, residual,
              spectra.max_kcl_residual);
  return solution.converged ? 0 : 2;
}

int run_validate(const std::string& grid_path, int h_max, std::optional<bool> per_unit) {
  const hpf::GridModel grid = hpf::grid_from_json(hpf::load_json_file(grid_path), per_unit);
  const hpf::HarmonicIndexSet H{h_max, grid.f1};
  const hpf::ValidationReport report = hpf::validate_grid(grid, H);
  std::printf("%s\n", report.summary().c_str());
  return report.ok() ? 0 : 1;
}

int run_oracle(const std::string& cider_path, const std::string& disturbance_path,
               const std::string& out_path, std::optional<bool> per_unit) {
  const hpf::Json dist = hpf::load_json_file(disturbance_path);
  hpf::GridModel bases;  // unit bases for the standalone run
  bases.f1 = dist.contains("f1_hz") ? dist.at("f1_hz").get<hpf::Real>() : 50.0;
  if (dist.contains("v_base")) bases.v_base = dist.at("v_base").get<hpf::Real>();
  if (dist.contains("s_base")) bases.s_base = dist.at("s_base").get<hpf::Real>();
  const int h_max = dist.contains("h_max") ? dist.at("h_max").get<int>() : 5;
  const hpf::HarmonicIndexSet H{h_max, bases.f1};

  const hpf::Json& cider_json = hpf::load_json_file(cider_path);
  std::vector<hpf::CiderModel> models = hpf::ciders_from_json(cider_json, bases, per_unit);
  if (models.size() != 1) {
    throw hpf::Error(hpf::ErrorKind::io, cider_path + ": expected exactly one converter model");
  }
  const hpf::CiderModel& model = models.front();

  bool dist_per_unit = per_unit.value_or(true);
  if (dist.contains("per_unit")) dist_per_unit = dist.at("per_unit").get<bool>();
  const hpf::Real scale =
      dist_per_unit ? 1.0
                    : 1.0 / (model.mode == hpf::CiderMode::forming ? bases.i_base() : bases.v_base);
  hpf::HarmonicSignal w_grid(3);
  if (dist.contains("spectrum")) {
    // Reuse the source-spectrum schema: orders >= 0, six numbers per order.
    hpf::SourceSet wrapper = hpf::sources_from_json(
        hpf::Json{{"per_unit", true},
                  {"sources", hpf::Json::array({hpf::Json{{"node", 0},
                                                          {"kind", "norton"},
                                                          {"spectrum", dist.at("spectrum")},
                                                          {"matrix", hpf::Json::object()}}})}},
        bases, true);
    w_grid = wrapper.norton.front().i_source;
    w_grid *= hpf::Complex(scale, 0.0);
  }

  const hpf::Real theta =
      model.mode == hpf::CiderMode::following
          ? std::arg(hpf::positive_sequence_fundamental(w_grid))
          : 0.0;
  const hpf::CiderOracleResult result = hpf::cider_steady_state(model, theta, w_grid, H, {});
  if (!result.run.settled) {
    throw hpf::Error(hpf::ErrorKind::solver,
                     "time-domain run did not settle within the period budget (deviation " +
                         std::to_string(result.run.deviation) + ")");
  }
  hpf::write_text_file(out_path, hpf::waveform_csv(result.port_samples, bases.f1));
  std::printf("settled after %d periods; waveform written to %s\n", result.run.periods,
              out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"harmonic power-flow for polyphase grids with converter-interfaced resources"};
  app.require_subcommand(1);

  hpf::StudyConfig config;
  bool per_unit_flag = false;

  CLI::App* solve = app.add_subcommand("solve", "run a harmonic power-flow study");
  solve->add_option("--grid", config.grid_path, "grid JSON file")->required();
  solve->add_option("--ciders", config.ciders_path, "converter JSON file")->required();
  solve->add_option("--sources", config.sources_path, "source-equivalent JSON file");
  solve->add_option("--hmax", config.h_max, "largest retained harmonic order");
  solve->add_option("--tol", config.tolerance, "convergence tolerance (p.u.)");
  solve->add_option("--max-iter", config.max_iterations, "iteration cap");
  solve->add_option("--damping", config.damping, "initial step scale");
  solve->add_option("--threads", config.threads, "resource-evaluation threads (0 = auto)");
  solve->add_option("--out", config.out_csv, "spectrum CSV output path");
  solve->add_option("--log", config.log_path, "convergence JSONL output path");
  solve->add_flag("--per-unit", per_unit_flag, "treat all input files as per-unit");

  std::string grid_path;
  int validate_hmax = 25;
  CLI::App* validate = app.add_subcommand("validate", "check a grid file against the model rules");
  validate->add_option("--grid", grid_path, "grid JSON file")->required();
  validate->add_option("--hmax", validate_hmax, "largest order to check");
  validate->add_flag("--per-unit", per_unit_flag, "treat the file as per-unit");

  std::string cider_path, disturbance_path, wave_out;
  CLI::App* oracle = app.add_subcommand("oracle", "time-domain steady state of one converter");
  oracle->add_option("--cider", cider_path, "converter JSON file (one model)")->required();
  oracle->add_option("--disturbance", disturbance_path, "disturbance JSON file")->required();
  oracle->add_option("--out", wave_out, "waveform CSV output path")->required();
  oracle->add_flag("--per-unit", per_unit_flag, "treat input files as per-unit");

  CLI11_PARSE(app, argc, argv);

  try {
    const std::optional<bool> per_unit =
        per_unit_flag ? std::optional<bool>(true) : std::nullopt;
    if (solve->parsed()) {
      config.per_unit = per_unit;
      return run_solve(config);
    }
    if (validate->parsed()) return run_validate(grid_path, validate_hmax, per_unit);
    if (oracle->parsed()) return run_oracle(cider_path, disturbance_path, wave_out, per_unit);
  } catch (const hpf::Error& e) {
    std::cerr << "error (" << hpf::kind_name(e.kind()) << "): " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
