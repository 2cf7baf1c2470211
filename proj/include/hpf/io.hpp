#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hpf/cider.hpp"
#include "hpf/grid.hpp"
#include "hpf/oracle.hpp"
#include "hpf/solver.hpp"
#include "hpf/sources.hpp"
#include "hpf/types.hpp"

namespace hpf {

/// Insertion-ordered JSON keeps dumped files and logs byte-stable.
using Json = nlohmann::ordered_json;

/// One study as described on the command line: input files, harmonic depth,
/// solver options, output paths.
struct StudyConfig {
  std::string grid_path;
  std::string ciders_path;
  std::string sources_path;        // empty: no source equivalents
  int h_max = 25;
  Real tolerance = 1e-8;
  int max_iterations = 50;
  Real damping = 1.0;
  int threads = 0;
  std::optional<bool> per_unit;    // overrides the files' own unit flags
  std::string out_csv;
  std::string log_path;
};

/// Grid file schema (SI units unless "per_unit": true):
///   {"f1_hz":…, "v_base":…, "s_base":…,
///    "nodes":[{"id":…, "kind":"forming|following|zero"}],
///    "branches":[{"from":…, "to":…, "R":[9 row-major], "L":[9],
///                 "Z_table":{"<h>":[18 re/im interleaved]}}],
///    "shunts":[{"node":…, "G":[9], "C":[9], "Y_table":{…}}]}
[[nodiscard]] GridModel grid_from_json(const Json& j, std::optional<bool> per_unit_override = {});
[[nodiscard]] Json grid_to_json(const GridModel& grid);

/// Converter file schema: {"per_unit":…, "resources":[…]} or a bare array of
///   {"node":…, "mode":"forming|following",
///    "filter":{"stages":[{"L":…, "R":…, "C":…}]},
///    "controller":{"stages":[{"kp":…, "ki":…}]},  // innermost stage first
///    "transform":"park|clarke",
///    "setpoint":{"V":…, "f":…} | {"P":…, "Q":…}}
/// SI gains are scaled by the base of each loop's measured and commanded
/// quantity; element values convert on the grid impedance base.
[[nodiscard]] std::vector<CiderModel> ciders_from_json(const Json& j, const GridModel& bases,
                                                       std::optional<bool> per_unit_override = {});
[[nodiscard]] Json ciders_to_json(const std::vector<CiderModel>& ciders);

struct SourceSet {
  std::vector<TheveninEquivalent> thevenin;
  std::vector<NortonEquivalent> norton;
};

/// Source file schema: {"per_unit":…, "sources":[…]} or a bare array of
///   {"node":…, "kind":"thevenin|norton",
///    "spectrum":{"<h>":[6 re/im per phase]},       // orders h >= 0 only
///    "matrix":{"<h_row>,<h_col>":[18 re/im]}}
/// Missing conjugate blocks of "matrix" are filled in by symmetry.
[[nodiscard]] SourceSet sources_from_json(const Json& j, const GridModel& bases,
                                          std::optional<bool> per_unit_override = {});
[[nodiscard]] Json sources_to_json(const SourceSet& sources);

[[nodiscard]] Json load_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

/// Loads and cross-validates the whole study; grid validation findings are
/// fatal here (the solver must not run on an unvalidated grid).
[[nodiscard]] HpfProblem load_study(const StudyConfig& config);

/// CSV spectrum report: one row per (node, phase, quantity, order >= 0) in
/// that sort order; magnitude is the amplitude of the real waveform component
/// (|X_0| at DC, 2|X_h| above), angle in radians; 12 significant digits.
[[nodiscard]] std::string spectrum_csv(const NodalSpectra& spectra, const HarmonicIndexSet& H);

/// JSON-lines convergence log: one {"iter","max_dV","max_dI"} line per
/// recorded iterate plus a final {"converged","iterations"} summary.
[[nodiscard]] std::string convergence_log_lines(const HpfSolution& solution);

/// Waveform CSV (time-domain oracle dump): t plus one column per signal.
[[nodiscard]] std::string waveform_csv(const Matrix& samples, Real f1);

}  // namespace hpf
