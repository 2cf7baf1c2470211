#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "hpf/cider.hpp"
#include "hpf/grid.hpp"
#include "hpf/sources.hpp"
#include "hpf/types.hpp"

namespace hpf {

struct SolverOptions {
  Real tolerance = 1e-8;   // max mismatch-coefficient magnitude, p.u.
  int max_iterations = 50;
  Real damping = 1.0;      // step scale; halved once when the residual grows
  int threads = 0;         // 0: hardware concurrency, capped by HPF_THREADS
};

using FollowingResource = std::variant<CiderModel, TheveninEquivalent, NortonEquivalent>;

[[nodiscard]] int resource_node(const FollowingResource& r);

/// A validated study: grid, harmonic set, one forming resource per S node and
/// one following resource per R node, with the per-harmonic grid operators
/// prebuilt (zero-injection nodes eliminated).
struct HpfProblem {
  GridModel grid;
  HarmonicIndexSet H;
  std::vector<CiderModel> forming;          // ordered like stacked.s_node_ids
  std::vector<FollowingResource> following;  // ordered like stacked.r_node_ids
  SolverOptions options;
  StackedHybrid stacked;

  [[nodiscard]] int s_count() const { return static_cast<int>(stacked.s_node_ids.size()); }
  [[nodiscard]] int r_count() const { return static_cast<int>(stacked.r_node_ids.size()); }
};

/// Builds and validates the problem: grid checks, resource/node pairing,
/// per-harmonic operator assembly.
[[nodiscard]] HpfProblem build_problem(GridModel grid, std::vector<CiderModel> ciders,
                                       std::vector<TheveninEquivalent> thevenin,
                                       std::vector<NortonEquivalent> norton,
                                       const HarmonicIndexSet& H, SolverOptions options = {});

/// Iterate: injected currents at forming nodes, voltages at following nodes
/// (node-major within each harmonic coefficient).
struct HpfState {
  HarmonicSignal i_s;
  HarmonicSignal v_r;
};

/// Balanced positive-sequence unit voltage at every following node, zero
/// injected currents: the canonical initial iterate.
[[nodiscard]] HpfState flat_start(const HpfProblem& problem);

/// Synchronization angles frozen at one iterate: per following node, the
/// phase of the positive-sequence fundamental of its voltage (unused entries
/// for source equivalents).  Forming resources keep the angle datum 0.
struct SyncState {
  std::vector<Real> theta_r;
};

[[nodiscard]] SyncState synchronize(const HpfProblem& problem, const HpfState& state);

/// Resources compiled for one synchronization state.  Linear resources
/// (forming references, source equivalents) are compiled once per problem;
/// following converters are recompiled whenever the angles move.
struct CompiledResources {
  std::vector<CompiledCider> forming;  // theta = 0
  struct Following {
    std::optional<CompiledCider> cider;         // converter resources
    std::optional<MatrixComp> linear_jacobian;  // d(i)/d(v) for source equivalents
    std::optional<VectorComp> linear_source;    // stacked source term (i = src + J v)
  };
  std::vector<Following> following;
};

[[nodiscard]] CompiledResources compile_resources(const HpfProblem& problem,
                                                  const SyncState& sync);

struct Mismatch {
  HarmonicSignal dv_s;  // grid-side voltage minus resource-side voltage at S
  HarmonicSignal di_r;  // grid-side current minus resource-side current at R
  Real max_dv = 0.0;
  Real max_di = 0.0;
  [[nodiscard]] Real max_residual() const { return std::max(max_dv, max_di); }
};

[[nodiscard]] Mismatch mismatch(const HpfProblem& problem, const CompiledResources& resources,
                                const HpfState& state);

/// Real Jacobian of the mismatch in the real coordinate chart
/// [coords(i_s); coords(v_r)].  Synchronization angles are treated as frozen
/// parameters (their sensitivity is deliberately dropped).
[[nodiscard]] Matrix jacobian(const HpfProblem& problem, const CompiledResources& resources,
                              const HpfState& state);

struct IterationRecord {
  int iter = 0;
  Real max_dv = 0.0;
  Real max_di = 0.0;
  Real step_scale = 1.0;  // damping actually applied on the step taken after this record
};

struct HpfSolution {
  bool converged = false;
  int iterations = 0;
  HarmonicSignal i_s, v_r;  // unknowns at exit
  HarmonicSignal v_s, i_r;  // recovered from the grid equations
  std::vector<IterationRecord> history;
  std::vector<Real> theta_r;  // final synchronization angles
};

[[nodiscard]] HpfSolution solve_hpf(const HpfProblem& problem);

/// Full nodal picture on the original (unreduced) grid: voltages everywhere
/// (eliminated nodes recovered), injections, branch and shunt flows, and the
/// worst nodal current-balance residual.
struct NodalSpectra {
  std::vector<int> node_ids;
  std::map<int, HarmonicSignal> voltage;
  std::map<int, HarmonicSignal> injection;
  struct BranchFlow {
    int from = 0;
    int to = 0;
    HarmonicSignal current{3};
  };
  std::vector<BranchFlow> branch_flows;
  struct ShuntFlow {
    int node = 0;
    HarmonicSignal current{3};
  };
  std::vector<ShuntFlow> shunt_flows;
  Real max_kcl_residual = 0.0;
};

[[nodiscard]] NodalSpectra recover_outputs(const HpfProblem& problem,
                                           const HpfSolution& solution);

}  // namespace hpf
