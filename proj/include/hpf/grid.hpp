#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hpf/types.hpp"

namespace hpf {

enum class NodeKind {
  forming,    // voltage-source-like port: injected current unknown, voltage follows
  following,  // current-source-like port: voltage unknown, injected current follows
  zero,       // no injection; eliminated before solving
};

struct GridNode {
  int id = 0;
  NodeKind kind = NodeKind::zero;
};

/// Three-phase series element between two nodes.  Either a constant
/// (R, L) pair evaluated as Z(f) = R + j*2*pi*f*L, or a per-order impedance
/// table for frequency-dependent elements (no interpolation: a missing order
/// is an error at assembly time).
struct GridBranch {
  int from = 0;
  int to = 0;
  Matrix3 resistance = Matrix3::Zero();   // per-unit
  Matrix3 inductance = Matrix3::Zero();   // per-unit seconds (L/Z_base)
  std::optional<std::map<int, Matrix3Comp>> impedance_table;  // keyed by order h >= 0

  [[nodiscard]] std::string label() const {
    return "branch " + std::to_string(from) + "-" + std::to_string(to);
  }
};

/// Three-phase shunt element at a node, Y(f) = G + j*2*pi*f*C.
struct GridShunt {
  int node = 0;
  Matrix3 conductance = Matrix3::Zero();  // per-unit
  Matrix3 capacitance = Matrix3::Zero();  // per-unit seconds (C*Z_base)
  std::optional<std::map<int, Matrix3Comp>> admittance_table;

  [[nodiscard]] std::string label() const { return "shunt at node " + std::to_string(node); }
};

struct GridModel {
  Real f1 = 50.0;     // fundamental frequency, Hz
  Real v_base = 1.0;  // peak phase-to-ground voltage base, V
  Real s_base = 1.5;  // three-phase power base, VA
  std::vector<GridNode> nodes;
  std::vector<GridBranch> branches;
  std::vector<GridShunt> shunts;

  [[nodiscard]] int node_count() const { return static_cast<int>(nodes.size()); }
  /// Position of a node id in the `nodes` list (model error if absent).
  [[nodiscard]] int node_position(int id) const;
  [[nodiscard]] std::vector<int> positions_of(NodeKind kind) const;
  /// Z_base = v_base / i_base with i_base = (2/3) s_base / v_base.
  [[nodiscard]] Real z_base() const { return 1.5 * v_base * v_base / s_base; }
  [[nodiscard]] Real i_base() const { return v_base / z_base(); }
};

/// Branch impedance at frequency f (per-unit).  Table-driven branches resolve
/// negative f through conjugation (real time-domain elements).
[[nodiscard]] Matrix3Comp branch_impedance(const GridBranch& branch, Real f, Real f1);

/// Shunt admittance at frequency f (per-unit).
[[nodiscard]] Matrix3Comp shunt_admittance(const GridShunt& shunt, Real f, Real f1);

/// Signed block incidence: row block k, column block n is +I3 when branch k
/// leaves node n, -I3 when it enters, zero otherwise.  Size 3|L| x 3|N|.
[[nodiscard]] Matrix build_incidence(const GridModel& grid);

/// Nodal admittance at one frequency: Y = A^T * diag(Z_l^-1) * A + diag(Y_t),
/// size 3|N| x 3|N|.
[[nodiscard]] MatrixComp assemble_nodal_admittance(const GridModel& grid, Real f);

/// Gaussian elimination of the block-index complement of `keep` (classic
/// star-mesh reduction): Y_kk - Y_ke * Y_ee^-1 * Y_ek.  `keep` holds node
/// positions (not ids); output order follows `keep`.
[[nodiscard]] MatrixComp kron_reduce(const MatrixComp& y, const std::vector<int>& keep,
                                     int block_size = 3);

/// Hybrid port representation of a partitioned admittance: with S-node
/// injections and R-node voltages as inputs,
///   V_S = h_ss * I_S + h_sr * V_R
///   I_R = h_rs * I_S + h_rr * V_R.
struct HybridBlocks {
  MatrixComp h_ss;
  MatrixComp h_sr;
  MatrixComp h_rs;
  MatrixComp h_rr;
};

/// Exchanges the S-port variables of the admittance equations.  `s_positions`
/// and `r_positions` are disjoint block indices covering all of `y`.
[[nodiscard]] HybridBlocks partition_hybrid(const MatrixComp& y,
                                            const std::vector<int>& s_positions,
                                            const std::vector<int>& r_positions,
                                            int block_size = 3);

/// Per-harmonic grid operators for the whole study: zero-injection nodes
/// eliminated, remaining nodes split into S (forming) and R (following).
/// Everything is block-diagonal across harmonics, so only the diagonal
/// blocks are stored (one entry per order 0..h_max; negative orders act by
/// conjugation).
struct StackedHybrid {
  HarmonicIndexSet H;
  std::vector<int> s_node_ids;  // ascending id order
  std::vector<int> r_node_ids;
  std::vector<HybridBlocks> per_order;   // index h = 0..h_max
  std::vector<MatrixComp> reduced_y;     // admittance over S+R nodes, per order
};

[[nodiscard]] StackedHybrid stack_harmonic_hybrid(const GridModel& grid,
                                                  const HarmonicIndexSet& H);

struct ValidationFinding {
  std::string element;
  std::string check;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationFinding> findings;
  [[nodiscard]] bool ok() const { return findings.empty(); }
  [[nodiscard]] std::string summary() const;
};

/// Structural and parameter checks ahead of any factorization: node
/// references, weak connectivity, element symmetry, passivity (nonnegative
/// real part; strictly positive for branches so the DC block stays regular),
/// invertibility at every retained frequency.
[[nodiscard]] ValidationReport validate_grid(const GridModel& grid, const HarmonicIndexSet& H);

}  // namespace hpf
