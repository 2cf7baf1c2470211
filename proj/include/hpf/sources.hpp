#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hpf/harmonic_signal.hpp"
#include "hpf/types.hpp"

namespace hpf {

/// General block matrix over the harmonic set: entry (m, n) couples input
/// order n to output order m (off-diagonal blocks model harmonic coupling in
/// aggregated equivalents).  Absent blocks are zero.
struct HarmonicBlockMatrix {
  std::map<std::pair<int, int>, Matrix3Comp> blocks;

  [[nodiscard]] Matrix3Comp at(int row_order, int col_order) const;
  void set(int row_order, int col_order, const Matrix3Comp& value);

  /// Dense form over H (harmonic-major, three-phase blocks).
  [[nodiscard]] MatrixComp materialize(const HarmonicIndexSet& H) const;

  /// block(-m, -n) must equal conj(block(m, n)) for a real-valued element.
  void require_conjugate_symmetric(const std::string& label) const;
};

/// Harmonic voltage source behind a harmonic impedance.  Injects
///   I = Z^-1 (V_src - V_port)
/// into the grid node it is attached to.
struct TheveninEquivalent {
  int node = 0;
  HarmonicSignal v_source{3};
  HarmonicBlockMatrix impedance;

  [[nodiscard]] std::string label() const {
    return "voltage-source equivalent at node " + std::to_string(node);
  }
};

/// Harmonic current source in parallel with a harmonic admittance.  Injects
///   I = I_src - Y * V_port.
struct NortonEquivalent {
  int node = 0;
  HarmonicSignal i_source{3};
  HarmonicBlockMatrix admittance;

  [[nodiscard]] std::string label() const {
    return "current-source equivalent at node " + std::to_string(node);
  }
};

[[nodiscard]] HarmonicSignal thevenin_current(const TheveninEquivalent& te,
                                              const HarmonicSignal& v_port,
                                              const HarmonicIndexSet& H);

[[nodiscard]] HarmonicSignal norton_current(const NortonEquivalent& ne,
                                            const HarmonicSignal& v_port,
                                            const HarmonicIndexSet& H);

/// Source transformation: Y = Z^-1, I_src = Z^-1 V_src.  Injected currents
/// are identical for every port voltage.
[[nodiscard]] NortonEquivalent to_norton(const TheveninEquivalent& te,
                                         const HarmonicIndexSet& H);

/// Diagonal blocks of an aggregated admittance are expected to be passive
/// (positive-semidefinite real part); violations are reported, not fatal,
/// since fitted equivalents can be locally active.
[[nodiscard]] std::vector<std::string> check_passivity(const NortonEquivalent& ne,
                                                       const HarmonicIndexSet& H);

}  // namespace hpf
