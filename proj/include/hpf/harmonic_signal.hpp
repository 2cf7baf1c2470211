#pragma once

#include <map>

#include "hpf/types.hpp"

namespace hpf {

/// Fourier-coefficient description of a periodic vector signal
/// x(t) = sum_h X_h * exp(j*h*2*pi*f1*t).  Orders absent from `coeffs` are
/// exactly zero.  Real-valued signals satisfy X_{-h} = conj(X_h).
struct HarmonicSignal {
  int dim = 0;
  std::map<int, VectorComp> coeffs;

  HarmonicSignal() = default;
  explicit HarmonicSignal(int dimension) : dim(dimension) {}

  [[nodiscard]] bool has(int h) const { return coeffs.count(h) > 0; }

  /// Coefficient at order h (zero vector if absent).
  [[nodiscard]] VectorComp at(int h) const {
    auto it = coeffs.find(h);
    if (it != coeffs.end()) return it->second;
    return VectorComp::Zero(dim);
  }

  /// Inserts or accumulates a coefficient.
  void add(int h, const VectorComp& value);
  void set(int h, const VectorComp& value);

  /// Largest coefficient-entry magnitude over all stored orders.
  [[nodiscard]] Real max_abs() const;

  /// Largest harmonic order with a nonzero coefficient (0 for the zero signal).
  [[nodiscard]] int max_order() const;

  /// Drops coefficients with max-norm below `tol` (tidies accumulated noise).
  void prune(Real tol = 0.0);

  HarmonicSignal& operator+=(const HarmonicSignal& other);
  HarmonicSignal& operator-=(const HarmonicSignal& other);
  HarmonicSignal& operator*=(Complex scale);

  friend HarmonicSignal operator+(HarmonicSignal a, const HarmonicSignal& b) {
    a += b;
    return a;
  }
  friend HarmonicSignal operator-(HarmonicSignal a, const HarmonicSignal& b) {
    a -= b;
    return a;
  }
};

/// Replaces the signal by its closest real-valued (conjugate-symmetric)
/// counterpart: X_h <- (X_h + conj(X_{-h}))/2, X_0 <- Re(X_0).
void project_conjugate_symmetric(HarmonicSignal& x);

/// Max deviation from conjugate symmetry, ||X_h - conj(X_{-h})||_inf over h.
[[nodiscard]] Real conjugate_symmetry_defect(const HarmonicSignal& x);

/// Stacks coefficients for all orders in H (ascending -h_max..+h_max) into one
/// dense vector of size dim*H.count().  Orders outside H must be zero.
[[nodiscard]] VectorComp stack_signal(const HarmonicSignal& x, const HarmonicIndexSet& H);

/// Inverse of stack_signal.
[[nodiscard]] HarmonicSignal unstack_signal(const VectorComp& stacked, int dim,
                                            const HarmonicIndexSet& H);

/// Time-domain samples of a conjugate-symmetric signal at n_samples uniform
/// points over one fundamental period.  Row k = x(k*T/n_samples); the
/// imaginary residue of the reconstruction is discarded.
[[nodiscard]] Matrix waveform_from_signal(const HarmonicSignal& x, const HarmonicIndexSet& H,
                                          int n_samples);

/// DFT of uniformly sampled real waveform rows (one full period) onto the
/// harmonic set H, with conjugate symmetry enforced on the output.
/// Requires n_samples >= 4*h_max + 4; fewer samples would alias content of
/// order <= h_max onto itself.
[[nodiscard]] HarmonicSignal signal_from_waveform(const Matrix& samples,
                                                  const HarmonicIndexSet& H);

/// Real coordinates of a conjugate-symmetric signal, laid out as
/// [Re X_0 | Re X_1, Im X_1 | ... | Re X_hmax, Im X_hmax]  (dim entries per
/// block).  This is the coordinate chart the mismatch solver works in.
[[nodiscard]] Vector real_coordinates(const HarmonicSignal& x, const HarmonicIndexSet& H);

/// Inverse chart: rebuilds the full conjugate-symmetric signal (negative
/// orders filled in by conjugation).
[[nodiscard]] HarmonicSignal signal_from_real_coordinates(const Vector& coords, int dim,
                                                          const HarmonicIndexSet& H);

}  // namespace hpf
