#pragma once

#include <map>
#include <vector>

#include "hpf/harmonic_signal.hpp"
#include "hpf/types.hpp"

namespace hpf {

/// Harmonic-domain image of multiplication by a periodic matrix function
/// M(t) = sum_h M_h exp(j*h*2*pi*f1*t).  Acting on Fourier coefficients the
/// operator is block-Toeplitz: block (m, n) equals M_{m-n}, so a time-domain
/// product becomes a convolution of spectra.
struct ToeplitzOperator {
  int rows = 0;  // output dimension per harmonic
  int cols = 0;  // input dimension per harmonic
  std::map<int, MatrixComp> coeffs;

  ToeplitzOperator() = default;
  ToeplitzOperator(int out_dim, int in_dim) : rows(out_dim), cols(in_dim) {}

  [[nodiscard]] MatrixComp at(int h) const {
    auto it = coeffs.find(h);
    if (it != coeffs.end()) return it->second;
    return MatrixComp::Zero(rows, cols);
  }

  [[nodiscard]] bool has(int h) const { return coeffs.count(h) > 0; }

  /// Time-domain evaluation M(t) = sum_h M_h exp(j*h*w1*t); exact for the
  /// stored (finite) coefficient set.  Real part taken: coefficient sets of
  /// physical operators are conjugate-symmetric.
  [[nodiscard]] Matrix sample(Real t, Real f1) const;
};

/// Builds the operator from Fourier coefficients of M(t).  Every supplied
/// order must lie inside H; content beyond the retained set is an explicit
/// truncation error, never silently dropped.
[[nodiscard]] ToeplitzOperator lift(const std::map<int, MatrixComp>& coefficients, int out_dim,
                                    int in_dim, const HarmonicIndexSet& H);

/// Convenience: lift of a constant (time-invariant) matrix.
[[nodiscard]] ToeplitzOperator lift_constant(const MatrixComp& m);

/// y_m = sum_n M_{m-n} x_n for m in H; output orders outside H are discarded
/// (the inherent truncation of the retained harmonic set).
[[nodiscard]] HarmonicSignal apply(const ToeplitzOperator& op, const HarmonicSignal& x,
                                   const HarmonicIndexSet& H);

/// Coefficient-space product: coefficients of A(t)*B(t) (spectral
/// convolution C_h = sum_k A_k B_{h-k}), clipped to H.  The Frobenius norm of
/// any clipped content is reported through `leakage` when provided.
[[nodiscard]] ToeplitzOperator compose(const ToeplitzOperator& a, const ToeplitzOperator& b,
                                       const HarmonicIndexSet& H, Real* leakage = nullptr);

/// Dense block matrix of the operator over H: rows/cols ordered by ascending
/// harmonic (block (m, n) = M_{m-n}).
[[nodiscard]] MatrixComp materialize(const ToeplitzOperator& op, const HarmonicIndexSet& H);

/// Dense frequency operator jOmega as used in harmonic-domain state
/// equations: block-diagonal with j*h*2*pi*f1*I_dim at harmonic h.
[[nodiscard]] MatrixComp materialize_j_omega(int dim, const HarmonicIndexSet& H);

/// Real form of a dense harmonic-domain operator acting on the real
/// coordinate chart of conjugate-symmetric signals (see real_coordinates).
/// `op` has H.count() x H.count() blocks of size out_dim x in_dim; the result
/// maps [Re X_0 | Re/Im X_1 | ...] to the same chart of the output, folding
/// in the co-variation of negative orders.
[[nodiscard]] Matrix realify_operator(const MatrixComp& op, int out_dim, int in_dim,
                                      const HarmonicIndexSet& H);

/// Real form of a block-diagonal (per-harmonic) operator given its diagonal
/// blocks for h = 0..h_max (negative orders act as conjugates).  Blocks may
/// be rectangular but must all share one shape.
[[nodiscard]] Matrix realify_block_diagonal(const std::vector<MatrixComp>& blocks_h0_to_hmax,
                                            const HarmonicIndexSet& H);

}  // namespace hpf
