#pragma once

#include <map>
#include <string>

#include "hpf/toeplitz.hpp"
#include "hpf/types.hpp"

namespace hpf {

/// Periodic state-space block
///   dx/dt = A(t) x + B(t) u + E(t) w
///   y     = C(t) x + D(t) u + F(t) w
/// with every matrix given by its Fourier coefficients on the fundamental.
/// Physical blocks have conjugate-symmetric coefficient sets (real-valued in
/// the time domain).
struct LtpBlock {
  int nx = 0;  // states
  int nu = 0;  // actuation inputs
  int ny = 0;  // outputs
  int nw = 0;  // disturbance inputs
  std::map<int, MatrixComp> a, b, c, d, e, f;

  /// Checks coefficient dimensions and conjugate symmetry.
  void validate(const std::string& label) const;

  /// Time-domain evaluation of the six matrices (exact trigonometric sums).
  [[nodiscard]] Matrix a_at(Real t, Real f1) const;
  [[nodiscard]] Matrix b_at(Real t, Real f1) const;
  [[nodiscard]] Matrix c_at(Real t, Real f1) const;
  [[nodiscard]] Matrix d_at(Real t, Real f1) const;
  [[nodiscard]] Matrix e_at(Real t, Real f1) const;
  [[nodiscard]] Matrix f_at(Real t, Real f1) const;
};

}  // namespace hpf
