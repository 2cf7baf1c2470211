#pragma once

#include <map>

#include "hpf/toeplitz.hpp"
#include "hpf/types.hpp"

namespace hpf {

/// Reference-frame change between the three-phase hardware frame and the
/// two-axis control frame.  `forward` maps hardware to control coordinates,
/// `backward` maps control commands to hardware coordinates; both are given
/// as Fourier coefficient sets of the periodic transform matrices (constant
/// for the stationary two-axis frame, fundamental-frequency modulated for the
/// rotating frame).
struct FrameTransform {
  int control_dim = 0;
  int hardware_dim = 0;
  std::map<int, MatrixComp> forward;   // control_dim x hardware_dim
  std::map<int, MatrixComp> backward;  // hardware_dim x control_dim

  /// Identity "transform" (control frame = hardware frame).
  static FrameTransform identity(int dim);
  /// Stationary two-axis (alpha/beta) frame, amplitude-invariant scaling.
  static FrameTransform clarke();
  /// Rotating two-axis (d/q) frame at the fundamental, amplitude-invariant;
  /// theta0 is the rotating-frame angle at t = 0.
  static FrameTransform park(Real theta0);
};

/// Lifted forward map (control_dim x hardware_dim blocks).
[[nodiscard]] ToeplitzOperator forward_operator(const FrameTransform& t,
                                                const HarmonicIndexSet& H);

/// Lifted backward map (hardware_dim x control_dim blocks).
[[nodiscard]] ToeplitzOperator backward_operator(const FrameTransform& t,
                                                 const HarmonicIndexSet& H);

/// Complex positive-sequence fundamental of a three-phase signal:
/// (X_a + a*X_b + a^2*X_c)/3 at order +1, with a = exp(j*2*pi/3).
[[nodiscard]] Complex positive_sequence_fundamental(const HarmonicSignal& x);

}  // namespace hpf
