#include "hpf/transforms.hpp"

#include <cmath>

namespace hpf {

namespace {

// cos(theta + c) has coefficient exp(+j*c)/2 at order +1 (with the frame
// angle theta = w1*t + theta0 folded into c), and the conjugate at -1;
// -sin(theta + c) has +j*exp(+j*c)/2 at order +1.
Complex cos_plus(Real c) { return 0.5 * std::exp(kImag * c); }
Complex msin_plus(Real c) { return 0.5 * kImag * std::exp(kImag * c); }

}  // namespace

FrameTransform FrameTransform::identity(int dim) {
  FrameTransform t;
  t.control_dim = dim;
  t.hardware_dim = dim;
  t.forward[0] = MatrixComp::Identity(dim, dim);
  t.backward[0] = MatrixComp::Identity(dim, dim);
  return t;
}

FrameTransform FrameTransform::clarke() {
  FrameTransform t;
  t.control_dim = 2;
  t.hardware_dim = 3;
  Matrix fwd(2, 3);
  fwd << 1.0, -0.5, -0.5,  //
      0.0, std::sqrt(3.0) / 2.0, -std::sqrt(3.0) / 2.0;
  fwd *= 2.0 / 3.0;
  Matrix bwd(3, 2);
  bwd << 1.0, 0.0,  //
      -0.5, std::sqrt(3.0) / 2.0,  //
      -0.5, -std::sqrt(3.0) / 2.0;
  t.forward[0] = fwd.cast<Complex>();
  t.backward[0] = bwd.cast<Complex>();
  return t;
}

FrameTransform FrameTransform::park(Real theta0) {
  FrameTransform t;
  t.control_dim = 2;
  t.hardware_dim = 3;
  const Real shift = 2.0 * kPi / 3.0;
  const Real phase_of[3] = {0.0, -shift, +shift};

  MatrixComp fwd_p1 = MatrixComp::Zero(2, 3);
  MatrixComp bwd_p1 = MatrixComp::Zero(3, 2);
  for (int col = 0; col < 3; ++col) {
    // Forward rows: (2/3)*cos(theta + c), (2/3)*(-sin(theta + c)).
    fwd_p1(0, col) = (2.0 / 3.0) * cos_plus(theta0 + phase_of[col]);
    fwd_p1(1, col) = (2.0 / 3.0) * msin_plus(theta0 + phase_of[col]);
  }
  for (int row = 0; row < 3; ++row) {
    // Backward columns: cos(theta + c), -sin(theta + c).
    bwd_p1(row, 0) = cos_plus(theta0 + phase_of[row]);
    bwd_p1(row, 1) = msin_plus(theta0 + phase_of[row]);
  }
  t.forward[+1] = fwd_p1;
  t.forward[-1] = fwd_p1.conjugate();
  t.backward[+1] = bwd_p1;
  t.backward[-1] = bwd_p1.conjugate();
  return t;
}

ToeplitzOperator forward_operator(const FrameTransform& t, const HarmonicIndexSet& H) {
  return lift(t.forward, t.control_dim, t.hardware_dim, H);
}

ToeplitzOperator backward_operator(const FrameTransform& t, const HarmonicIndexSet& H) {
  return lift(t.backward, t.hardware_dim, t.control_dim, H);
}

Complex positive_sequence_fundamental(const HarmonicSignal& x) {
  if (x.dim != 3) {
    throw Error(ErrorKind::dimension, "positive-sequence extraction needs a three-phase signal");
  }
  const VectorComp c = x.at(+1);
  const Complex a = std::exp(kImag * (2.0 * kPi / 3.0));
  return (c(0) + a * c(1) + a * a * c(2)) / 3.0;
}

}  // namespace hpf
