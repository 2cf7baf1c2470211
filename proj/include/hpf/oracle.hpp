#pragma once

#include <functional>
#include <vector>

#include "hpf/cider.hpp"
#include "hpf/harmonic_signal.hpp"
#include "hpf/ltp_block.hpp"
#include "hpf/transforms.hpp"
#include "hpf/types.hpp"

namespace hpf {

/// Instantaneous value of a conjugate-symmetric spectrum.
[[nodiscard]] Vector sample_signal(const HarmonicSignal& x, Real t, Real f1);

/// Linear time-periodic ODE dx/dt = A(t) x + g(t) on the fundamental period.
struct PeriodicOde {
  int nx = 0;
  Real f1 = 50.0;
  std::function<Matrix(Real)> dynamics;  // A(t)
  std::function<Vector(Real)> forcing;   // g(t)
};

struct IntegrationSettings {
  int steps_per_period = 4096;
  int max_periods = 200;
  Real settle_tol = 1e-9;    // period-to-period max state deviation
  Real blowup_limit = 1e6;   // divergence guard (state max-norm)
};

struct SteadyStateRun {
  bool settled = false;
  int periods = 0;
  Real deviation = 0.0;
  Matrix state_samples;  // one full period, row k = x(k * T / steps)
};

/// Trapezoidal integration (implicit, dynamics frozen at each step midpoint)
/// from x(0) = 0 until two successive periods agree to settle_tol.  Both the
/// midpoint factorizations and the forcing samples are periodic and cached.
[[nodiscard]] SteadyStateRun integrate_periodic(const PeriodicOde& ode,
                                                const IntegrationSettings& settings);

/// Pointwise-in-time closed loop of one hardware/controller pair: the
/// feedback algebra u = T(t) y is solved at each instant, so this path never
/// touches the harmonic-domain machinery and can arbitrate it.
class ClosedLoopSampler {
 public:
  ClosedLoopSampler(LtpBlock hardware, LtpBlock controller, FrameTransform frame,
                    std::vector<int> pairing, Real f1);

  [[nodiscard]] int nx() const { return hw_.nx + ct_.nx; }
  [[nodiscard]] int nw() const { return hw_.nw + ct_.nw; }
  [[nodiscard]] int ny_hw() const { return hw_.ny; }

  [[nodiscard]] Matrix closed_a(Real t) const;
  [[nodiscard]] Matrix closed_e(Real t) const;
  /// Hardware-side outputs under the resolved feedback.
  [[nodiscard]] Vector hardware_output(Real t, const Vector& x, const Vector& w) const;

 private:
  struct Pointwise {
    Matrix a, b, c, d, e, f, t;
    Eigen::PartialPivLU<Matrix> loop;  // I - D*T
  };
  [[nodiscard]] Pointwise assemble(Real t) const;

  LtpBlock hw_;
  LtpBlock ct_;
  FrameTransform frame_;
  std::vector<int> pairing_;
  Real f1_;
};

/// Full oracle run for one CIDER: integrate the closed loop under the given
/// grid-side and reference spectra, then DFT the settled port waveform.
struct CiderOracleResult {
  SteadyStateRun run;
  Matrix port_samples;        // settled period of the port quantity
  HarmonicSignal port_spectrum{3};
};

[[nodiscard]] CiderOracleResult cider_steady_state(const CiderModel& model, Real theta,
                                                   const HarmonicSignal& w_grid,
                                                   const HarmonicIndexSet& H,
                                                   const IntegrationSettings& settings);

}  // namespace hpf
