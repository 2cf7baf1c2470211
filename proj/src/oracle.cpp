#include "hpf/oracle.hpp"

#include <cmath>

namespace hpf {

Vector sample_signal(const HarmonicSignal& x, Real t, Real f1) {
  VectorComp value = VectorComp::Zero(x.dim);
  const Real w1 = 2.0 * kPi * f1;
  for (const auto& [h, c] : x.coeffs) {
    value += c * std::exp(kImag * (static_cast<Real>(h) * w1 * t));
  }
  return value.real();
}

SteadyStateRun integrate_periodic(const PeriodicOde& ode, const IntegrationSettings& settings) {
  const int n = settings.steps_per_period;
  if (n < 2) throw Error(ErrorKind::model, "integration needs at least two steps per period");
  const Real period = 1.0 / ode.f1;
  const Real dt = period / static_cast<Real>(n);

  // Dynamics and forcing are periodic: factor once per step index.
  std::vector<Eigen::PartialPivLU<Matrix>> stepper;
  std::vector<Matrix> advance;
  std::vector<Vector> force;
  stepper.reserve(static_cast<std::size_t>(n));
  advance.reserve(static_cast<std::size_t>(n));
  force.reserve(static_cast<std::size_t>(n));
  const Matrix id = Matrix::Identity(ode.nx, ode.nx);
  for (int k = 0; k < n; ++k) {
    const Matrix a_mid = ode.dynamics((static_cast<Real>(k) + 0.5) * dt);
    stepper.emplace_back(id - 0.5 * dt * a_mid);
    advance.push_back(id + 0.5 * dt * a_mid);
    force.push_back(ode.forcing(static_cast<Real>(k) * dt));
  }

  SteadyStateRun out;
  out.state_samples = Matrix::Zero(n, ode.nx);
  Matrix previous = Matrix::Zero(n, ode.nx);

  Vector x = Vector::Zero(ode.nx);
  for (int period_index = 0; period_index < settings.max_periods; ++period_index) {
    for (int k = 0; k < n; ++k) {
      out.state_samples.row(k) = x.transpose();
      const Vector rhs = advance[static_cast<std::size_t>(k)] * x +
                         0.5 * dt *
                             (force[static_cast<std::size_t>(k)] +
                              force[static_cast<std::size_t>((k + 1) % n)]);
      x = stepper[static_cast<std::size_t>(k)].solve(rhs);
      if (!x.allFinite() || x.cwiseAbs().maxCoeff() > settings.blowup_limit) {
        throw Error(ErrorKind::solver, "time-domain integration diverged (unstable closed loop "
                                       "or too coarse a step)");
      }
    }
    out.periods = period_index + 1;
    out.deviation = (out.state_samples - previous).cwiseAbs().maxCoeff();
    if (period_index > 0 && out.deviation < settings.settle_tol) {
      out.settled = true;
      return out;
    }
    previous = out.state_samples;
  }
  return out;  // settled == false: caller decides whether that is fatal
}

ClosedLoopSampler::ClosedLoopSampler(LtpBlock hardware, LtpBlock controller, FrameTransform frame,
                                     std::vector<int> pairing, Real f1)
    : hw_(std::move(hardware)),
      ct_(std::move(controller)),
      frame_(std::move(frame)),
      pairing_(std::move(pairing)),
      f1_(f1) {
  hw_.validate("hardware block");
  ct_.validate("controller block");
  if (frame_.hardware_dim != hw_.nu || frame_.control_dim * static_cast<int>(pairing_.size()) != ct_.nu) {
    throw Error(ErrorKind::dimension, "frame/pairing do not match the block interconnection");
  }
}

ClosedLoopSampler::Pointwise ClosedLoopSampler::assemble(Real t) const {
  Pointwise p;
  const int nx = this->nx();
  const int nu = hw_.nu + ct_.nu;
  const int ny = hw_.ny + ct_.ny;
  const int nw = this->nw();

  p.a = Matrix::Zero(nx, nx);
  p.a.topLeftCorner(hw_.nx, hw_.nx) = hw_.a_at(t, f1_);
  p.a.bottomRightCorner(ct_.nx, ct_.nx) = ct_.a_at(t, f1_);
  p.b = Matrix::Zero(nx, nu);
  p.b.topLeftCorner(hw_.nx, hw_.nu) = hw_.b_at(t, f1_);
  p.b.bottomRightCorner(ct_.nx, ct_.nu) = ct_.b_at(t, f1_);
  p.c = Matrix::Zero(ny, nx);
  p.c.topLeftCorner(hw_.ny, hw_.nx) = hw_.c_at(t, f1_);
  p.c.bottomRightCorner(ct_.ny, ct_.nx) = ct_.c_at(t, f1_);
  p.d = Matrix::Zero(ny, nu);
  p.d.topLeftCorner(hw_.ny, hw_.nu) = hw_.d_at(t, f1_);
  p.d.bottomRightCorner(ct_.ny, ct_.nu) = ct_.d_at(t, f1_);
  p.e = Matrix::Zero(nx, nw);
  p.e.topLeftCorner(hw_.nx, hw_.nw) = hw_.e_at(t, f1_);
  p.e.bottomRightCorner(ct_.nx, ct_.nw) = ct_.e_at(t, f1_);
  p.f = Matrix::Zero(ny, nw);
  p.f.topLeftCorner(hw_.ny, hw_.nw) = hw_.f_at(t, f1_);
  p.f.bottomRightCorner(ct_.ny, ct_.nw) = ct_.f_at(t, f1_);

  // Feedback: actuator from controller output, measurements from hardware
  // outputs through the forward frame map.
  p.t = Matrix::Zero(nu, ny);
  ToeplitzOperator bwd(frame_.hardware_dim, frame_.control_dim);
  bwd.coeffs = frame_.backward;
  p.t.block(0, hw_.ny, hw_.nu, ct_.ny) = bwd.sample(t, f1_);
  ToeplitzOperator fwd(frame_.control_dim, frame_.hardware_dim);
  fwd.coeffs = frame_.forward;
  const Matrix fwd_t = fwd.sample(t, f1_);
  for (std::size_t j = 0; j < pairing_.size(); ++j) {
    p.t.block(hw_.nu + static_cast<int>(j) * frame_.control_dim, pairing_[j] * 3,
              frame_.control_dim, 3) = fwd_t;
  }

  p.loop.compute(Matrix::Identity(ny, ny) - p.d * p.t);
  if (ill_conditioned(p.loop)) {
    throw Error(ErrorKind::algebraic_loop,
                "pointwise feedback algebra is singular at t = " + std::to_string(t));
  }
  return p;
}

Matrix ClosedLoopSampler::closed_a(Real t) const {
  const Pointwise p = assemble(t);
  return p.a + p.b * p.t * p.loop.solve(p.c);
}

Matrix ClosedLoopSampler::closed_e(Real t) const {
  const Pointwise p = assemble(t);
  return p.e + p.b * p.t * p.loop.solve(p.f);
}

Vector ClosedLoopSampler::hardware_output(Real t, const Vector& x, const Vector& w) const {
  const Pointwise p = assemble(t);
  const Vector y = p.loop.solve(p.c * x + p.f * w);
  return y.head(hw_.ny);
}

CiderOracleResult cider_steady_state(const CiderModel& model, Real theta,
                                     const HarmonicSignal& w_grid, const HarmonicIndexSet& H,
                                     const IntegrationSettings& settings) {
  validate_cider(model, H.f1);
  if (settings.steps_per_period < 64 * std::max(1, H.h_max)) {
    throw Error(ErrorKind::aliasing, "need at least 64 steps per period per retained order");
  }
  const LtpBlock hw = build_filter_block(model);
  const LtpBlock ct = build_controller_block(model);
  const FrameTransform frame = control_frame(model, theta);
  const ClosedLoopSampler sampler(hw, ct, frame, loop_pairing(model), H.f1);

  // Reference spectrum: fixed setpoint, or the power law evaluated on the
  // order-0 rotating-frame voltage of the *given* grid disturbance.
  HarmonicSignal w_ct(2);
  if (model.reference.kind == ReferenceLaw::Kind::voltage_frequency) {
    w_ct = reference_vf(model.reference, model.frame, H);
  } else {
    ToeplitzOperator fwd = forward_operator(frame, H);
    const HarmonicSignal w_rho = apply(fwd, w_grid, H);
    w_ct = reference_pq(model.reference, w_rho, model.label());
  }

  auto w_of = [w_grid, w_ct, f1 = H.f1](Real t) {
    Vector w(5);
    w.head(3) = sample_signal(w_grid, t, f1);
    w.tail(2) = sample_signal(w_ct, t, f1);
    return w;
  };

  PeriodicOde ode;
  ode.nx = sampler.nx();
  ode.f1 = H.f1;
  ode.dynamics = [&sampler](Real t) { return sampler.closed_a(t); };
  // The explicit return type forces the product to be evaluated while its
  // operands are still alive; a deduced return type would hand the type-erased
  // wrapper an expression referencing two dead temporaries.
  ode.forcing = [&sampler, &w_of](Real t) -> Vector { return sampler.closed_e(t) * w_of(t); };

  CiderOracleResult out;
  out.run = integrate_periodic(ode, settings);

  const int n = settings.steps_per_period;
  const Real dt = 1.0 / (H.f1 * static_cast<Real>(n));
  const int port_block = static_cast<int>(model.filter.size()) - 1;
  out.port_samples = Matrix::Zero(n, 3);
  for (int k = 0; k < n; ++k) {
    const Vector y = sampler.hardware_output(static_cast<Real>(k) * dt,
                                             out.run.state_samples.row(k).transpose(),
                                             w_of(static_cast<Real>(k) * dt));
    out.port_samples.row(k) = y.segment(3 * port_block, 3).transpose();
  }
  out.port_spectrum = signal_from_waveform(out.port_samples, H);
  return out;
}

}  // namespace hpf
