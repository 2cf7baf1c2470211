#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hpf/oracle.hpp"
#include "test_helpers.hpp"

using namespace hpf;
using namespace hpf::test;

namespace {

constexpr Real kF1 = 50.0;

/// First-order lag dx/dt = -a x + cos(w1 t): the steady-state response is the
/// textbook phasor X_1 = 0.5 / (a + j w1).
PeriodicOde lag_ode(Real a) {
  PeriodicOde ode;
  ode.nx = 1;
  ode.f1 = kF1;
  ode.dynamics = [a](Real) { return Matrix::Constant(1, 1, -a); };
  ode.forcing = [](Real t) {
    return Vector::Constant(1, std::cos(2.0 * kPi * kF1 * t));
  };
  return ode;
}

Real lag_error(Real a, int steps) {
  IntegrationSettings settings;
  settings.steps_per_period = steps;
  const SteadyStateRun run = integrate_periodic(lag_ode(a), settings);
  REQUIRE(run.settled);
  const HarmonicSignal spectrum = signal_from_waveform(run.state_samples, {3, kF1});
  const Complex want = 0.5 / Complex{a, 2.0 * kPi * kF1};
  return std::abs(spectrum.at(1)(0) - want) / std::abs(want);
}

}  // namespace

TEST_CASE("spectra sample to their trigonometric values") {
  HarmonicSignal x(1);
  x.set(0, VectorComp::Constant(1, 2.0));
  x.set(1, VectorComp::Constant(1, Complex{1.0, 1.0}));
  x.set(-1, VectorComp::Constant(1, Complex{1.0, -1.0}));
  const Real w1 = 2.0 * kPi * kF1;
  for (Real t : {0.0, 1e-3, 7e-3, 0.013}) {
    const Real want = 2.0 + 2.0 * (std::cos(w1 * t) - std::sin(w1 * t));
    CHECK(std::abs(sample_signal(x, t, kF1)(0) - want) < 1e-12);
  }
}

TEST_CASE("integrator reproduces the first-order lag phasor") {
  CHECK(lag_error(400.0, 4096) < 1e-6);
}

TEST_CASE("integrator is exact on the zero problem") {
  PeriodicOde ode = lag_ode(400.0);
  ode.forcing = [](Real) { return Vector::Zero(1); };
  IntegrationSettings settings;
  settings.steps_per_period = 256;
  const SteadyStateRun run = integrate_periodic(ode, settings);
  CHECK(run.settled);
  CHECK(run.deviation == 0.0);
  CHECK(run.state_samples.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("halving the step shrinks the error by the second-order factor") {
  const Real coarse = lag_error(400.0, 128);
  const Real fine = lag_error(400.0, 256);
  CHECK(coarse > 1e-6);  // visible discretization error at this step
  const Real ratio = coarse / fine;
  CHECK(ratio > 3.5);
  CHECK(ratio < 4.5);
}

TEST_CASE("periodically modulated dynamics match the harmonic-domain solve") {
  // dx/dt = (-a + 2 b cos(w1 t)) x + cos(w1 t): the modulation couples
  // neighbouring orders, so the steady spectrum solves (jOmega - A_hat) X = U.
  const Real a = 500.0, b = 150.0;
  PeriodicOde ode = lag_ode(a);
  ode.dynamics = [&](Real t) {
    return Matrix::Constant(1, 1, -a + 2.0 * b * std::cos(2.0 * kPi * kF1 * t));
  };
  IntegrationSettings settings;
  const SteadyStateRun run = integrate_periodic(ode, settings);
  REQUIRE(run.settled);
  const HarmonicIndexSet H_compare{5, kF1};
  const HarmonicSignal got = signal_from_waveform(run.state_samples, H_compare);

  // Independent solve on a wider set so truncation is negligible.
  const HarmonicIndexSet H{12, kF1};
  const ToeplitzOperator a_op =
      lift({{0, MatrixComp::Constant(1, 1, -a)},
            {1, MatrixComp::Constant(1, 1, b)},
            {-1, MatrixComp::Constant(1, 1, b)}},
           1, 1, H);
  HarmonicSignal u(1);
  u.set(1, VectorComp::Constant(1, 0.5));
  u.set(-1, VectorComp::Constant(1, 0.5));
  const VectorComp x_stack =
      (materialize_j_omega(1, H) - materialize(a_op, H))
          .partialPivLu()
          .solve(stack_signal(u, H));
  const HarmonicSignal want = unstack_signal(x_stack, 1, H);

  Real worst = 0.0;
  for (int h = -H_compare.h_max; h <= H_compare.h_max; ++h) {
    worst = std::max(worst, std::abs(got.at(h)(0) - want.at(h)(0)));
  }
  CHECK(worst / want.max_abs() < 1e-3);
}

TEST_CASE("divergence is reported, not returned") {
  PeriodicOde ode = lag_ode(400.0);
  ode.dynamics = [](Real) { return Matrix::Constant(1, 1, 200.0); };  // unstable
  IntegrationSettings settings;
  settings.steps_per_period = 256;
  CHECK_THROWS_AS((void)integrate_periodic(ode, settings), Error);
  try {
    (void)integrate_periodic(ode, settings);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::solver);
  }
}

TEST_CASE("a slow transient that misses the period budget is flagged unsettled") {
  PeriodicOde ode = lag_ode(1.0);  // time constant of 1 s vs a 20 ms period
  IntegrationSettings settings;
  settings.steps_per_period = 256;
  settings.max_periods = 3;
  const SteadyStateRun run = integrate_periodic(ode, settings);
  CHECK_FALSE(run.settled);
  CHECK(run.periods == 3);
  CHECK(run.deviation > settings.settle_tol);
}

TEST_CASE("resource oracle refuses steps too coarse for the harmonic set") {
  CiderModel model;
  model.mode = CiderMode::following;
  model.filter = {{3e-4, 0.01, 0.0}};
  model.controller = {{1.0, 100.0}};
  model.frame = ControlFrame::park;
  model.reference.kind = ReferenceLaw::Kind::power;
  model.reference.p_set = 0.3;
  model.reference.q_set = 0.1;

  HarmonicSignal w_grid(3);
  w_grid.set(1, VectorComp::Ones(3) * 0.5);
  w_grid.set(-1, VectorComp::Ones(3) * 0.5);

  IntegrationSettings settings;
  settings.steps_per_period = 100;  // below 64 steps per retained order
  const HarmonicIndexSet H{5, kF1};
  try {
    (void)cider_steady_state(model, 0.0, w_grid, H, settings);
    FAIL("expected an aliasing error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::aliasing);
  }
}
