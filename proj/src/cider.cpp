#include "hpf/cider.hpp"

#include <cmath>

namespace hpf {

namespace {

constexpr Real kConditionLimit = 1e12;
constexpr Real kReferenceFloor = 1e-6;

MatrixComp block_diag2(const MatrixComp& top, const MatrixComp& bottom) {
  MatrixComp out = MatrixComp::Zero(top.rows() + bottom.rows(), top.cols() + bottom.cols());
  out.topLeftCorner(top.rows(), top.cols()) = top;
  out.bottomRightCorner(bottom.rows(), bottom.cols()) = bottom;
  return out;
}

MatrixComp lift_dense(const std::map<int, MatrixComp>& coeffs, int rows, int cols,
                      const HarmonicIndexSet& H) {
  return materialize(lift(coeffs, rows, cols, H), H);
}

}  // namespace

void validate_cider(const CiderModel& model, Real f1) {
  const std::string label = model.label();
  if (model.filter.empty()) {
    throw Error(ErrorKind::model, label + ": at least one filter stage is required");
  }
  if (model.controller.empty()) {
    throw Error(ErrorKind::model, label + ": at least one control stage is required");
  }
  if (model.controller.size() > model.filter.size()) {
    throw Error(ErrorKind::model,
                label + ": more control loops than filter stages (" +
                    std::to_string(model.controller.size()) + " > " +
                    std::to_string(model.filter.size()) + ")");
  }
  const std::size_t last = model.filter.size() - 1;
  for (std::size_t i = 0; i < model.filter.size(); ++i) {
    const auto& st = model.filter[i];
    if (!(st.inductance > 0.0)) {
      throw Error(ErrorKind::parameter,
                  label + ": filter stage " + std::to_string(i) + " needs inductance > 0");
    }
    if (st.resistance < 0.0 || st.capacitance < 0.0) {
      throw Error(ErrorKind::parameter,
                  label + ": filter stage " + std::to_string(i) + " has negative loss/capacitance");
    }
    const bool needs_cap =
        i < last || model.mode == CiderMode::forming;  // a circuit node must exist there
    if (needs_cap && !(st.capacitance > 0.0)) {
      throw Error(ErrorKind::parameter,
                  label + ": filter stage " + std::to_string(i) +
                      " needs capacitance > 0 (interior stages always; the last stage of a "
                      "forming resource holds the port voltage)");
    }
    if (i == last && model.mode == CiderMode::following && st.capacitance > 0.0) {
      throw Error(ErrorKind::parameter,
                  label + ": the last stage of a following resource must not carry a "
                          "capacitor (the port quantity is the grid-side inductor current)");
    }
  }
  if (model.mode == CiderMode::forming &&
      model.reference.kind != ReferenceLaw::Kind::voltage_frequency) {
    throw Error(ErrorKind::unsupported, label + ": forming resources take a voltage/frequency setpoint");
  }
  if (model.mode == CiderMode::following && model.reference.kind != ReferenceLaw::Kind::power) {
    throw Error(ErrorKind::unsupported, label + ": following resources take a power setpoint");
  }
  if (model.reference.kind == ReferenceLaw::Kind::voltage_frequency &&
      std::abs(model.reference.f_set - f1) > 1e-9 * std::max(Real{1.0}, f1)) {
    throw Error(ErrorKind::unsupported,
                label + ": off-nominal frequency setpoint " + std::to_string(model.reference.f_set) +
                    " Hz (the study fundamental is " + std::to_string(f1) + " Hz)");
  }
  if (model.reference.kind == ReferenceLaw::Kind::power && model.frame != ControlFrame::park) {
    throw Error(ErrorKind::unsupported,
                label + ": the power law reads order-0 rotating-frame quantities and "
                        "needs the rotating control frame");
  }
}

LtpBlock build_filter_block(const CiderModel& model) {
  const int stages = static_cast<int>(model.filter.size());
  const bool forming = model.mode == CiderMode::forming;
  const int state_blocks = forming ? 2 * stages : 2 * stages - 1;

  LtpBlock hw;
  hw.nx = 3 * state_blocks;
  hw.nu = 3;
  hw.ny = 3 * stages;
  hw.nw = 3;

  MatrixComp a = MatrixComp::Zero(hw.nx, hw.nx);
  MatrixComp b = MatrixComp::Zero(hw.nx, hw.nu);
  MatrixComp c = MatrixComp::Zero(hw.ny, hw.nx);
  MatrixComp e = MatrixComp::Zero(hw.nx, hw.nw);
  const Matrix3 id = Matrix3::Identity();

  auto current_row = [&](int stage) { return 3 * (2 * stage); };
  auto voltage_row = [&](int stage) { return 3 * (2 * stage + 1); };
  auto has_cap = [&](int stage) { return forming || stage < stages - 1; };

  for (int s = 0; s < stages; ++s) {
    const auto& st = model.filter[static_cast<std::size_t>(s)];
    const Real li = 1.0 / st.inductance;
    const int ir = current_row(s);
    // d(i_s)/dt = (upstream voltage - R i_s - downstream voltage) / L.
    a.block(ir, ir, 3, 3) = (-st.resistance * li * id).cast<Complex>();
    if (s == 0) {
      b.block(ir, 0, 3, 3) = (li * id).cast<Complex>();
    } else {
      a.block(ir, voltage_row(s - 1), 3, 3) = (li * id).cast<Complex>();
    }
    if (has_cap(s)) {
      a.block(ir, voltage_row(s), 3, 3) = (-li * id).cast<Complex>();
    } else {
      e.block(ir, 0, 3, 3) = (-li * id).cast<Complex>();  // last stage faces the port voltage
    }
    if (has_cap(s)) {
      const Real ci = 1.0 / st.capacitance;
      const int vr = voltage_row(s);
      // d(v_s)/dt = (i_s - downstream current) / C.
      a.block(vr, ir, 3, 3) = (ci * id).cast<Complex>();
      if (s + 1 < stages) {
        a.block(vr, current_row(s + 1), 3, 3) = (-ci * id).cast<Complex>();
      } else {
        e.block(vr, 0, 3, 3) = (-ci * id).cast<Complex>();  // grid draws the port current
      }
    }
    // Stage output: inductor current, except the port voltage on a forming
    // resource's last stage.
    if (forming && s == stages - 1) {
      c.block(3 * s, voltage_row(s), 3, 3) = id.cast<Complex>();
    } else {
      c.block(3 * s, ir, 3, 3) = id.cast<Complex>();
    }
  }

  if (a.cwiseAbs().maxCoeff() > 0.0) hw.a[0] = a;
  if (b.cwiseAbs().maxCoeff() > 0.0) hw.b[0] = b;
  if (c.cwiseAbs().maxCoeff() > 0.0) hw.c[0] = c;
  if (e.cwiseAbs().maxCoeff() > 0.0) hw.e[0] = e;
  return hw;
}

LtpBlock build_controller_block(const CiderModel& model) {
  const int loops = static_cast<int>(model.controller.size());
  const int n = 2 * loops;

  LtpBlock ct;
  ct.nx = n;
  ct.nu = n;
  ct.ny = 2;
  ct.nw = 2;

  MatrixComp a = MatrixComp::Zero(n, n);
  MatrixComp b = MatrixComp::Zero(n, n);
  MatrixComp e = MatrixComp::Zero(n, 2);

  // out_j = kp_j * (ref_j - u_j) + ki_j * x_j, where ref of the outermost
  // loop is the external reference and each inner loop tracks the output of
  // the loop outside it.  Accumulate the affine expression of out_j while
  // walking from the outermost loop inward.
  MatrixComp out_x = MatrixComp::Zero(2, n);
  MatrixComp out_u = MatrixComp::Zero(2, n);
  MatrixComp out_w = MatrixComp::Identity(2, 2);  // ref of the outermost loop

  for (int j = loops - 1; j >= 0; --j) {
    const auto& st = model.controller[static_cast<std::size_t>(j)];
    MatrixComp err_x = out_x;
    MatrixComp err_u = out_u;
    MatrixComp err_w = out_w;
    err_u.block(0, 2 * j, 2, 2) -= MatrixComp::Identity(2, 2);

    // Integrator of loop j: dx_j/dt = error_j.
    a.block(2 * j, 0, 2, n) = err_x;
    b.block(2 * j, 0, 2, n) = err_u;
    e.block(2 * j, 0, 2, 2) = err_w;

    out_x = st.kp * err_x;
    out_x.block(0, 2 * j, 2, 2) += st.ki * MatrixComp::Identity(2, 2);
    out_u = st.kp * err_u;
    out_w = st.kp * err_w;
  }

  if (a.cwiseAbs().maxCoeff() > 0.0) ct.a[0] = a;
  if (b.cwiseAbs().maxCoeff() > 0.0) ct.b[0] = b;
  ct.c[0] = out_x;
  if (out_u.cwiseAbs().maxCoeff() > 0.0) ct.d[0] = out_u;
  if (out_w.cwiseAbs().maxCoeff() > 0.0) ct.f[0] = out_w;
  if (e.cwiseAbs().maxCoeff() > 0.0) ct.e[0] = e;
  return ct;
}

std::vector<int> loop_pairing(const CiderModel& model) {
  const int stages = static_cast<int>(model.filter.size());
  const int loops = static_cast<int>(model.controller.size());
  std::vector<int> pairing(static_cast<std::size_t>(loops));
  for (int j = 0; j < loops; ++j) {
    pairing[static_cast<std::size_t>(j)] = stages - loops + j;
  }
  return pairing;
}

FrameTransform control_frame(const CiderModel& model, Real theta) {
  return model.frame == ControlFrame::park ? FrameTransform::park(theta)
                                           : FrameTransform::clarke();
}

std::map<int, MatrixComp> measurement_coefficients(const FrameTransform& frame,
                                                   const std::vector<int>& pairing,
                                                   int hardware_blocks) {
  const int loops = static_cast<int>(pairing.size());
  std::map<int, MatrixComp> out;
  for (const auto& [h, fwd] : frame.forward) {
    MatrixComp m = MatrixComp::Zero(static_cast<Eigen::Index>(frame.control_dim) * loops,
                                    static_cast<Eigen::Index>(frame.hardware_dim) * hardware_blocks);
    for (int j = 0; j < loops; ++j) {
      const int stage = pairing[static_cast<std::size_t>(j)];
      if (stage < 0 || stage >= hardware_blocks) {
        throw Error(ErrorKind::model, "control loop measures a nonexistent hardware block");
      }
      m.block(static_cast<Eigen::Index>(frame.control_dim) * j,
              static_cast<Eigen::Index>(frame.hardware_dim) * stage, frame.control_dim,
              frame.hardware_dim) = fwd;
    }
    out.emplace(h, std::move(m));
  }
  return out;
}

MatrixComp port_selector(int hardware_blocks, int port_block) {
  MatrixComp s = MatrixComp::Zero(3, static_cast<Eigen::Index>(3) * hardware_blocks);
  s.block(0, static_cast<Eigen::Index>(3) * port_block, 3, 3) = MatrixComp::Identity(3, 3);
  return s;
}

OpenLoopLifted assemble_open_loop(const LtpBlock& hardware, const LtpBlock& controller,
                                  const HarmonicIndexSet& H) {
  hardware.validate("hardware block");
  controller.validate("controller block");

  OpenLoopLifted ol;
  ol.H = H;
  ol.nx_hw = hardware.nx;
  ol.nu_hw = hardware.nu;
  ol.ny_hw = hardware.ny;
  ol.nw_hw = hardware.nw;
  ol.nx_ct = controller.nx;
  ol.nu_ct = controller.nu;
  ol.ny_ct = controller.ny;
  ol.nw_ct = controller.nw;

  ol.a = block_diag2(lift_dense(hardware.a, hardware.nx, hardware.nx, H),
                     lift_dense(controller.a, controller.nx, controller.nx, H));
  ol.b = block_diag2(lift_dense(hardware.b, hardware.nx, hardware.nu, H),
                     lift_dense(controller.b, controller.nx, controller.nu, H));
  ol.c = block_diag2(lift_dense(hardware.c, hardware.ny, hardware.nx, H),
                     lift_dense(controller.c, controller.ny, controller.nx, H));
  ol.d = block_diag2(lift_dense(hardware.d, hardware.ny, hardware.nu, H),
                     lift_dense(controller.d, controller.ny, controller.nu, H));
  ol.e = block_diag2(lift_dense(hardware.e, hardware.nx, hardware.nw, H),
                     lift_dense(controller.e, controller.nx, controller.nw, H));
  ol.f = block_diag2(lift_dense(hardware.f, hardware.ny, hardware.nw, H),
                     lift_dense(controller.f, controller.ny, controller.nw, H));
  ol.j_omega = block_diag2(materialize_j_omega(hardware.nx, H),
                           materialize_j_omega(controller.nx, H));
  return ol;
}

MatrixComp build_feedback(const OpenLoopLifted& ol, const FrameTransform& frame,
                          const std::vector<int>& pairing) {
  if (frame.hardware_dim != ol.nu_hw) {
    throw Error(ErrorKind::dimension, "frame hardware dimension does not match actuator width");
  }
  if (static_cast<int>(pairing.size()) * frame.control_dim != ol.nu_ct) {
    throw Error(ErrorKind::dimension, "loop pairing does not cover the control inputs");
  }
  if (ol.ny_hw % 3 != 0) {
    throw Error(ErrorKind::dimension, "hardware outputs must stack three-phase blocks");
  }
  const int nb = ol.H.count();
  MatrixComp t = MatrixComp::Zero(static_cast<Eigen::Index>(ol.nu()) * nb,
                                  static_cast<Eigen::Index>(ol.ny()) * nb);
  // Actuator inputs from controller outputs.
  t.block(0, static_cast<Eigen::Index>(ol.ny_hw) * nb, static_cast<Eigen::Index>(ol.nu_hw) * nb,
          static_cast<Eigen::Index>(ol.ny_ct) * nb) =
      materialize(backward_operator(frame, ol.H), ol.H);
  // Control inputs from measured hardware outputs.
  const auto meas = measurement_coefficients(frame, pairing, ol.ny_hw / 3);
  t.block(static_cast<Eigen::Index>(ol.nu_hw) * nb, 0, static_cast<Eigen::Index>(ol.nu_ct) * nb,
          static_cast<Eigen::Index>(ol.ny_hw) * nb) =
      materialize(lift(meas, ol.nu_ct, ol.ny_hw, ol.H), ol.H);
  return t;
}

ClosedLoopLifted close_loop(const OpenLoopLifted& ol, const MatrixComp& feedback,
                            const std::string& label) {
  const int nb = ol.H.count();
  if (feedback.rows() != static_cast<Eigen::Index>(ol.nu()) * nb ||
      feedback.cols() != static_cast<Eigen::Index>(ol.ny()) * nb) {
    throw Error(ErrorKind::dimension, label + ": feedback operator size does not match u/y");
  }

  const MatrixComp m_u =
      MatrixComp::Identity(feedback.rows(), feedback.rows()) - feedback * ol.d;
  Eigen::PartialPivLU<MatrixComp> lu_u(m_u);
  if (ill_conditioned(lu_u, kConditionLimit)) {
    throw Error(ErrorKind::algebraic_loop,
                label + ": feedback interconnection is ill-posed (I - T*D singular, "
                        "condition estimate above 1e12)");
  }
  const MatrixComp m_y =
      MatrixComp::Identity(feedback.cols(), feedback.cols()) - ol.d * feedback;
  Eigen::PartialPivLU<MatrixComp> lu_y(m_y);
  if (ill_conditioned(lu_y, kConditionLimit)) {
    throw Error(ErrorKind::algebraic_loop,
                label + ": feedback interconnection is ill-posed (I - D*T singular)");
  }

  ClosedLoopLifted cl;
  cl.H = ol.H;
  cl.nx = ol.nx();
  cl.ny = ol.ny();
  cl.nw = ol.nw();
  cl.ny_hw = ol.ny_hw;
  cl.nw_hw = ol.nw_hw;
  cl.a = ol.a + ol.b * lu_u.solve(feedback * ol.c);
  cl.e = ol.e + ol.b * lu_u.solve(feedback * ol.f);
  cl.c = lu_y.solve(ol.c);
  cl.f = lu_y.solve(ol.f);
  cl.j_omega = ol.j_omega;
  return cl;
}

HarmonicGain closed_loop_gain(const ClosedLoopLifted& loop, const std::string& label) {
  const MatrixComp k = loop.j_omega - loop.a;
  Eigen::PartialPivLU<MatrixComp> lu(k);
  if (ill_conditioned(lu, kConditionLimit)) {
    throw Error(ErrorKind::gain_existence,
                label + ": closed-loop dynamics are (near-)resonant on the retained "
                        "frequency comb (condition estimate " +
                    std::to_string(1.0 / std::max(lu.rcond(), 1e-300)) +
                    "); the transfer gain does not exist");
  }

  HarmonicGain g;
  g.H = loop.H;
  g.ny_hw = loop.ny_hw;
  g.ny_ct = loop.ny - loop.ny_hw;
  g.nw_hw = loop.nw_hw;
  g.nw_ct = loop.nw - loop.nw_hw;
  g.full = loop.c * lu.solve(loop.e) + loop.f;
  return g;
}

MatrixComp HarmonicGain::hw_hw() const {
  const int nb = H.count();
  return full.topLeftCorner(static_cast<Eigen::Index>(ny_hw) * nb,
                            static_cast<Eigen::Index>(nw_hw) * nb);
}

MatrixComp HarmonicGain::hw_ct() const {
  const int nb = H.count();
  return full.topRightCorner(static_cast<Eigen::Index>(ny_hw) * nb,
                             static_cast<Eigen::Index>(nw_ct) * nb);
}

HarmonicSignal reference_vf(const ReferenceLaw& law, ControlFrame frame,
                            const HarmonicIndexSet& H) {
  if (std::abs(law.f_set - H.f1) > 1e-9 * std::max(Real{1.0}, H.f1)) {
    throw Error(ErrorKind::unsupported,
                "off-nominal frequency setpoint " + std::to_string(law.f_set) +
                    " Hz (the study fundamental is " + std::to_string(H.f1) + " Hz)");
  }
  HarmonicSignal ref(2);
  if (frame == ControlFrame::park) {
    VectorComp dc(2);
    dc << Complex(law.v_set, 0.0), Complex(0.0, 0.0);
    ref.set(0, dc);
  } else {
    // Stationary frame: the same voltage phasor spins at the fundamental.
    VectorComp plus(2);
    plus << Complex(0.5 * law.v_set, 0.0), Complex(0.0, -0.5 * law.v_set);
    ref.set(+1, plus);
    ref.set(-1, plus.conjugate());
  }
  return ref;
}

namespace {

struct PqPoint {
  Complex vd, vq, den;
};

PqPoint pq_point(const HarmonicSignal& w_rho, const std::string& label) {
  const VectorComp v0 = w_rho.at(0);
  if (v0.size() != 2) {
    throw Error(ErrorKind::dimension, label + ": power law expects a two-axis voltage signal");
  }
  PqPoint p;
  p.vd = v0(0);
  p.vq = v0(1);
  p.den = p.vd * p.vd + p.vq * p.vq;
  if (std::sqrt(std::abs(p.den)) < kReferenceFloor) {
    throw Error(ErrorKind::reference_singularity,
                label + ": fundamental positive-sequence voltage below " +
                    std::to_string(kReferenceFloor) + " p.u.; the power law is singular");
  }
  return p;
}

}  // namespace

HarmonicSignal reference_pq(const ReferenceLaw& law, const HarmonicSignal& w_rho,
                            const std::string& label) {
  const PqPoint p = pq_point(w_rho, label);
  const Complex id = (law.p_set * p.vd + law.q_set * p.vq) / p.den;
  const Complex iq = (law.p_set * p.vq - law.q_set * p.vd) / p.den;
  HarmonicSignal ref(2);
  VectorComp dc(2);
  dc << id, iq;
  ref.set(0, dc);
  return ref;
}

Eigen::Matrix2cd reference_pq_partials(const ReferenceLaw& law, const HarmonicSignal& w_rho,
                                       const std::string& label) {
  const PqPoint p = pq_point(w_rho, label);
  const Real P = law.p_set;
  const Real Q = law.q_set;
  const Complex nd = P * p.vd + Q * p.vq;
  const Complex nq = P * p.vq - Q * p.vd;
  const Complex den2 = p.den * p.den;
  Eigen::Matrix2cd j;
  j(0, 0) = (P * p.den - nd * 2.0 * p.vd) / den2;
  j(0, 1) = (Q * p.den - nd * 2.0 * p.vq) / den2;
  j(1, 0) = (-Q * p.den - nq * 2.0 * p.vd) / den2;
  j(1, 1) = (P * p.den - nq * 2.0 * p.vq) / den2;
  return j;
}

CompiledCider compile_cider(const CiderModel& model, const HarmonicIndexSet& H, Real theta) {
  validate_cider(model, H.f1);
  const std::string label = model.label();

  const LtpBlock hw = build_filter_block(model);
  const LtpBlock ct = build_controller_block(model);
  const FrameTransform frame = control_frame(model, theta);
  const std::vector<int> pairing = loop_pairing(model);

  const OpenLoopLifted ol = assemble_open_loop(hw, ct, H);
  const MatrixComp t_hat = build_feedback(ol, frame, pairing);

  CompiledCider out;
  out.model = model;
  out.H = H;
  out.theta = theta;
  out.loop = close_loop(ol, t_hat, label);
  out.gain = closed_loop_gain(out.loop, label);

  const int stages = static_cast<int>(model.filter.size());
  const MatrixComp port = materialize(lift_constant(port_selector(stages, stages - 1)), H);
  out.port_from_grid_w = port * out.gain.hw_hw();
  out.port_from_ref = port * out.gain.hw_ct();
  out.measure = materialize(forward_operator(frame, H), H);
  return out;
}

HarmonicSignal cider_output(const CompiledCider& cider, const HarmonicSignal& w_grid) {
  if (w_grid.dim != 3) {
    throw Error(ErrorKind::dimension, cider.label() + ": grid disturbance must be three-phase");
  }
  const VectorComp w_vec = stack_signal(w_grid, cider.H);
  HarmonicSignal ref;
  if (cider.model.reference.kind == ReferenceLaw::Kind::voltage_frequency) {
    ref = reference_vf(cider.model.reference, cider.model.frame, cider.H);
  } else {
    const HarmonicSignal w_rho = unstack_signal(cider.measure * w_vec, 2, cider.H);
    ref = reference_pq(cider.model.reference, w_rho, cider.label());
  }
  const VectorComp y_vec =
      cider.port_from_grid_w * w_vec + cider.port_from_ref * stack_signal(ref, cider.H);
  return unstack_signal(y_vec, 3, cider.H);
}

MatrixComp cider_output_jacobian(const CompiledCider& cider, const HarmonicSignal& w_grid) {
  if (cider.model.reference.kind == ReferenceLaw::Kind::voltage_frequency) {
    return cider.port_from_grid_w;  // the reference does not move with the grid
  }
  const VectorComp w_vec = stack_signal(w_grid, cider.H);
  const HarmonicSignal w_rho = unstack_signal(cider.measure * w_vec, 2, cider.H);
  const Eigen::Matrix2cd dref = reference_pq_partials(cider.model.reference, w_rho, cider.label());

  const int nb = cider.H.count();
  MatrixComp dr = MatrixComp::Zero(static_cast<Eigen::Index>(2) * nb,
                                   static_cast<Eigen::Index>(2) * nb);
  const Eigen::Index at = static_cast<Eigen::Index>(2) * cider.H.index_of(0);
  dr.block(at, at, 2, 2) = dref;
  return cider.port_from_grid_w + cider.port_from_ref * dr * cider.measure;
}

}  // namespace hpf
