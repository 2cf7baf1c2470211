#pragma once

#include <string>
#include <vector>

#include "hpf/ltp_block.hpp"
#include "hpf/toeplitz.hpp"
#include "hpf/transforms.hpp"
#include "hpf/types.hpp"

namespace hpf {

enum class CiderMode {
  forming,    // imposes its port voltage, absorbs the grid-drawn current
  following,  // injects current, measures its port voltage
};

/// One ladder stage of the output filter: series L (with loss R) followed by
/// a shunt C.  Interior stages need C > 0 (a circuit node must exist between
/// consecutive inductors).  The last stage has C = 0 for a following CIDER
/// (the port quantity is the grid-side inductor current) and C > 0 for a
/// forming CIDER (the port quantity is the last capacitor voltage).
/// Per-unit values (inductance and capacitance carry seconds).
struct FilterStage {
  Real inductance = 0.0;
  Real resistance = 0.0;
  Real capacitance = 0.0;
};

/// One proportional-integral stage of the control cascade.  Stage 0 produces
/// the actuator command; each later stage feeds the reference of the stage
/// before it.  Per-unit gains (integral gain carries 1/seconds).
struct ControlStage {
  Real kp = 0.0;
  Real ki = 0.0;
};

enum class ControlFrame {
  park,    // rotating two-axis frame at the fundamental
  clarke,  // stationary two-axis frame
};

struct ReferenceLaw {
  enum class Kind {
    voltage_frequency,  // forming: fixed voltage magnitude and frequency
    power,              // following: fixed active/reactive power
  };
  Kind kind = Kind::voltage_frequency;
  Real v_set = 1.0;  // p.u., voltage_frequency
  Real f_set = 50.0;  // Hz, must match the grid fundamental
  Real p_set = 0.0;  // p.u., power
  Real q_set = 0.0;  // p.u., power
};

struct CiderModel {
  int node = 0;
  CiderMode mode = CiderMode::following;
  std::vector<FilterStage> filter;
  std::vector<ControlStage> controller;
  ControlFrame frame = ControlFrame::park;
  ReferenceLaw reference;

  [[nodiscard]] std::string label() const {
    return std::string(mode == CiderMode::forming ? "forming" : "following") +
           " resource at node " + std::to_string(node);
  }
};

/// Plausibility checks on the model family (stage counts, topology rules,
/// reference/mode pairing).  Throws on violation.
void validate_cider(const CiderModel& model, Real f1);

/// Hardware ladder in phase coordinates.  States per stage: inductor current,
/// then capacitor voltage where present.  Outputs: one three-phase block per
/// stage (the stage's controlled quantity); the last block is the port
/// quantity.  Disturbance: port voltage (following) or drawn current
/// (forming).
[[nodiscard]] LtpBlock build_filter_block(const CiderModel& model);

/// PI cascade in control coordinates.  Inputs: measured loop quantities
/// (innermost first); disturbance: external reference of the outermost loop;
/// output: actuator command.
[[nodiscard]] LtpBlock build_controller_block(const CiderModel& model);

/// Hardware output block index measured by each control loop: loop j pairs
/// with filter stage (stages - loops + j), so the outermost loop always acts
/// on the port quantity.
[[nodiscard]] std::vector<int> loop_pairing(const CiderModel& model);

/// Frame transform for the control coordinates; `theta` is the rotating
/// frame angle at t = 0 (ignored by the stationary frame).
[[nodiscard]] FrameTransform control_frame(const CiderModel& model, Real theta);

/// Fourier coefficients of the measurement matrix mapping stacked hardware
/// outputs to stacked control inputs: block row j holds the forward frame
/// map at block column pairing[j].
[[nodiscard]] std::map<int, MatrixComp> measurement_coefficients(const FrameTransform& frame,
                                                                 const std::vector<int>& pairing,
                                                                 int hardware_blocks);

/// Constant selector extracting the port block from stacked hardware outputs.
[[nodiscard]] MatrixComp port_selector(int hardware_blocks, int port_block);

/// Lifted open-loop interconnection: hardware and controller side by side
/// (block-diagonal), each lifted over H, states/inputs/outputs ordered
/// hardware first.
struct OpenLoopLifted {
  HarmonicIndexSet H;
  int nx_hw = 0, nu_hw = 0, ny_hw = 0, nw_hw = 0;
  int nx_ct = 0, nu_ct = 0, ny_ct = 0, nw_ct = 0;
  MatrixComp a, b, c, d, e, f;
  MatrixComp j_omega;  // harmonic frequency operator on the stacked state

  [[nodiscard]] int nx() const { return nx_hw + nx_ct; }
  [[nodiscard]] int nu() const { return nu_hw + nu_ct; }
  [[nodiscard]] int ny() const { return ny_hw + ny_ct; }
  [[nodiscard]] int nw() const { return nw_hw + nw_ct; }
};

[[nodiscard]] OpenLoopLifted assemble_open_loop(const LtpBlock& hardware,
                                                const LtpBlock& controller,
                                                const HarmonicIndexSet& H);

/// Lifted feedback interconnection matrix: actuator inputs from controller
/// outputs (backward frame map) and control inputs from hardware outputs
/// (measurement matrix); zero elsewhere.
[[nodiscard]] MatrixComp build_feedback(const OpenLoopLifted& open_loop,
                                        const FrameTransform& frame,
                                        const std::vector<int>& pairing);

/// Closed-loop lifted dynamics after eliminating u = T y:
///   A_cl = A + B (I - T D)^-1 T C      E_cl = E + B (I - T D)^-1 T F
///   C_cl = (I - D T)^-1 C              F_cl = (I - D T)^-1 F
struct ClosedLoopLifted {
  HarmonicIndexSet H;
  int nx = 0, ny = 0, nw = 0;
  int ny_hw = 0, nw_hw = 0;  // partition offsets (hardware rows/cols first)
  MatrixComp a, c, e, f;
  MatrixComp j_omega;
};

[[nodiscard]] ClosedLoopLifted close_loop(const OpenLoopLifted& open_loop,
                                          const MatrixComp& feedback, const std::string& label);

/// Harmonic transfer matrix of the closed loop, disturbances to outputs:
/// G = C_cl (jOmega - A_cl)^-1 E_cl + F_cl, with the hardware/controller
/// partition exposed.
struct HarmonicGain {
  HarmonicIndexSet H;
  int ny_hw = 0, ny_ct = 0, nw_hw = 0, nw_ct = 0;
  MatrixComp full;
  [[nodiscard]] MatrixComp hw_hw() const;  // port outputs from grid disturbance
  [[nodiscard]] MatrixComp hw_ct() const;  // port outputs from control reference
};

[[nodiscard]] HarmonicGain closed_loop_gain(const ClosedLoopLifted& loop,
                                            const std::string& label);

/// Reference spectrum of the voltage/frequency law: the control-frame
/// voltage reference (order 0 in the rotating frame, orders +-1 in the
/// stationary frame).  Rejects f_set different from the grid fundamental.
[[nodiscard]] HarmonicSignal reference_vf(const ReferenceLaw& law, ControlFrame frame,
                                          const HarmonicIndexSet& H);

/// Reference spectrum of the power law: order-0 two-axis current from the
/// order-0 two-axis voltage,
///   i_ref = [P*v_d + Q*v_q, P*v_q - Q*v_d] / (v_d^2 + v_q^2),
/// evaluated with complex coefficient arithmetic (the analytic extension off
/// the real-signal manifold).
[[nodiscard]] HarmonicSignal reference_pq(const ReferenceLaw& law, const HarmonicSignal& w_rho,
                                          const std::string& label);

/// Complex partials of the power law's order-0 map, d(i_d, i_q)/d(v_d, v_q).
[[nodiscard]] Eigen::Matrix2cd reference_pq_partials(const ReferenceLaw& law,
                                                     const HarmonicSignal& w_rho,
                                                     const std::string& label);

/// A CIDER compiled for one synchronization angle: lifted closed loop, gain,
/// and the port/measurement operators needed to evaluate the resource as a
/// harmonic-domain transfer map at its grid port.
struct CompiledCider {
  CiderModel model;
  HarmonicIndexSet H;
  Real theta = 0.0;
  ClosedLoopLifted loop;
  HarmonicGain gain;
  MatrixComp port_from_grid_w;  // selector * G_hw_hw (grid port <- grid disturbance)
  MatrixComp port_from_ref;     // selector * G_hw_ct (grid port <- reference)
  MatrixComp measure;           // forward frame map of the grid disturbance

  [[nodiscard]] std::string label() const { return model.label(); }
};

[[nodiscard]] CompiledCider compile_cider(const CiderModel& model, const HarmonicIndexSet& H,
                                          Real theta);

/// Grid-port response: voltage spectrum from drawn-current spectrum
/// (forming) or injected-current spectrum from port-voltage spectrum
/// (following).
[[nodiscard]] HarmonicSignal cider_output(const CompiledCider& cider,
                                          const HarmonicSignal& w_grid);

/// Complex derivative of cider_output with respect to the grid disturbance
/// spectrum (dense over H x H).  Exact for the compiled synchronization
/// angle; the angle's own sensitivity is deliberately not included.
[[nodiscard]] MatrixComp cider_output_jacobian(const CompiledCider& cider,
                                               const HarmonicSignal& w_grid);

}  // namespace hpf
