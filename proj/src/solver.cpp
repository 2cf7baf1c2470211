#include "hpf/solver.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <map>
#include <mutex>
#include <thread>

namespace hpf {

namespace {

constexpr Real kConditionLimit = 1e12;

int resolve_threads(int requested, int tasks) {
  if (tasks <= 1) return 1;
  const unsigned hw = std::thread::hardware_concurrency();
  int limit = requested > 0 ? requested : (hw > 0 ? static_cast<int>(hw) : 1);
  if (const char* env = std::getenv("HPF_THREADS")) {
    char* end = nullptr;
    const long parsed = std::strtol(env, &end, 10);
    if (end != env && parsed > 0) limit = std::min<int>(limit, static_cast<int>(parsed));
  }
  return std::clamp(limit, 1, tasks);
}

/// Static work split over [0, count); exceptions are collected and the first
/// one rethrown after all workers joined.  Each task writes only its own
/// output slot, so results do not depend on the thread count.
template <typename F>
void parallel_for(int count, int threads, F&& body) {
  const int n = std::min(resolve_threads(threads, count), count);
  if (n <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

/// Extracts the three-phase sub-signal of node block `block` from a stacked
/// node-major signal.
HarmonicSignal slice_blocks(const HarmonicSignal& x, int block) {
  HarmonicSignal out(3);
  for (const auto& [h, c] : x.coeffs) {
    VectorComp seg = c.segment(static_cast<Eigen::Index>(3) * block, 3);
    if (seg.cwiseAbs().maxCoeff() > 0.0) out.set(h, seg);
  }
  return out;
}

/// Stacks per-node three-phase signals back into one node-major signal.
HarmonicSignal stack_nodewise(const std::vector<HarmonicSignal>& parts) {
  const int n = static_cast<int>(parts.size());
  std::map<int, VectorComp> merged;
  for (int i = 0; i < n; ++i) {
    for (const auto& [h, c] : parts[static_cast<std::size_t>(i)].coeffs) {
      if (c.cwiseAbs().maxCoeff() == 0.0) continue;
      auto [it, inserted] = merged.try_emplace(h, VectorComp::Zero(3 * n));
      it->second.segment(static_cast<Eigen::Index>(3) * i, 3) = c;
    }
  }
  HarmonicSignal out(3 * n);
  out.coeffs = std::move(merged);
  return out;
}

/// y(h) = L_|h| a(h) + R_|h| b(h), with conjugated blocks at negative orders
/// (the per-harmonic operators describe a real elementwise family).
HarmonicSignal apply_hybrid_pair(const std::vector<HybridBlocks>& per_order,
                                 const HarmonicIndexSet& H, MatrixComp HybridBlocks::*left,
                                 const HarmonicSignal& a, MatrixComp HybridBlocks::*right,
                                 const HarmonicSignal& b) {
  const auto& first = per_order.front();
  const Eigen::Index rows = (first.*left).rows();
  if ((first.*left).cols() != a.dim || (first.*right).cols() != b.dim ||
      (first.*right).rows() != rows) {
    throw Error(ErrorKind::dimension, "grid operator blocks do not match the iterate layout");
  }
  HarmonicSignal y(static_cast<int>(rows));
  for (int h = -H.h_max; h <= H.h_max; ++h) {
    const auto& blk = per_order[static_cast<std::size_t>(std::abs(h))];
    VectorComp acc = VectorComp::Zero(rows);
    bool any = false;
    if (a.has(h)) {
      const MatrixComp& m = blk.*left;
      acc += (h < 0) ? (m.conjugate() * a.at(h)).eval() : (m * a.at(h)).eval();
      any = true;
    }
    if (b.has(h)) {
      const MatrixComp& m = blk.*right;
      acc += (h < 0) ? (m.conjugate() * b.at(h)).eval() : (m * b.at(h)).eval();
      any = true;
    }
    if (any && acc.cwiseAbs().maxCoeff() > 0.0) y.set(h, acc);
  }
  return y;
}

/// Subtracts a per-node real-chart Jacobian (3 rows/cols per chart block)
/// from the corresponding node blocks of the full real Jacobian.
void subtract_node_jacobian(Matrix& jac, Eigen::Index base_row, Eigen::Index base_col,
                            const Matrix& small, const HarmonicIndexSet& H, int node_out,
                            int nodes_out, int node_in, int nodes_in) {
  const int chart_blocks = 2 * H.h_max + 1;
  for (int pr = 0; pr < chart_blocks; ++pr) {
    for (int pc = 0; pc < chart_blocks; ++pc) {
      jac.block(base_row + 3 * (static_cast<Eigen::Index>(nodes_out) * pr + node_out),
                base_col + 3 * (static_cast<Eigen::Index>(nodes_in) * pc + node_in), 3, 3) -=
          small.block(static_cast<Eigen::Index>(3) * pr, static_cast<Eigen::Index>(3) * pc, 3, 3);
    }
  }
}

std::vector<MatrixComp> gather_blocks(const std::vector<HybridBlocks>& per_order,
                                      MatrixComp HybridBlocks::*member) {
  std::vector<MatrixComp> out;
  out.reserve(per_order.size());
  for (const auto& blk : per_order) out.push_back(blk.*member);
  return out;
}

void require_symmetric_spectrum(const HarmonicSignal& x, const std::string& label) {
  const Real defect = conjugate_symmetry_defect(x);
  if (defect > 1e-12 * std::max(1.0, x.max_abs())) {
    throw Error(ErrorKind::model, label + ": source spectrum is not conjugate-symmetric (defect " +
                                      std::to_string(defect) + ")");
  }
}

/// Recompiles the converters among the following resources for new
/// synchronization angles; source equivalents keep their cached affine form.
void refresh_following(const HpfProblem& problem, const SyncState& sync,
                       CompiledResources& resources) {
  std::vector<int> cider_slots;
  for (int i = 0; i < problem.r_count(); ++i) {
    if (std::holds_alternative<CiderModel>(problem.following[static_cast<std::size_t>(i)])) {
      cider_slots.push_back(i);
    }
  }
  parallel_for(static_cast<int>(cider_slots.size()), problem.options.threads, [&](int k) {
    const int i = cider_slots[static_cast<std::size_t>(k)];
    const auto& model = std::get<CiderModel>(problem.following[static_cast<std::size_t>(i)]);
    resources.following[static_cast<std::size_t>(i)].cider =
        compile_cider(model, problem.H, sync.theta_r[static_cast<std::size_t>(i)]);
  });
}

}  // namespace

int resource_node(const FollowingResource& r) {
  return std::visit([](const auto& v) { return v.node; }, r);
}

HpfProblem build_problem(GridModel grid, std::vector<CiderModel> ciders,
                         std::vector<TheveninEquivalent> thevenin,
                         std::vector<NortonEquivalent> norton, const HarmonicIndexSet& H,
                         SolverOptions options) {
  if (grid.f1 <= 0.0 || grid.v_base <= 0.0 || grid.s_base <= 0.0) {
    throw Error(ErrorKind::parameter, "fundamental frequency and bases must be positive");
  }
  HpfProblem problem{std::move(grid), H, {}, {}, options, {}};
  problem.stacked = stack_harmonic_hybrid(problem.grid, H);

  std::map<int, CiderModel> forming_by_node;
  std::map<int, FollowingResource> following_by_node;
  auto place = [&](auto&& resource, int node, NodeKind expected, auto& target,
                   const std::string& what) {
    const int pos = problem.grid.node_position(node);  // model error if unknown
    const NodeKind kind = problem.grid.nodes[static_cast<std::size_t>(pos)].kind;
    if (kind != expected) {
      throw Error(ErrorKind::model,
                  what + " attached to node " + std::to_string(node) + " of the wrong role");
    }
    if (!target.emplace(node, std::forward<decltype(resource)>(resource)).second) {
      throw Error(ErrorKind::model, "node " + std::to_string(node) + " has more than one resource");
    }
  };
  for (auto& m : ciders) {
    validate_cider(m, problem.grid.f1);
    const int node = m.node;
    if (m.mode == CiderMode::forming) {
      place(std::move(m), node, NodeKind::forming, forming_by_node, "forming converter");
    } else {
      place(FollowingResource(std::move(m)), node, NodeKind::following, following_by_node,
            "following converter");
    }
  }
  for (auto& te : thevenin) {
    te.impedance.require_conjugate_symmetric(te.label());
    require_symmetric_spectrum(te.v_source, te.label());
    (void)stack_signal(te.v_source, H);  // rejects content outside the retained set
    const int node = te.node;
    place(FollowingResource(std::move(te)), node, NodeKind::following, following_by_node,
          "voltage-source equivalent");
  }
  for (auto& ne : norton) {
    ne.admittance.require_conjugate_symmetric(ne.label());
    require_symmetric_spectrum(ne.i_source, ne.label());
    (void)stack_signal(ne.i_source, H);
    const int node = ne.node;
    place(FollowingResource(std::move(ne)), node, NodeKind::following, following_by_node,
          "current-source equivalent");
  }

  for (int id : problem.stacked.s_node_ids) {
    auto it = forming_by_node.find(id);
    if (it == forming_by_node.end()) {
      throw Error(ErrorKind::model,
                  "forming node " + std::to_string(id) + " has no attached resource");
    }
    problem.forming.push_back(std::move(it->second));
  }
  for (int id : problem.stacked.r_node_ids) {
    auto it = following_by_node.find(id);
    if (it == following_by_node.end()) {
      throw Error(ErrorKind::model,
                  "following node " + std::to_string(id) + " has no attached resource");
    }
    problem.following.push_back(std::move(it->second));
  }
  return problem;
}

HpfState flat_start(const HpfProblem& problem) {
  HpfState state{HarmonicSignal(3 * problem.s_count()), HarmonicSignal(3 * problem.r_count())};
  const Complex rot = std::exp(kImag * (2.0 * kPi / 3.0));
  VectorComp v1 = VectorComp::Zero(3 * problem.r_count());
  for (int i = 0; i < problem.r_count(); ++i) {
    v1(3 * i + 0) = Complex(0.5, 0.0);
    v1(3 * i + 1) = 0.5 * std::conj(rot);
    v1(3 * i + 2) = 0.5 * rot;
  }
  state.v_r.set(1, v1);
  state.v_r.set(-1, v1.conjugate());
  return state;
}

SyncState synchronize(const HpfProblem& problem, const HpfState& state) {
  SyncState sync;
  sync.theta_r.assign(static_cast<std::size_t>(problem.r_count()), 0.0);
  for (int i = 0; i < problem.r_count(); ++i) {
    if (!std::holds_alternative<CiderModel>(problem.following[static_cast<std::size_t>(i)])) {
      continue;
    }
    const Complex v1p = positive_sequence_fundamental(slice_blocks(state.v_r, i));
    sync.theta_r[static_cast<std::size_t>(i)] = (std::abs(v1p) > 0.0) ? std::arg(v1p) : 0.0;
  }
  return sync;
}

CompiledResources compile_resources(const HpfProblem& problem, const SyncState& sync) {
  CompiledResources out;
  out.forming.resize(static_cast<std::size_t>(problem.s_count()));
  parallel_for(problem.s_count(), problem.options.threads, [&](int i) {
    out.forming[static_cast<std::size_t>(i)] =
        compile_cider(problem.forming[static_cast<std::size_t>(i)], problem.H, 0.0);
  });

  out.following.resize(static_cast<std::size_t>(problem.r_count()));
  for (int i = 0; i < problem.r_count(); ++i) {
    auto& slot = out.following[static_cast<std::size_t>(i)];
    const auto& resource = problem.following[static_cast<std::size_t>(i)];
    if (const auto* te = std::get_if<TheveninEquivalent>(&resource)) {
      const MatrixComp z = te->impedance.materialize(problem.H);
      Eigen::PartialPivLU<MatrixComp> lu(z);
      if (ill_conditioned(lu, kConditionLimit)) {
        throw Error(ErrorKind::parameter, te->label() + ": harmonic impedance is numerically "
                                                        "singular over the retained set");
      }
      slot.linear_jacobian = (-lu.inverse()).eval();
      slot.linear_source = lu.solve(stack_signal(te->v_source, problem.H)).eval();
    } else if (const auto* ne = std::get_if<NortonEquivalent>(&resource)) {
      slot.linear_jacobian = (-ne->admittance.materialize(problem.H)).eval();
      slot.linear_source = stack_signal(ne->i_source, problem.H);
    }
  }
  refresh_following(problem, sync, out);
  return out;
}

Mismatch mismatch(const HpfProblem& problem, const CompiledResources& resources,
                  const HpfState& state) {
  const auto& per_order = problem.stacked.per_order;
  const HarmonicIndexSet& H = problem.H;
  HarmonicSignal v_s_grid = apply_hybrid_pair(per_order, H, &HybridBlocks::h_ss, state.i_s,
                                              &HybridBlocks::h_sr, state.v_r);
  HarmonicSignal i_r_grid = apply_hybrid_pair(per_order, H, &HybridBlocks::h_rs, state.i_s,
                                              &HybridBlocks::h_rr, state.v_r);

  const int ns = problem.s_count();
  const int nr = problem.r_count();
  std::vector<HarmonicSignal> v_res(static_cast<std::size_t>(ns));
  std::vector<HarmonicSignal> i_res(static_cast<std::size_t>(nr));
  parallel_for(ns + nr, problem.options.threads, [&](int task) {
    if (task < ns) {
      v_res[static_cast<std::size_t>(task)] =
          cider_output(resources.forming[static_cast<std::size_t>(task)],
                       slice_blocks(state.i_s, task));
      return;
    }
    const int i = task - ns;
    const auto& slot = resources.following[static_cast<std::size_t>(i)];
    const HarmonicSignal v_port = slice_blocks(state.v_r, i);
    if (slot.cider) {
      i_res[static_cast<std::size_t>(i)] = cider_output(*slot.cider, v_port);
    } else {
      const VectorComp current = *slot.linear_source + *slot.linear_jacobian *
                                                           stack_signal(v_port, problem.H);
      i_res[static_cast<std::size_t>(i)] = unstack_signal(current, 3, problem.H);
    }
  });

  Mismatch out;
  out.dv_s = v_s_grid - stack_nodewise(v_res);
  out.di_r = i_r_grid - stack_nodewise(i_res);
  out.max_dv = out.dv_s.max_abs();
  out.max_di = out.di_r.max_abs();
  return out;
}

Matrix jacobian(const HpfProblem& problem, const CompiledResources& resources,
                const HpfState& state) {
  const HarmonicIndexSet& H = problem.H;
  const int chart_blocks = 2 * H.h_max + 1;
  const int ns = problem.s_count();
  const int nr = problem.r_count();
  const Eigen::Index rows_s = static_cast<Eigen::Index>(3) * ns * chart_blocks;
  const Eigen::Index rows_r = static_cast<Eigen::Index>(3) * nr * chart_blocks;

  Matrix jac(rows_s + rows_r, rows_s + rows_r);
  const auto& per_order = problem.stacked.per_order;
  jac.topLeftCorner(rows_s, rows_s) =
      realify_block_diagonal(gather_blocks(per_order, &HybridBlocks::h_ss), H);
  jac.topRightCorner(rows_s, rows_r) =
      realify_block_diagonal(gather_blocks(per_order, &HybridBlocks::h_sr), H);
  jac.bottomLeftCorner(rows_r, rows_s) =
      realify_block_diagonal(gather_blocks(per_order, &HybridBlocks::h_rs), H);
  jac.bottomRightCorner(rows_r, rows_r) =
      realify_block_diagonal(gather_blocks(per_order, &HybridBlocks::h_rr), H);

  std::vector<Matrix> partials(static_cast<std::size_t>(ns + nr));
  parallel_for(ns + nr, problem.options.threads, [&](int task) {
    if (task < ns) {
      const MatrixComp d = cider_output_jacobian(resources.forming[static_cast<std::size_t>(task)],
                                                 slice_blocks(state.i_s, task));
      partials[static_cast<std::size_t>(task)] = realify_operator(d, 3, 3, H);
      return;
    }
    const int i = task - ns;
    const auto& slot = resources.following[static_cast<std::size_t>(i)];
    const MatrixComp d = slot.cider
                             ? cider_output_jacobian(*slot.cider, slice_blocks(state.v_r, i))
                             : *slot.linear_jacobian;
    partials[static_cast<std::size_t>(task)] = realify_operator(d, 3, 3, H);
  });
  for (int i = 0; i < ns; ++i) {
    subtract_node_jacobian(jac, 0, 0, partials[static_cast<std::size_t>(i)], H, i, ns, i, ns);
  }
  for (int i = 0; i < nr; ++i) {
    subtract_node_jacobian(jac, rows_s, rows_s, partials[static_cast<std::size_t>(ns + i)], H, i,
                           nr, i, nr);
  }
  return jac;
}

HpfSolution solve_hpf(const HpfProblem& problem) {
  const HarmonicIndexSet& H = problem.H;
  const Real tol = problem.options.tolerance;
  HpfState state = flat_start(problem);
  SyncState sync = synchronize(problem, state);
  CompiledResources resources = compile_resources(problem, sync);
  Mismatch mis = mismatch(problem, resources, state);

  HpfSolution solution;
  solution.history.push_back({0, mis.max_dv, mis.max_di, 0.0});

  const Eigen::Index ns = static_cast<Eigen::Index>(3) * problem.s_count() * (2 * H.h_max + 1);
  const Eigen::Index nr = static_cast<Eigen::Index>(3) * problem.r_count() * (2 * H.h_max + 1);

  int updates = 0;
  while (mis.max_residual() >= tol && updates < problem.options.max_iterations) {
    const Matrix jac = jacobian(problem, resources, state);
    Eigen::PartialPivLU<Matrix> lu(jac);
    if (ill_conditioned(lu, kConditionLimit)) {
      throw Error(ErrorKind::solver,
                  "mismatch Jacobian is numerically singular (condition estimate " +
                      std::to_string(1.0 / std::max(lu.rcond(), 1e-300)) + ")");
    }
    Vector rhs(ns + nr);
    rhs << real_coordinates(mis.dv_s, H), real_coordinates(mis.di_r, H);
    const Vector step = lu.solve(rhs);

    auto stepped = [&](Real alpha) {
      const Vector xi = real_coordinates(state.i_s, H) - alpha * step.head(ns);
      const Vector xv = real_coordinates(state.v_r, H) - alpha * step.tail(nr);
      return HpfState{signal_from_real_coordinates(xi, 3 * problem.s_count(), H),
                      signal_from_real_coordinates(xv, 3 * problem.r_count(), H)};
    };

    Real alpha = problem.options.damping;
    HpfState trial = stepped(alpha);
    SyncState sync_t = synchronize(problem, trial);
    refresh_following(problem, sync_t, resources);
    Mismatch mis_t = mismatch(problem, resources, trial);
    if (mis_t.max_residual() > mis.max_residual()) {
      // One halved retry; accept the damped step either way and let the next
      // iteration correct course.
      alpha *= 0.5;
      trial = stepped(alpha);
      sync_t = synchronize(problem, trial);
      refresh_following(problem, sync_t, resources);
      mis_t = mismatch(problem, resources, trial);
    }
    state = std::move(trial);
    sync = std::move(sync_t);
    mis = std::move(mis_t);
    ++updates;
    solution.history.push_back({updates, mis.max_dv, mis.max_di, alpha});
  }

  solution.converged = mis.max_residual() < tol;
  solution.iterations = updates;
  solution.i_s = state.i_s;
  solution.v_r = state.v_r;
  solution.v_s = apply_hybrid_pair(problem.stacked.per_order, H, &HybridBlocks::h_ss, state.i_s,
                                   &HybridBlocks::h_sr, state.v_r);
  solution.i_r = apply_hybrid_pair(problem.stacked.per_order, H, &HybridBlocks::h_rs, state.i_s,
                                   &HybridBlocks::h_rr, state.v_r);
  solution.theta_r = sync.theta_r;
  return solution;
}

NodalSpectra recover_outputs(const HpfProblem& problem, const HpfSolution& solution) {
  const GridModel& grid = problem.grid;
  const HarmonicIndexSet& H = problem.H;
  NodalSpectra out;

  for (const auto& node : grid.nodes) out.node_ids.push_back(node.id);
  std::sort(out.node_ids.begin(), out.node_ids.end());

  for (std::size_t i = 0; i < problem.stacked.s_node_ids.size(); ++i) {
    const int id = problem.stacked.s_node_ids[i];
    out.voltage[id] = slice_blocks(solution.v_s, static_cast<int>(i));
    out.injection[id] = slice_blocks(solution.i_s, static_cast<int>(i));
  }
  for (std::size_t i = 0; i < problem.stacked.r_node_ids.size(); ++i) {
    const int id = problem.stacked.r_node_ids[i];
    out.voltage[id] = slice_blocks(solution.v_r, static_cast<int>(i));
    out.injection[id] = slice_blocks(solution.i_r, static_cast<int>(i));
  }

  // Eliminated (zero-injection) nodes: recovered per order from the full
  // admittance, V_e = -Y_ee^-1 Y_ek V_k.
  std::vector<int> keep_pos;
  for (int id : problem.stacked.s_node_ids) keep_pos.push_back(grid.node_position(id));
  for (int id : problem.stacked.r_node_ids) keep_pos.push_back(grid.node_position(id));
  std::vector<int> elim_pos;
  for (int p = 0; p < grid.node_count(); ++p) {
    if (std::find(keep_pos.begin(), keep_pos.end(), p) == keep_pos.end()) elim_pos.push_back(p);
  }
  std::vector<int> elim_ids;
  for (int p : elim_pos) elim_ids.push_back(grid.nodes[static_cast<std::size_t>(p)].id);
  for (int id : elim_ids) {
    out.voltage[id] = HarmonicSignal(3);
    out.injection[id] = HarmonicSignal(3);
  }
  if (!elim_pos.empty()) {
    const Eigen::Index ne = static_cast<Eigen::Index>(3) * static_cast<Eigen::Index>(elim_pos.size());
    const Eigen::Index nk = static_cast<Eigen::Index>(3) * static_cast<Eigen::Index>(keep_pos.size());
    for (int h = 0; h <= H.h_max; ++h) {
      const MatrixComp y = assemble_nodal_admittance(grid, H.frequency(h));
      MatrixComp y_ee(ne, ne);
      MatrixComp y_ek(ne, nk);
      for (std::size_t r = 0; r < elim_pos.size(); ++r) {
        for (std::size_t c = 0; c < elim_pos.size(); ++c) {
          y_ee.block(3 * static_cast<Eigen::Index>(r), 3 * static_cast<Eigen::Index>(c), 3, 3) =
              y.block(3 * elim_pos[r], 3 * elim_pos[c], 3, 3);
        }
        for (std::size_t c = 0; c < keep_pos.size(); ++c) {
          y_ek.block(3 * static_cast<Eigen::Index>(r), 3 * static_cast<Eigen::Index>(c), 3, 3) =
              y.block(3 * elim_pos[r], 3 * keep_pos[c], 3, 3);
        }
      }
      VectorComp v_k(nk);
      for (std::size_t c = 0; c < problem.stacked.s_node_ids.size(); ++c) {
        v_k.segment(3 * static_cast<Eigen::Index>(c), 3) =
            out.voltage[problem.stacked.s_node_ids[c]].at(h);
      }
      const std::size_t s_n = problem.stacked.s_node_ids.size();
      for (std::size_t c = 0; c < problem.stacked.r_node_ids.size(); ++c) {
        v_k.segment(3 * static_cast<Eigen::Index>(s_n + c), 3) =
            out.voltage[problem.stacked.r_node_ids[c]].at(h);
      }
      Eigen::PartialPivLU<MatrixComp> lu(y_ee);
      if (ill_conditioned(lu, kConditionLimit)) {
        throw Error(ErrorKind::reduction,
                    "interior nodes are not recoverable at order " + std::to_string(h));
      }
      const VectorComp v_e = -lu.solve(y_ek * v_k);
      for (std::size_t r = 0; r < elim_ids.size(); ++r) {
        const VectorComp piece = v_e.segment(3 * static_cast<Eigen::Index>(r), 3);
        if (piece.cwiseAbs().maxCoeff() == 0.0) continue;
        auto& target = out.voltage[elim_ids[r]];
        target.set(h, piece);
        if (h > 0) target.set(-h, piece.conjugate());
      }
    }
  }

  for (const auto& branch : grid.branches) {
    NodalSpectra::BranchFlow flow{branch.from, branch.to, HarmonicSignal(3)};
    for (int h = 0; h <= H.h_max; ++h) {
      const Matrix3Comp z = branch_impedance(branch, H.frequency(h), grid.f1);
      const VectorComp dv =
          out.voltage[branch.from].at(h) - out.voltage[branch.to].at(h);
      const Vector3Comp current = z.partialPivLu().solve(dv);
      if (current.cwiseAbs().maxCoeff() == 0.0) continue;
      flow.current.set(h, current);
      if (h > 0) flow.current.set(-h, current.conjugate());
    }
    out.branch_flows.push_back(std::move(flow));
  }
  for (const auto& shunt : grid.shunts) {
    NodalSpectra::ShuntFlow flow{shunt.node, HarmonicSignal(3)};
    for (int h = 0; h <= H.h_max; ++h) {
      const Matrix3Comp y = shunt_admittance(shunt, H.frequency(h), grid.f1);
      const Vector3Comp current = y * out.voltage[shunt.node].at(h);
      if (current.cwiseAbs().maxCoeff() == 0.0) continue;
      flow.current.set(h, current);
      if (h > 0) flow.current.set(-h, current.conjugate());
    }
    out.shunt_flows.push_back(std::move(flow));
  }

  // Nodal current balance on the original grid: injection equals branch
  // take-off plus shunt draw at every node and order.
  Real worst = 0.0;
  for (const auto& node : grid.nodes) {
    for (int h = 0; h <= H.h_max; ++h) {
      VectorComp balance = out.injection[node.id].at(h);
      for (std::size_t l = 0; l < grid.branches.size(); ++l) {
        const auto& branch = grid.branches[l];
        if (branch.from == node.id) balance -= out.branch_flows[l].current.at(h);
        if (branch.to == node.id) balance += out.branch_flows[l].current.at(h);
      }
      for (std::size_t s = 0; s < grid.shunts.size(); ++s) {
        if (grid.shunts[s].node == node.id) balance -= out.shunt_flows[s].current.at(h);
      }
      worst = std::max(worst, balance.cwiseAbs().maxCoeff());
    }
  }
  out.max_kcl_residual = worst;
  return out;
}

}  // namespace hpf
