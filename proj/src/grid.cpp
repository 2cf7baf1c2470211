#include "hpf/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace hpf {

namespace {

constexpr Real kSymmetryTol = 1e-12;
constexpr Real kDefinitenessTol = 1e-12;
constexpr Real kConditionLimit = 1e12;

Matrix3Comp table_lookup(const std::map<int, Matrix3Comp>& table, Real f, Real f1,
                         const std::string& label) {
  const Real ratio = f / f1;
  const int h = static_cast<int>(std::lround(ratio));
  if (std::abs(ratio - static_cast<Real>(h)) > 1e-9) {
    throw Error(ErrorKind::parameter,
                label + ": tabulated parameters queried off the harmonic comb (f = " +
                    std::to_string(f) + " Hz)");
  }
  auto it = table.find(std::abs(h));
  if (it == table.end()) {
    throw Error(ErrorKind::parameter, label + ": no tabulated value for order " +
                                          std::to_string(std::abs(h)) +
                                          " (tables are never interpolated)");
  }
  return h >= 0 ? it->second : it->second.conjugate();
}

Real symmetry_defect(const MatrixComp& m) {
  return (m - m.transpose()).cwiseAbs().maxCoeff();
}

/// Smallest eigenvalue of the symmetrized real part (the lossiness measure).
Real min_real_part_eigenvalue(const Matrix3Comp& m) {
  const Matrix3 sym = 0.5 * (m.real() + m.real().transpose());
  Eigen::SelfAdjointEigenSolver<Matrix3> es(sym);
  return es.eigenvalues().minCoeff();
}

Real condition_estimate(const Matrix3Comp& m) {
  Eigen::JacobiSVD<Matrix3Comp> svd(m);
  const Real smin = svd.singularValues().minCoeff();
  if (smin <= 0.0) return std::numeric_limits<Real>::infinity();
  return svd.singularValues().maxCoeff() / smin;
}

}  // namespace

int GridModel::node_position(int id) const {
  for (int i = 0; i < node_count(); ++i) {
    if (nodes[static_cast<std::size_t>(i)].id == id) return i;
  }
  throw Error(ErrorKind::model, "unknown node id " + std::to_string(id));
}

std::vector<int> GridModel::positions_of(NodeKind kind) const {
  std::vector<int> out;
  for (int i = 0; i < node_count(); ++i) {
    if (nodes[static_cast<std::size_t>(i)].kind == kind) out.push_back(i);
  }
  return out;
}

Matrix3Comp branch_impedance(const GridBranch& branch, Real f, Real f1) {
  if (branch.impedance_table) {
    return table_lookup(*branch.impedance_table, f, f1, branch.label());
  }
  return branch.resistance.cast<Complex>() +
         kImag * (2.0 * kPi * f) * branch.inductance.cast<Complex>();
}

Matrix3Comp shunt_admittance(const GridShunt& shunt, Real f, Real f1) {
  if (shunt.admittance_table) {
    return table_lookup(*shunt.admittance_table, f, f1, shunt.label());
  }
  return shunt.conductance.cast<Complex>() +
         kImag * (2.0 * kPi * f) * shunt.capacitance.cast<Complex>();
}

Matrix build_incidence(const GridModel& grid) {
  const int n = grid.node_count();
  const int l = static_cast<int>(grid.branches.size());
  Matrix a = Matrix::Zero(3 * l, 3 * n);
  for (int k = 0; k < l; ++k) {
    const auto& branch = grid.branches[static_cast<std::size_t>(k)];
    const int from = grid.node_position(branch.from);
    const int to = grid.node_position(branch.to);
    a.block(3 * k, 3 * from, 3, 3) = Matrix3::Identity();
    a.block(3 * k, 3 * to, 3, 3) = -Matrix3::Identity();
  }
  return a;
}

MatrixComp assemble_nodal_admittance(const GridModel& grid, Real f) {
  const int n = grid.node_count();
  MatrixComp y = MatrixComp::Zero(3 * n, 3 * n);
  for (const auto& branch : grid.branches) {
    const Matrix3Comp z = branch_impedance(branch, f, grid.f1);
    Eigen::PartialPivLU<Matrix3Comp> lu(z);
    if (ill_conditioned(lu, kConditionLimit)) {
      throw Error(ErrorKind::parameter, branch.label() + " is numerically singular at f = " +
                                            std::to_string(f) + " Hz");
    }
    const Matrix3Comp yl = lu.inverse();
    const int i = grid.node_position(branch.from);
    const int j = grid.node_position(branch.to);
    y.block(3 * i, 3 * i, 3, 3) += yl;
    y.block(3 * j, 3 * j, 3, 3) += yl;
    y.block(3 * i, 3 * j, 3, 3) -= yl;
    y.block(3 * j, 3 * i, 3, 3) -= yl;
  }
  for (const auto& shunt : grid.shunts) {
    const int i = grid.node_position(shunt.node);
    y.block(3 * i, 3 * i, 3, 3) += shunt_admittance(shunt, f, grid.f1);
  }
  return y;
}

MatrixComp kron_reduce(const MatrixComp& y, const std::vector<int>& keep, int block_size) {
  const int n_blocks = static_cast<int>(y.rows()) / block_size;
  if (y.rows() != y.cols() || y.rows() % block_size != 0) {
    throw Error(ErrorKind::dimension, "admittance matrix is not square in whole blocks");
  }
  std::vector<bool> kept(static_cast<std::size_t>(n_blocks), false);
  for (int k : keep) {
    if (k < 0 || k >= n_blocks) {
      throw Error(ErrorKind::reduction, "kept block index " + std::to_string(k) + " out of range");
    }
    if (kept[static_cast<std::size_t>(k)]) {
      throw Error(ErrorKind::reduction, "kept block index " + std::to_string(k) + " repeated");
    }
    kept[static_cast<std::size_t>(k)] = true;
  }
  std::vector<int> drop;
  for (int i = 0; i < n_blocks; ++i) {
    if (!kept[static_cast<std::size_t>(i)]) drop.push_back(i);
  }
  if (drop.empty()) return y;

  auto gather = [&](const std::vector<int>& rows, const std::vector<int>& cols) {
    MatrixComp m(static_cast<Eigen::Index>(rows.size()) * block_size,
                 static_cast<Eigen::Index>(cols.size()) * block_size);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < cols.size(); ++c) {
        m.block(static_cast<Eigen::Index>(r) * block_size,
                static_cast<Eigen::Index>(c) * block_size, block_size, block_size) =
            y.block(static_cast<Eigen::Index>(rows[r]) * block_size,
                    static_cast<Eigen::Index>(cols[c]) * block_size, block_size, block_size);
      }
    }
    return m;
  };

  const MatrixComp y_kk = gather(keep, keep);
  const MatrixComp y_ke = gather(keep, drop);
  const MatrixComp y_ek = gather(drop, keep);
  const MatrixComp y_ee = gather(drop, drop);

  Eigen::PartialPivLU<MatrixComp> lu(y_ee);
  if (ill_conditioned(lu, kConditionLimit)) {
    throw Error(ErrorKind::reduction,
                "interior block is numerically singular; the eliminated nodes do not "
                "define a reduced equivalent");
  }
  return y_kk - y_ke * lu.solve(y_ek);
}

HybridBlocks partition_hybrid(const MatrixComp& y, const std::vector<int>& s_positions,
                              const std::vector<int>& r_positions, int block_size) {
  const int n_blocks = static_cast<int>(y.rows()) / block_size;
  if (y.rows() != y.cols() || y.rows() % block_size != 0) {
    throw Error(ErrorKind::dimension, "admittance matrix is not square in whole blocks");
  }
  std::vector<int> seen(static_cast<std::size_t>(n_blocks), 0);
  for (int i : s_positions) {
    if (i < 0 || i >= n_blocks) throw Error(ErrorKind::partition, "S position out of range");
    ++seen[static_cast<std::size_t>(i)];
  }
  for (int i : r_positions) {
    if (i < 0 || i >= n_blocks) throw Error(ErrorKind::partition, "R position out of range");
    ++seen[static_cast<std::size_t>(i)];
  }
  for (int i = 0; i < n_blocks; ++i) {
    if (seen[static_cast<std::size_t>(i)] != 1) {
      throw Error(ErrorKind::partition,
                  "S/R split must cover every port exactly once (position " +
                      std::to_string(i) + " covered " +
                      std::to_string(seen[static_cast<std::size_t>(i)]) + " times)");
    }
  }
  if (s_positions.empty()) {
    throw Error(ErrorKind::partition, "at least one forming (S) port is required");
  }

  auto gather = [&](const std::vector<int>& rows, const std::vector<int>& cols) {
    MatrixComp m(static_cast<Eigen::Index>(rows.size()) * block_size,
                 static_cast<Eigen::Index>(cols.size()) * block_size);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < cols.size(); ++c) {
        m.block(static_cast<Eigen::Index>(r) * block_size,
                static_cast<Eigen::Index>(c) * block_size, block_size, block_size) =
            y.block(static_cast<Eigen::Index>(rows[r]) * block_size,
                    static_cast<Eigen::Index>(cols[c]) * block_size, block_size, block_size);
      }
    }
    return m;
  };

  const MatrixComp y_ss = gather(s_positions, s_positions);
  const MatrixComp y_sr = gather(s_positions, r_positions);
  const MatrixComp y_rs = gather(r_positions, s_positions);
  const MatrixComp y_rr = gather(r_positions, r_positions);

  Eigen::PartialPivLU<MatrixComp> lu(y_ss);
  if (ill_conditioned(lu, kConditionLimit)) {
    throw Error(ErrorKind::partition,
                "S-port admittance block is numerically singular; the hybrid equations "
                "do not exist for this split");
  }

  HybridBlocks out;
  out.h_ss = lu.inverse();
  out.h_sr = -lu.solve(y_sr);
  out.h_rs = y_rs * out.h_ss;
  out.h_rr = y_rr - y_rs * lu.solve(y_sr);
  return out;
}

StackedHybrid stack_harmonic_hybrid(const GridModel& grid, const HarmonicIndexSet& H) {
  StackedHybrid out;
  out.H = H;

  std::vector<int> s_pos = grid.positions_of(NodeKind::forming);
  std::vector<int> r_pos = grid.positions_of(NodeKind::following);
  if (s_pos.empty()) {
    throw Error(ErrorKind::partition, "grid has no forming node; the study is not well-posed");
  }
  if (r_pos.empty()) {
    throw Error(ErrorKind::partition, "grid has no following node; nothing to solve for");
  }
  auto by_id = [&](int a, int b) {
    return grid.nodes[static_cast<std::size_t>(a)].id < grid.nodes[static_cast<std::size_t>(b)].id;
  };
  std::sort(s_pos.begin(), s_pos.end(), by_id);
  std::sort(r_pos.begin(), r_pos.end(), by_id);
  for (int p : s_pos) out.s_node_ids.push_back(grid.nodes[static_cast<std::size_t>(p)].id);
  for (int p : r_pos) out.r_node_ids.push_back(grid.nodes[static_cast<std::size_t>(p)].id);

  std::vector<int> keep = s_pos;
  keep.insert(keep.end(), r_pos.begin(), r_pos.end());

  // Positions within the reduced matrix follow the order of `keep`.
  std::vector<int> s_reduced(s_pos.size());
  std::vector<int> r_reduced(r_pos.size());
  for (std::size_t i = 0; i < s_pos.size(); ++i) s_reduced[i] = static_cast<int>(i);
  for (std::size_t i = 0; i < r_pos.size(); ++i) {
    r_reduced[i] = static_cast<int>(s_pos.size() + i);
  }

  for (int h = 0; h <= H.h_max; ++h) {
    const MatrixComp y = assemble_nodal_admittance(grid, H.frequency(h));
    MatrixComp y_red = kron_reduce(y, keep);
    out.per_order.push_back(partition_hybrid(y_red, s_reduced, r_reduced));
    out.reduced_y.push_back(std::move(y_red));
  }
  return out;
}

std::string ValidationReport::summary() const {
  if (findings.empty()) return "grid model passes all checks";
  std::ostringstream os;
  os << findings.size() << " finding(s):";
  for (const auto& f : findings) {
    os << "\n  " << f.element << ": " << f.check << " -- " << f.detail;
  }
  return os.str();
}

ValidationReport validate_grid(const GridModel& grid, const HarmonicIndexSet& H) {
  ValidationReport report;
  auto flag = [&](const std::string& element, const std::string& check, const std::string& detail) {
    report.findings.push_back({element, check, detail});
  };

  if (grid.nodes.empty()) {
    flag("grid", "structure", "no nodes");
    return report;
  }
  {
    std::vector<int> ids;
    for (const auto& n : grid.nodes) ids.push_back(n.id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
      flag("grid", "structure", "duplicate node ids");
      return report;
    }
  }
  if (grid.f1 <= 0.0) flag("grid", "parameters", "fundamental frequency must be positive");
  if (grid.v_base <= 0.0 || grid.s_base <= 0.0) {
    flag("grid", "parameters", "voltage and power bases must be positive");
  }

  auto known = [&](int id) {
    return std::any_of(grid.nodes.begin(), grid.nodes.end(),
                       [&](const GridNode& n) { return n.id == id; });
  };
  bool refs_ok = true;
  for (const auto& b : grid.branches) {
    if (!known(b.from) || !known(b.to) || b.from == b.to) {
      flag(b.label(), "structure", "endpoint ids must name two distinct known nodes");
      refs_ok = false;
    }
  }
  for (const auto& s : grid.shunts) {
    if (!known(s.node)) {
      flag(s.label(), "structure", "unknown node id");
      refs_ok = false;
    }
  }
  if (!refs_ok) return report;

  // Weak connectivity over the branch graph.
  {
    std::vector<int> component(grid.nodes.size(), -1);
    std::vector<int> stack{0};
    component[0] = 0;
    while (!stack.empty()) {
      const int at = stack.back();
      stack.pop_back();
      for (const auto& b : grid.branches) {
        const int i = grid.node_position(b.from);
        const int j = grid.node_position(b.to);
        int next = -1;
        if (i == at && component[static_cast<std::size_t>(j)] < 0) next = j;
        if (j == at && component[static_cast<std::size_t>(i)] < 0) next = i;
        if (next >= 0) {
          component[static_cast<std::size_t>(next)] = 0;
          stack.push_back(next);
        }
      }
    }
    for (std::size_t i = 0; i < component.size(); ++i) {
      if (component[i] < 0) {
        flag("node " + std::to_string(grid.nodes[i].id), "connectivity",
             "not reachable from the rest of the grid");
      }
    }
  }

  auto check_element = [&](const std::string& label, const Matrix3Comp& m, Real f, bool is_branch) {
    const Real scale = std::max(Real{1.0}, m.cwiseAbs().maxCoeff());
    if (symmetry_defect(m) > kSymmetryTol * scale) {
      flag(label, "symmetry",
           "matrix is not symmetric at f = " + std::to_string(f) + " Hz (reciprocity violated)");
      return;
    }
    const Real lossy = min_real_part_eigenvalue(m);
    if (is_branch) {
      if (lossy <= 0.0) {
        flag(label, "lossiness",
             "real part must be strictly positive definite (smallest eigenvalue " +
                 std::to_string(lossy) + " at f = " + std::to_string(f) + " Hz)");
        return;
      }
    } else if (lossy < -kDefinitenessTol * scale) {
      flag(label, "passivity",
           "real part must be positive semidefinite (smallest eigenvalue " +
               std::to_string(lossy) + " at f = " + std::to_string(f) + " Hz)");
      return;
    }
    const Real cond = condition_estimate(m);
    if (cond > kConditionLimit) {
      flag(label, "conditioning",
           "condition estimate " + std::to_string(cond) + " at f = " + std::to_string(f) + " Hz");
    }
  };

  for (const auto& b : grid.branches) {
    if (b.impedance_table) {
      auto it0 = b.impedance_table->find(0);
      if (it0 != b.impedance_table->end() && it0->second.imag().cwiseAbs().maxCoeff() > 0.0) {
        flag(b.label(), "parameters", "tabulated impedance at order 0 must be real");
      }
    }
    for (int h = 0; h <= H.h_max; ++h) {
      try {
        check_element(b.label(), branch_impedance(b, H.frequency(h), grid.f1), H.frequency(h),
                      /*is_branch=*/true);
      } catch (const Error& e) {
        flag(b.label(), "parameters", e.what());
        break;
      }
    }
  }
  for (const auto& s : grid.shunts) {
    for (int h = 0; h <= H.h_max; ++h) {
      try {
        const Matrix3Comp y = shunt_admittance(s, H.frequency(h), grid.f1);
        if (y.cwiseAbs().maxCoeff() == 0.0) continue;  // absent at this frequency
        check_element(s.label(), y, H.frequency(h), /*is_branch=*/false);
      } catch (const Error& e) {
        flag(s.label(), "parameters", e.what());
        break;
      }
    }
  }
  return report;
}

}  // namespace hpf
