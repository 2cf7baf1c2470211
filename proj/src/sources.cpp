#include "hpf/sources.hpp"

#include <Eigen/Eigenvalues>

namespace hpf {

namespace {

constexpr Real kConditionLimit = 1e12;

Eigen::PartialPivLU<MatrixComp> factor_impedance(const TheveninEquivalent& te,
                                                 const HarmonicIndexSet& H) {
  Eigen::PartialPivLU<MatrixComp> lu(te.impedance.materialize(H));
  if (ill_conditioned(lu, kConditionLimit)) {
    throw Error(ErrorKind::parameter,
                te.label() + ": harmonic impedance is numerically singular");
  }
  return lu;
}

}  // namespace

Matrix3Comp HarmonicBlockMatrix::at(int row_order, int col_order) const {
  auto it = blocks.find({row_order, col_order});
  if (it != blocks.end()) return it->second;
  return Matrix3Comp::Zero();
}

void HarmonicBlockMatrix::set(int row_order, int col_order, const Matrix3Comp& value) {
  blocks[{row_order, col_order}] = value;
}

MatrixComp HarmonicBlockMatrix::materialize(const HarmonicIndexSet& H) const {
  MatrixComp out = MatrixComp::Zero(static_cast<Eigen::Index>(3) * H.count(),
                                    static_cast<Eigen::Index>(3) * H.count());
  for (const auto& [key, block] : blocks) {
    const auto& [m, n] = key;
    if (!H.contains(m) || !H.contains(n)) {
      throw Error(ErrorKind::truncation,
                  "equivalent couples orders (" + std::to_string(m) + ", " + std::to_string(n) +
                      ") outside the retained set |h| <= " + std::to_string(H.h_max));
    }
    out.block(static_cast<Eigen::Index>(3) * H.index_of(m),
              static_cast<Eigen::Index>(3) * H.index_of(n), 3, 3) = block;
  }
  return out;
}

void HarmonicBlockMatrix::require_conjugate_symmetric(const std::string& label) const {
  for (const auto& [key, block] : blocks) {
    const auto& [m, n] = key;
    const Matrix3Comp partner = at(-m, -n).conjugate();
    if ((block - partner).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, block.norm())) {
      throw Error(ErrorKind::model,
                  label + ": blocks (" + std::to_string(m) + ", " + std::to_string(n) + ") and (" +
                      std::to_string(-m) + ", " + std::to_string(-n) +
                      ") are not conjugate partners (element would be complex-valued in time)");
    }
  }
}

HarmonicSignal thevenin_current(const TheveninEquivalent& te, const HarmonicSignal& v_port,
                                const HarmonicIndexSet& H) {
  te.impedance.require_conjugate_symmetric(te.label());
  auto lu = factor_impedance(te, H);
  const VectorComp rhs = stack_signal(te.v_source, H) - stack_signal(v_port, H);
  return unstack_signal(lu.solve(rhs), 3, H);
}

HarmonicSignal norton_current(const NortonEquivalent& ne, const HarmonicSignal& v_port,
                              const HarmonicIndexSet& H) {
  ne.admittance.require_conjugate_symmetric(ne.label());
  const VectorComp i =
      stack_signal(ne.i_source, H) - ne.admittance.materialize(H) * stack_signal(v_port, H);
  return unstack_signal(i, 3, H);
}

NortonEquivalent to_norton(const TheveninEquivalent& te, const HarmonicIndexSet& H) {
  te.impedance.require_conjugate_symmetric(te.label());
  auto lu = factor_impedance(te, H);

  NortonEquivalent ne;
  ne.node = te.node;
  ne.i_source = unstack_signal(lu.solve(stack_signal(te.v_source, H)), 3, H);
  const MatrixComp y = lu.inverse();
  for (int m = -H.h_max; m <= H.h_max; ++m) {
    for (int n = -H.h_max; n <= H.h_max; ++n) {
      const Matrix3Comp block = y.block(static_cast<Eigen::Index>(3) * H.index_of(m),
                                        static_cast<Eigen::Index>(3) * H.index_of(n), 3, 3);
      if (block.cwiseAbs().maxCoeff() > 0.0) ne.admittance.set(m, n, block);
    }
  }
  return ne;
}

std::vector<std::string> check_passivity(const NortonEquivalent& ne, const HarmonicIndexSet& H) {
  std::vector<std::string> findings;
  for (int h = -H.h_max; h <= H.h_max; ++h) {
    const Matrix3Comp block = ne.admittance.at(h, h);
    if (block.cwiseAbs().maxCoeff() == 0.0) continue;
    const Matrix3 sym = 0.5 * (block.real() + block.real().transpose());
    Eigen::SelfAdjointEigenSolver<Matrix3> es(sym);
    if (es.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, block.norm())) {
      findings.push_back(ne.label() + ": admittance block at order " + std::to_string(h) +
                         " is active (real part has eigenvalue " +
                         std::to_string(es.eigenvalues().minCoeff()) + ")");
    }
  }
  return findings;
}

}  // namespace hpf
