#pragma once

#include <map>
#include <random>

#include "hpf/grid.hpp"
#include "hpf/harmonic_signal.hpp"
#include "hpf/toeplitz.hpp"
#include "hpf/types.hpp"

namespace hpf::test {

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64{seed}; }

inline Real rand_real(std::mt19937_64& gen, Real lo = -1.0, Real hi = 1.0) {
  return std::uniform_real_distribution<Real>(lo, hi)(gen);
}

inline Complex rand_complex(std::mt19937_64& gen, Real scale = 1.0) {
  return scale * Complex{rand_real(gen), rand_real(gen)};
}

inline MatrixComp rand_matc(std::mt19937_64& gen, Eigen::Index rows, Eigen::Index cols,
                            Real scale = 1.0) {
  MatrixComp m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rand_complex(gen, scale);
  return m;
}

inline VectorComp rand_vecc(std::mt19937_64& gen, Eigen::Index n, Real scale = 1.0) {
  VectorComp v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rand_complex(gen, scale);
  return v;
}

/// Random conjugate-symmetric signal with content up to |h| <= support.
inline HarmonicSignal rand_symmetric_signal(std::mt19937_64& gen, int dim, int support,
                                            Real scale = 1.0) {
  HarmonicSignal x(dim);
  x.set(0, rand_vecc(gen, dim, scale).real().cast<Complex>());
  for (int h = 1; h <= support; ++h) {
    const VectorComp c = rand_vecc(gen, dim, scale);
    x.set(h, c);
    x.set(-h, c.conjugate());
  }
  return x;
}

/// Random coefficients of a real-valued periodic matrix, |h| <= support.
inline std::map<int, MatrixComp> rand_real_coefficients(std::mt19937_64& gen, int rows, int cols,
                                                        int support, Real scale = 1.0) {
  std::map<int, MatrixComp> coeffs;
  coeffs[0] = rand_matc(gen, rows, cols, scale).real().cast<Complex>();
  for (int h = 1; h <= support; ++h) {
    const MatrixComp m = rand_matc(gen, rows, cols, scale);
    coeffs[h] = m;
    coeffs[-h] = m.conjugate();
  }
  return coeffs;
}

inline Real rel_err(const MatrixComp& got, const MatrixComp& want) {
  const Real denom = std::max(want.cwiseAbs().maxCoeff(), 1e-30);
  return (got - want).cwiseAbs().maxCoeff() / denom;
}

inline Real rel_err(const Matrix& got, const Matrix& want) {
  const Real denom = std::max(want.cwiseAbs().maxCoeff(), 1e-30);
  return (got - want).cwiseAbs().maxCoeff() / denom;
}

/// Random symmetric positive-definite 3x3 (reciprocal, lossy element data).
inline Matrix3 rand_spd3(std::mt19937_64& gen, Real scale = 1.0, Real ridge = 0.3) {
  Matrix3 a;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a(i, j) = rand_real(gen);
  return scale * (a * a.transpose() + ridge * Matrix3::Identity());
}

/// Random connected lossy polyphase network with realistic per-unit element
/// sizes: a spanning tree plus a few chords, strictly lossy branches, and at
/// least one conductive shunt so the nodal equations are regular at DC.
inline GridModel rand_lossy_grid(std::mt19937_64& gen, int n_nodes, int n_forming,
                                 int n_following) {
  GridModel grid;
  grid.f1 = 50.0;
  for (int i = 0; i < n_nodes; ++i) {
    NodeKind kind = NodeKind::zero;
    if (i < n_forming) {
      kind = NodeKind::forming;
    } else if (i < n_forming + n_following) {
      kind = NodeKind::following;
    }
    grid.nodes.push_back({i, kind});
  }
  auto add_branch = [&](int a, int b) {
    GridBranch br;
    br.from = a;
    br.to = b;
    br.resistance = rand_spd3(gen, 0.05) + 0.02 * Matrix3::Identity();
    br.inductance = rand_spd3(gen, 2e-4, 0.1);
    grid.branches.push_back(br);
  };
  for (int i = 1; i < n_nodes; ++i) {
    add_branch(i, static_cast<int>(rand_real(gen, 0.0, static_cast<Real>(i) - 1e-9)));
  }
  for (int extra = 0; extra < n_nodes / 2; ++extra) {
    const int a = static_cast<int>(rand_real(gen, 0.0, static_cast<Real>(n_nodes) - 1e-9));
    const int b = static_cast<int>(rand_real(gen, 0.0, static_cast<Real>(n_nodes) - 1e-9));
    if (a != b) add_branch(a, b);
  }
  for (int i = 0; i < n_nodes; ++i) {
    GridShunt sh;
    sh.node = i;
    sh.capacitance = rand_spd3(gen, 1e-4, 0.2);
    if (i == 0) sh.conductance = rand_spd3(gen, 0.02) + 0.01 * Matrix3::Identity();
    grid.shunts.push_back(sh);
  }
  return grid;
}

/// Max coefficient deviation between two signals relative to the larger peak.
inline Real signal_rel_err(const HarmonicSignal& got, const HarmonicSignal& want,
                           const HarmonicIndexSet& H) {
  Real num = 0.0;
  for (int h = -H.h_max; h <= H.h_max; ++h) {
    const Real d = (got.at(h) - want.at(h)).cwiseAbs().maxCoeff();
    num = std::max(num, d);
  }
  return num / std::max({got.max_abs(), want.max_abs(), 1e-30});
}

}  // namespace hpf::test
