#include "hpf/toeplitz.hpp"

#include <cmath>

namespace hpf {

Matrix ToeplitzOperator::sample(Real t, Real f1) const {
  MatrixComp value = MatrixComp::Zero(rows, cols);
  const Real w1 = 2.0 * kPi * f1;
  for (const auto& [h, m] : coeffs) {
    value += m * std::exp(kImag * (static_cast<Real>(h) * w1 * t));
  }
  return value.real();
}

ToeplitzOperator lift(const std::map<int, MatrixComp>& coefficients, int out_dim, int in_dim,
                      const HarmonicIndexSet& H) {
  ToeplitzOperator op(out_dim, in_dim);
  for (const auto& [h, m] : coefficients) {
    if (m.rows() != out_dim || m.cols() != in_dim) {
      throw Error(ErrorKind::dimension,
                  "coefficient at order " + std::to_string(h) + " is " +
                      std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                      ", expected " + std::to_string(out_dim) + "x" + std::to_string(in_dim));
    }
    if (!H.contains(h)) {
      if (m.cwiseAbs().maxCoeff() > 0.0) {
        throw Error(ErrorKind::truncation,
                    "coefficient at order " + std::to_string(h) +
                        " lies outside the retained set |h| <= " + std::to_string(H.h_max));
      }
      continue;
    }
    if (m.cwiseAbs().maxCoeff() > 0.0) op.coeffs.emplace(h, m);
  }
  return op;
}

ToeplitzOperator lift_constant(const MatrixComp& m) {
  ToeplitzOperator op(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  if (m.cwiseAbs().maxCoeff() > 0.0) op.coeffs.emplace(0, m);
  return op;
}

HarmonicSignal apply(const ToeplitzOperator& op, const HarmonicSignal& x,
                     const HarmonicIndexSet& H) {
  if (x.dim != op.cols) {
    throw Error(ErrorKind::dimension, "operator of width " + std::to_string(op.cols) +
                                          " applied to signal of dimension " +
                                          std::to_string(x.dim));
  }
  HarmonicSignal y(op.rows);
  for (const auto& [n, xn] : x.coeffs) {
    for (const auto& [k, mk] : op.coeffs) {
      const int m = n + k;
      if (!H.contains(m)) continue;
      y.add(m, mk * xn);
    }
  }
  y.prune(0.0);
  return y;
}

ToeplitzOperator compose(const ToeplitzOperator& a, const ToeplitzOperator& b,
                         const HarmonicIndexSet& H, Real* leakage) {
  if (a.cols != b.rows) {
    throw Error(ErrorKind::dimension, "composing operators with mismatched inner dimension");
  }
  std::map<int, MatrixComp> full;
  for (const auto& [ka, ma] : a.coeffs) {
    for (const auto& [kb, mb] : b.coeffs) {
      const int h = ka + kb;
      auto [it, inserted] = full.try_emplace(h, ma * mb);
      if (!inserted) it->second += ma * mb;
    }
  }
  Real dropped = 0.0;
  ToeplitzOperator out(a.rows, b.cols);
  for (auto& [h, m] : full) {
    if (H.contains(h)) {
      if (m.cwiseAbs().maxCoeff() > 0.0) out.coeffs.emplace(h, std::move(m));
    } else {
      dropped = std::hypot(dropped, m.norm());
    }
  }
  if (leakage != nullptr) *leakage = dropped;
  return out;
}

MatrixComp materialize(const ToeplitzOperator& op, const HarmonicIndexSet& H) {
  const int nb = H.count();
  MatrixComp out = MatrixComp::Zero(static_cast<Eigen::Index>(op.rows) * nb,
                                    static_cast<Eigen::Index>(op.cols) * nb);
  for (int m = -H.h_max; m <= H.h_max; ++m) {
    for (int n = -H.h_max; n <= H.h_max; ++n) {
      auto it = op.coeffs.find(m - n);
      if (it == op.coeffs.end()) continue;
      out.block(static_cast<Eigen::Index>(H.index_of(m)) * op.rows,
                static_cast<Eigen::Index>(H.index_of(n)) * op.cols, op.rows, op.cols) =
          it->second;
    }
  }
  return out;
}

MatrixComp materialize_j_omega(int dim, const HarmonicIndexSet& H) {
  const int nb = H.count();
  MatrixComp out = MatrixComp::Zero(static_cast<Eigen::Index>(dim) * nb,
                                    static_cast<Eigen::Index>(dim) * nb);
  for (int h = -H.h_max; h <= H.h_max; ++h) {
    const Complex jw = kImag * H.omega(h);
    out.block(static_cast<Eigen::Index>(H.index_of(h)) * dim,
              static_cast<Eigen::Index>(H.index_of(h)) * dim, dim, dim) =
        jw * MatrixComp::Identity(dim, dim);
  }
  return out;
}

Matrix realify_operator(const MatrixComp& op, int out_dim, int in_dim,
                        const HarmonicIndexSet& H) {
  const int nb = H.count();
  if (op.rows() != static_cast<Eigen::Index>(out_dim) * nb ||
      op.cols() != static_cast<Eigen::Index>(in_dim) * nb) {
    throw Error(ErrorKind::dimension, "harmonic-domain operator size does not match dims * |H|");
  }
  auto block = [&](int m, int n) {
    return op.block(static_cast<Eigen::Index>(H.index_of(m)) * out_dim,
                    static_cast<Eigen::Index>(H.index_of(n)) * in_dim, out_dim, in_dim);
  };
  // Real chart offsets: order 0 occupies one block, each order h >= 1 a
  // (real, imag) block pair.
  auto row_re = [&](int m) { return static_cast<Eigen::Index>(out_dim) * (m == 0 ? 0 : 2 * m - 1); };
  auto row_im = [&](int m) { return static_cast<Eigen::Index>(out_dim) * (2 * m); };
  auto col_re = [&](int n) { return static_cast<Eigen::Index>(in_dim) * (n == 0 ? 0 : 2 * n - 1); };
  auto col_im = [&](int n) { return static_cast<Eigen::Index>(in_dim) * (2 * n); };

  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(out_dim) * nb,
                            static_cast<Eigen::Index>(in_dim) * nb);
  for (int m = 0; m <= H.h_max; ++m) {
    for (int n = 0; n <= H.h_max; ++n) {
      if (n == 0) {
        // dX_0 is real; dY_m = M_{m,0} dX_0.
        const MatrixComp mm = block(m, 0);
        out.block(row_re(m), col_re(0), out_dim, in_dim) = mm.real();
        if (m > 0) out.block(row_im(m), col_re(0), out_dim, in_dim) = mm.imag();
        continue;
      }
      // dX_n = da + j db co-varies with dX_{-n} = da - j db.
      const MatrixComp sum = block(m, n) + block(m, -n);
      const MatrixComp dif = block(m, n) - block(m, -n);
      // dY_m = sum * da + j * dif * db.
      out.block(row_re(m), col_re(n), out_dim, in_dim) = sum.real();
      out.block(row_re(m), col_im(n), out_dim, in_dim) = -dif.imag();
      if (m > 0) {
        out.block(row_im(m), col_re(n), out_dim, in_dim) = sum.imag();
        out.block(row_im(m), col_im(n), out_dim, in_dim) = dif.real();
      }
    }
  }
  return out;
}

Matrix realify_block_diagonal(const std::vector<MatrixComp>& blocks_h0_to_hmax,
                              const HarmonicIndexSet& H) {
  if (static_cast<int>(blocks_h0_to_hmax.size()) != H.h_max + 1) {
    throw Error(ErrorKind::dimension, "need one diagonal block per order 0..h_max");
  }
  const Eigen::Index rows = blocks_h0_to_hmax.front().rows();
  const Eigen::Index cols = blocks_h0_to_hmax.front().cols();
  for (const auto& b : blocks_h0_to_hmax) {
    if (b.rows() != rows || b.cols() != cols) {
      throw Error(ErrorKind::dimension, "per-harmonic diagonal blocks must be equal-sized");
    }
  }
  Matrix out = Matrix::Zero(rows * H.count(), cols * H.count());
  out.block(0, 0, rows, cols) = blocks_h0_to_hmax[0].real();
  for (int h = 1; h <= H.h_max; ++h) {
    const Eigen::Index row_re = rows * (2 * h - 1);
    const Eigen::Index row_im = rows * (2 * h);
    const Eigen::Index col_re = cols * (2 * h - 1);
    const Eigen::Index col_im = cols * (2 * h);
    const MatrixComp& m = blocks_h0_to_hmax[static_cast<std::size_t>(h)];
    out.block(row_re, col_re, rows, cols) = m.real();
    out.block(row_re, col_im, rows, cols) = -m.imag();
    out.block(row_im, col_re, rows, cols) = m.imag();
    out.block(row_im, col_im, rows, cols) = m.real();
  }
  return out;
}

}  // namespace hpf
