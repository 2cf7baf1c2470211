#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace hpf {

using Real = double;
using Complex = std::complex<double>;

using Matrix = Eigen::MatrixXd;
using MatrixComp = Eigen::MatrixXcd;
using Vector = Eigen::VectorXd;
using VectorComp = Eigen::VectorXcd;
using Matrix3 = Eigen::Matrix3d;
using Matrix3Comp = Eigen::Matrix3cd;
using Vector3Comp = Eigen::Vector3cd;

inline constexpr Complex kImag{0.0, 1.0};
inline constexpr Real kPi = 3.141592653589793238462643383279502884;

/// Set of harmonic orders {-h_max, ..., +h_max} on a fundamental of f1 Hz.
struct HarmonicIndexSet {
  int h_max = 0;
  Real f1 = 50.0;

  [[nodiscard]] int count() const { return 2 * h_max + 1; }
  [[nodiscard]] bool contains(int h) const { return h >= -h_max && h <= h_max; }
  /// Position of order h within the ascending enumeration -h_max..+h_max.
  [[nodiscard]] int index_of(int h) const { return h + h_max; }
  [[nodiscard]] Real frequency(int h) const { return static_cast<Real>(h) * f1; }
  [[nodiscard]] Real omega(int h) const { return 2.0 * kPi * frequency(h); }
};

/// Singularity guard for partial-pivoting LU.  The built-in condition
/// estimate can return an arbitrary value when a pivot is exactly zero, so a
/// pivot-ratio check backs it up; either signal marks the factorization
/// unusable.
template <typename MatrixType>
[[nodiscard]] bool ill_conditioned(const Eigen::PartialPivLU<MatrixType>& lu,
                                   Real condition_limit = 1e12) {
  if (lu.rows() == 0) return false;  // empty systems are trivially solvable
  const auto pivots = lu.matrixLU().diagonal().cwiseAbs().eval();
  if (!pivots.allFinite()) return true;
  const Real largest = pivots.maxCoeff();
  if (!(largest > 0.0) || pivots.minCoeff() < largest / condition_limit) return true;
  return !(lu.rcond() >= 1.0 / condition_limit);
}

enum class ErrorKind {
  model,                 // inconsistent network / resource description
  parameter,             // element parameters violate the passivity/symmetry assumptions
  reduction,             // interior-node elimination impossible (singular interior block)
  partition,             // invalid source/resource node split
  truncation,            // spectral content outside the retained harmonic set
  dimension,             // mismatched operator/signal dimensions
  algebraic_loop,        // ill-posed feedback interconnection (I - T D singular)
  gain_existence,        // harmonic-domain dynamics matrix singular (resonance)
  reference_singularity, // reference law evaluated at a singular operating point
  solver,                // singular / ill-conditioned mismatch Jacobian
  aliasing,              // waveform sampling too coarse for the harmonic set
  unsupported,           // requested configuration outside the supported model family
  io,                    // malformed input file or unwritable output
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[nodiscard]] inline const char* kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::model: return "model";
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::reduction: return "reduction";
    case ErrorKind::partition: return "partition";
    case ErrorKind::truncation: return "truncation";
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::algebraic_loop: return "algebraic-loop";
    case ErrorKind::gain_existence: return "gain-existence";
    case ErrorKind::reference_singularity: return "reference-singularity";
    case ErrorKind::solver: return "solver";
    case ErrorKind::aliasing: return "aliasing";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

}  // namespace hpf
