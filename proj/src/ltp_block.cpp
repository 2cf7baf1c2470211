#include "hpf/ltp_block.hpp"

#include <cmath>

namespace hpf {

namespace {

void check_set(const std::map<int, MatrixComp>& coeffs, int rows, int cols,
               const std::string& label, const std::string& name) {
  for (const auto& [h, m] : coeffs) {
    if (m.rows() != rows || m.cols() != cols) {
      throw Error(ErrorKind::dimension,
                  label + ": coefficient " + name + "[" + std::to_string(h) + "] is " +
                      std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ", expected " +
                      std::to_string(rows) + "x" + std::to_string(cols));
    }
    MatrixComp partner = MatrixComp::Zero(rows, cols);
    auto it = coeffs.find(-h);
    if (it != coeffs.end()) partner = it->second;
    if ((m - partner.conjugate()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, m.norm())) {
      throw Error(ErrorKind::model,
                  label + ": coefficient set " + name +
                      " is not conjugate-symmetric (block would be complex-valued in time)");
    }
  }
}

Matrix sample_set(const std::map<int, MatrixComp>& coeffs, int rows, int cols, Real t, Real f1) {
  MatrixComp value = MatrixComp::Zero(rows, cols);
  const Real w1 = 2.0 * kPi * f1;
  for (const auto& [h, m] : coeffs) {
    value += m * std::exp(kImag * (static_cast<Real>(h) * w1 * t));
  }
  return value.real();
}

}  // namespace

void LtpBlock::validate(const std::string& label) const {
  if (nx < 0 || nu < 0 || ny <= 0 || nw < 0) {
    throw Error(ErrorKind::model, label + ": block dimensions must be positive");
  }
  check_set(a, nx, nx, label, "A");
  check_set(b, nx, nu, label, "B");
  check_set(c, ny, nx, label, "C");
  check_set(d, ny, nu, label, "D");
  check_set(e, nx, nw, label, "E");
  check_set(f, ny, nw, label, "F");
}

Matrix LtpBlock::a_at(Real t, Real f1) const { return sample_set(a, nx, nx, t, f1); }
Matrix LtpBlock::b_at(Real t, Real f1) const { return sample_set(b, nx, nu, t, f1); }
Matrix LtpBlock::c_at(Real t, Real f1) const { return sample_set(c, ny, nx, t, f1); }
Matrix LtpBlock::d_at(Real t, Real f1) const { return sample_set(d, ny, nu, t, f1); }
Matrix LtpBlock::e_at(Real t, Real f1) const { return sample_set(e, nx, nw, t, f1); }
Matrix LtpBlock::f_at(Real t, Real f1) const { return sample_set(f, ny, nw, t, f1); }

}  // namespace hpf
