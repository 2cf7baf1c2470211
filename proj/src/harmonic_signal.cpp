#include "hpf/harmonic_signal.hpp"

#include <algorithm>
#include <cmath>

namespace hpf {

namespace {

void check_dim(const HarmonicSignal& x, const VectorComp& value) {
  if (value.size() != x.dim) {
    throw Error(ErrorKind::dimension,
                "harmonic signal of dimension " + std::to_string(x.dim) +
                    " given a coefficient of size " + std::to_string(value.size()));
  }
}

}  // namespace

void HarmonicSignal::add(int h, const VectorComp& value) {
  check_dim(*this, value);
  auto [it, inserted] = coeffs.try_emplace(h, value);
  if (!inserted) it->second += value;
}

void HarmonicSignal::set(int h, const VectorComp& value) {
  check_dim(*this, value);
  coeffs[h] = value;
}

Real HarmonicSignal::max_abs() const {
  Real m = 0.0;
  for (const auto& [h, c] : coeffs) m = std::max(m, c.cwiseAbs().maxCoeff());
  return m;
}

int HarmonicSignal::max_order() const {
  int m = 0;
  for (const auto& [h, c] : coeffs) {
    if (c.cwiseAbs().maxCoeff() > 0.0) m = std::max(m, std::abs(h));
  }
  return m;
}

void HarmonicSignal::prune(Real tol) {
  for (auto it = coeffs.begin(); it != coeffs.end();) {
    if (it->second.cwiseAbs().maxCoeff() <= tol) {
      it = coeffs.erase(it);
    } else {
      ++it;
    }
  }
}

HarmonicSignal& HarmonicSignal::operator+=(const HarmonicSignal& other) {
  if (other.dim != dim) {
    throw Error(ErrorKind::dimension, "adding harmonic signals of different dimension");
  }
  for (const auto& [h, c] : other.coeffs) add(h, c);
  return *this;
}

HarmonicSignal& HarmonicSignal::operator-=(const HarmonicSignal& other) {
  if (other.dim != dim) {
    throw Error(ErrorKind::dimension, "subtracting harmonic signals of different dimension");
  }
  for (const auto& [h, c] : other.coeffs) add(h, (-c).eval());
  return *this;
}

HarmonicSignal& HarmonicSignal::operator*=(Complex scale) {
  for (auto& [h, c] : coeffs) c *= scale;
  return *this;
}

void project_conjugate_symmetric(HarmonicSignal& x) {
  HarmonicSignal out(x.dim);
  for (const auto& [h, c] : x.coeffs) {
    if (h < 0) continue;
    if (h == 0) {
      out.set(0, c.real().cast<Complex>());
      continue;
    }
    const VectorComp sym = 0.5 * (c + x.at(-h).conjugate());
    out.set(h, sym);
    out.set(-h, sym.conjugate());
  }
  // Orders present only on the negative side still contribute.
  for (const auto& [h, c] : x.coeffs) {
    if (h >= 0 || x.has(-h)) continue;
    const VectorComp sym = 0.5 * c;  // positive-side partner is zero
    out.set(-h, sym.conjugate());
    out.set(h, sym);
  }
  x = std::move(out);
}

Real conjugate_symmetry_defect(const HarmonicSignal& x) {
  Real defect = 0.0;
  for (const auto& [h, c] : x.coeffs) {
    if (h < 0) continue;
    const VectorComp partner = x.at(-h).conjugate();
    defect = std::max(defect, (c - partner).cwiseAbs().maxCoeff());
  }
  for (const auto& [h, c] : x.coeffs) {
    if (h >= 0 || x.has(-h)) continue;
    defect = std::max(defect, c.cwiseAbs().maxCoeff());
  }
  return defect;
}

VectorComp stack_signal(const HarmonicSignal& x, const HarmonicIndexSet& H) {
  for (const auto& [h, c] : x.coeffs) {
    if (!H.contains(h) && c.cwiseAbs().maxCoeff() > 0.0) {
      throw Error(ErrorKind::truncation,
                  "signal has content at order " + std::to_string(h) +
                      " outside the retained set |h| <= " + std::to_string(H.h_max));
    }
  }
  VectorComp out = VectorComp::Zero(static_cast<Eigen::Index>(x.dim) * H.count());
  for (const auto& [h, c] : x.coeffs) {
    if (!H.contains(h)) continue;
    out.segment(static_cast<Eigen::Index>(H.index_of(h)) * x.dim, x.dim) = c;
  }
  return out;
}

HarmonicSignal unstack_signal(const VectorComp& stacked, int dim, const HarmonicIndexSet& H) {
  if (stacked.size() != static_cast<Eigen::Index>(dim) * H.count()) {
    throw Error(ErrorKind::dimension, "stacked vector size does not match dim * |H|");
  }
  HarmonicSignal out(dim);
  for (int h = -H.h_max; h <= H.h_max; ++h) {
    VectorComp c = stacked.segment(static_cast<Eigen::Index>(H.index_of(h)) * dim, dim);
    if (c.cwiseAbs().maxCoeff() > 0.0) out.set(h, c);
  }
  return out;
}

Matrix waveform_from_signal(const HarmonicSignal& x, const HarmonicIndexSet& H, int n_samples) {
  if (n_samples < 1) {
    throw Error(ErrorKind::dimension, "waveform sampling needs at least one sample");
  }
  if (x.max_order() > H.h_max) {
    throw Error(ErrorKind::truncation, "signal carries content above the retained set");
  }
  Matrix samples = Matrix::Zero(n_samples, x.dim);
  for (int k = 0; k < n_samples; ++k) {
    const Real angle = 2.0 * kPi * static_cast<Real>(k) / static_cast<Real>(n_samples);
    VectorComp value = VectorComp::Zero(x.dim);
    for (const auto& [h, c] : x.coeffs) {
      value += c * std::exp(kImag * (static_cast<Real>(h) * angle));
    }
    samples.row(k) = value.real().transpose();
  }
  return samples;
}

HarmonicSignal signal_from_waveform(const Matrix& samples, const HarmonicIndexSet& H) {
  const int n = static_cast<int>(samples.rows());
  if (n < 4 * H.h_max + 4) {
    throw Error(ErrorKind::aliasing,
                "waveform with " + std::to_string(n) + " samples per period cannot resolve " +
                    std::to_string(H.h_max) + " harmonics; need at least " +
                    std::to_string(4 * H.h_max + 4));
  }
  const int dim = static_cast<int>(samples.cols());
  HarmonicSignal out(dim);
  for (int h = 0; h <= H.h_max; ++h) {
    VectorComp c = VectorComp::Zero(dim);
    for (int k = 0; k < n; ++k) {
      const Real angle = -2.0 * kPi * static_cast<Real>(h) * static_cast<Real>(k) /
                         static_cast<Real>(n);
      c += samples.row(k).transpose().cast<Complex>() * std::exp(kImag * angle);
    }
    c /= static_cast<Real>(n);
    if (h == 0) c = c.real().cast<Complex>();
    if (c.cwiseAbs().maxCoeff() > 0.0) {
      out.set(h, c);
      if (h > 0) out.set(-h, c.conjugate());
    }
  }
  return out;
}

Vector real_coordinates(const HarmonicSignal& x, const HarmonicIndexSet& H) {
  const int d = x.dim;
  Vector out = Vector::Zero(static_cast<Eigen::Index>(d) * H.count());
  out.segment(0, d) = x.at(0).real();
  for (int h = 1; h <= H.h_max; ++h) {
    const VectorComp c = x.at(h);
    out.segment(static_cast<Eigen::Index>(d) * (2 * h - 1), d) = c.real();
    out.segment(static_cast<Eigen::Index>(d) * (2 * h), d) = c.imag();
  }
  return out;
}

HarmonicSignal signal_from_real_coordinates(const Vector& coords, int dim,
                                            const HarmonicIndexSet& H) {
  if (coords.size() != static_cast<Eigen::Index>(dim) * H.count()) {
    throw Error(ErrorKind::dimension, "real coordinate vector size does not match dim * |H|");
  }
  HarmonicSignal out(dim);
  out.set(0, coords.segment(0, dim).cast<Complex>());
  for (int h = 1; h <= H.h_max; ++h) {
    const VectorComp c = coords.segment(static_cast<Eigen::Index>(dim) * (2 * h - 1), dim) +
                         kImag * coords.segment(static_cast<Eigen::Index>(dim) * (2 * h), dim);
    out.set(h, c);
    out.set(-h, c.conjugate());
  }
  return out;
}

}  // namespace hpf
