#pragma once

#include "dyson/linalg.hpp"
#include "dyson/rng.hpp"

namespace dyson::testutil {

inline ComplexMatrix random_matrix(Stream& rng, Eigen::Index n, double scale = 1.0) {
  ComplexMatrix m(n, n);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.complex_normal();
  return m;
}

inline ComplexMatrix random_hermitian(Stream& rng, Eigen::Index n, double scale = 1.0) {
  const ComplexMatrix m = random_matrix(rng, n, scale);
  return 0.5 * (m + m.adjoint());
}

// Nonnegative Hermitian with spectrum in [0, top].
inline ComplexMatrix random_psd(Stream& rng, Eigen::Index n, double top = 3.0) {
  Eigen::HouseholderQR<ComplexMatrix> qr(random_matrix(rng, n));
  const ComplexMatrix q = qr.householderQ();
  Eigen::VectorXd ev(n);
  for (Eigen::Index i = 0; i < n; ++i) ev(i) = top * rng.uniform();
  return q * ev.cast<cplx>().asDiagonal() * q.adjoint();
}

inline ComplexMatrix random_unitary(Stream& rng, Eigen::Index n) {
  Eigen::HouseholderQR<ComplexMatrix> qr(random_matrix(rng, n));
  return qr.householderQ();
}

inline double rel_diff(const ComplexMatrix& a, const ComplexMatrix& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-300});
  return (a - b).norm() / scale;
}

}  // namespace dyson::testutil
