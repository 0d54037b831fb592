// Dense complex linear algebra: exponentials, Hermitian spectral calculus,
// fractional powers, Kronecker assembly and norms.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace dyson {

using cplx = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;

inline constexpr cplx kI{0.0, 1.0};
inline constexpr double kPi = 3.14159265358979323846;

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};
struct OverflowError : std::overflow_error {
  using std::overflow_error::overflow_error;
};

namespace linalg {

inline constexpr double kConstructionTol = 1e-12;
inline constexpr double kPropertyTol = 1e-10;
inline constexpr double kExpmMaxNorm = 1e4;

template <class Derived>
double one_norm(const Eigen::MatrixBase<Derived>& m) {
  double best = 0.0;
  for (Eigen::Index j = 0; j < m.cols(); ++j) best = std::max(best, m.col(j).cwiseAbs().sum());
  return best;
}

inline bool all_finite(const ComplexMatrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i)
    if (!std::isfinite(m.data()[i].real()) || !std::isfinite(m.data()[i].imag())) return false;
  return true;
}

namespace detail {

// Pade numerator coefficients b_0..b_m for degrees 3, 5, 7, 9, 13.
inline const std::vector<double>& pade_coeffs(int m) {
  static const std::vector<double> p3{120., 60., 12., 1.};
  static const std::vector<double> p5{30240., 15120., 3360., 420., 30., 1.};
  static const std::vector<double> p7{17297280., 8648640., 1995840., 277200., 25200., 1512., 56., 1.};
  static const std::vector<double> p9{17643225600., 8821612800., 2075673600., 302702400., 30270240.,
                                      2162160.,     110880.,      3960.,        90.,         1.};
  static const std::vector<double> p13{64764752532480000., 32382376266240000., 7771770303897600.,
                                       1187353796428800.,  129060195264000.,   10559470521600.,
                                       670442572800.,      33522128640.,       1323241920.,
                                       40840800.,          960960.,            16380.,
                                       182.,               1.};
  switch (m) {
    case 3: return p3;
    case 5: return p5;
    case 7: return p7;
    case 9: return p9;
    default: return p13;
  }
}

}  // namespace detail

// Scaling and squaring with diagonal Pade approximants (Higham 2005).
// Works for dynamic and bounded-size Eigen complex matrices.
template <class Mat>
Mat expm(const Mat& a) {
  if (a.rows() != a.cols()) throw DimensionError("expm: matrix is not square");
  const Eigen::Index n = a.rows();
  const double nrm = one_norm(a);
  if (!std::isfinite(nrm)) throw DomainError("expm: non-finite entries");
  if (nrm > kExpmMaxNorm) throw OverflowError("expm: norm exceeds 1e4");
  const Mat id = Mat::Identity(n, n);
  if (nrm == 0.0) return id;

  static constexpr double theta[] = {1.495585217958292e-2, 2.539398330063230e-1, 9.504178996162932e-1,
                                     2.097847961257068e0};
  static constexpr int degs[] = {3, 5, 7, 9};
  const Mat a2 = a * a;
  for (int idx = 0; idx < 4; ++idx) {
    if (nrm > theta[idx]) continue;
    const auto& b = detail::pade_coeffs(degs[idx]);
    Mat u = b[1] * id;
    Mat v = b[0] * id;
    Mat pw = id;
    for (int k = 1; 2 * k <= degs[idx]; ++k) {
      pw = pw * a2;
      u += b[2 * k + 1] * pw;
      v += b[2 * k] * pw;
    }
    u = a * u;
    return (v - u).partialPivLu().solve(v + u);
  }

  constexpr double theta13 = 5.371920351148152;
  int s = std::max(0, static_cast<int>(std::ceil(std::log2(nrm / theta13))));
  const double scale = std::ldexp(1.0, -s);
  const Mat as = a * scale;
  const Mat b2 = a2 * (scale * scale);
  const Mat b4 = b2 * b2;
  const Mat b6 = b4 * b2;
  const auto& b = detail::pade_coeffs(13);
  Mat u = as * (b6 * (b[13] * b6 + b[11] * b4 + b[9] * b2) + b[7] * b6 + b[5] * b4 + b[3] * b2 + b[1] * id);
  Mat v = b6 * (b[12] * b6 + b[10] * b4 + b[8] * b2) + b[6] * b6 + b[4] * b4 + b[2] * b2 + b[0] * id;
  Mat r = (v - u).partialPivLu().solve(v + u);
  for (int k = 0; k < s; ++k) r = r * r;
  return r;
}

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Assemble a rectangular grid of blocks; empty (0x0) entries are zero blocks
// whose size is inferred from the row and column.
inline ComplexMatrix block_assemble(const std::vector<std::vector<ComplexMatrix>>& grid) {
  if (grid.empty() || grid.front().empty()) throw DimensionError("block_assemble: empty grid");
  const std::size_t br = grid.size(), bc = grid.front().size();
  std::vector<Eigen::Index> rh(br, -1), cw(bc, -1);
  for (std::size_t i = 0; i < br; ++i) {
    if (grid[i].size() != bc) throw DimensionError("block_assemble: ragged grid");
    for (std::size_t j = 0; j < bc; ++j) {
      const auto& m = grid[i][j];
      if (m.size() == 0) continue;
      if ((rh[i] >= 0 && rh[i] != m.rows()) || (cw[j] >= 0 && cw[j] != m.cols()))
        throw DimensionError("block_assemble: inconsistent block sizes");
      rh[i] = m.rows();
      cw[j] = m.cols();
    }
  }
  Eigen::Index rows = 0, cols = 0;
  for (auto h : rh) {
    if (h < 0) throw DimensionError("block_assemble: undetermined row height");
    rows += h;
  }
  for (auto w : cw) {
    if (w < 0) throw DimensionError("block_assemble: undetermined column width");
    cols += w;
  }
  ComplexMatrix out = ComplexMatrix::Zero(rows, cols);
  Eigen::Index r0 = 0;
  for (std::size_t i = 0; i < br; ++i) {
    Eigen::Index c0 = 0;
    for (std::size_t j = 0; j < bc; ++j) {
      if (grid[i][j].size() != 0) out.block(r0, c0, rh[i], cw[j]) = grid[i][j];
      c0 += cw[j];
    }
    r0 += rh[i];
  }
  return out;
}

// Largest singular value.
inline double op_norm(const ComplexMatrix& m) {
  if (m.size() == 0) return 0.0;
  if (m.rows() == 1 || m.cols() == 1) return m.norm();
  Eigen::BDCSVD<ComplexMatrix> svd(m);
  return svd.singularValues()(0);
}

}  // namespace linalg

// Self-adjoint matrix together with its spectral decomposition.
class HermitianOperator {
 public:
  HermitianOperator() = default;

  explicit HermitianOperator(const ComplexMatrix& m) {
    if (m.rows() != m.cols() || m.rows() == 0) throw DimensionError("HermitianOperator: matrix must be square");
    if (!linalg::all_finite(m)) throw DomainError("HermitianOperator: non-finite entries");
    const double scale = std::max(1.0, linalg::op_norm(m));
    if ((m - m.adjoint()).norm() > linalg::kConstructionTol * scale)
      throw DomainError("HermitianOperator: matrix is not self-adjoint");
    matrix_ = 0.5 * (m + m.adjoint());
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(matrix_);
    if (es.info() != Eigen::Success) throw DomainError("HermitianOperator: eigendecomposition failed");
    eigvals_ = es.eigenvalues();
    eigvecs_ = es.eigenvectors();
    norm_ = eigvals_.size() ? std::max(std::abs(eigvals_(0)), std::abs(eigvals_(eigvals_.size() - 1))) : 0.0;
  }

  // Rejects operators with spectrum below -1e-12 * |M|.
  static HermitianOperator nonnegative(const ComplexMatrix& m) {
    HermitianOperator h(m);
    if (!h.is_nonnegative()) throw DomainError("HermitianOperator: operator is not nonnegative");
    return h;
  }

  bool is_nonnegative() const { return min_eigenvalue() >= -linalg::kConstructionTol * std::max(1.0, norm_); }

  Eigen::Index dim() const { return matrix_.rows(); }
  const ComplexMatrix& matrix() const { return matrix_; }
  const Eigen::VectorXd& eigvals() const { return eigvals_; }
  const ComplexMatrix& eigvecs() const { return eigvecs_; }
  double min_eigenvalue() const { return eigvals_.size() ? eigvals_(0) : 0.0; }
  double norm() const { return norm_; }

  template <class F>
  ComplexMatrix apply_function(F&& f) const {
    ComplexMatrix scaled = eigvecs_;
    for (Eigen::Index j = 0; j < eigvals_.size(); ++j) scaled.col(j) *= f(eigvals_(j));
    return scaled * eigvecs_.adjoint();
  }

 private:
  ComplexMatrix matrix_;
  Eigen::VectorXd eigvals_;
  ComplexMatrix eigvecs_;
  double norm_ = 0.0;
};

namespace linalg {

// e^{-tH} via the spectral decomposition.
inline ComplexMatrix herm_exp(const HermitianOperator& h, double t) {
  if (!(t >= 0.0)) throw DomainError("herm_exp: t must be nonnegative");
  if (t == 0.0) return ComplexMatrix::Identity(h.dim(), h.dim());
  return h.apply_function([t](double l) { return std::exp(-t * l); });
}

// (H+1)^{-a} for 0 < a < 1.
inline ComplexMatrix frac_power_inv(const HermitianOperator& h, double a) {
  if (!(a > 0.0 && a < 1.0)) throw DomainError("frac_power_inv: exponent must lie in (0,1)");
  if (!h.is_nonnegative()) throw DomainError("frac_power_inv: operator is not nonnegative");
  return h.apply_function([a](double l) { return std::pow(std::max(l, 0.0) + 1.0, -a); });
}

struct RelativeBound {
  double epsilon = 0.0;
  double c_epsilon = 0.0;
  bool holds = true;
  double worst_slack = 0.0;  // min over samples of rhs - lhs
};

// Splits the resolvent integral representation of (H+1)^{-1+a} at lambda:
// |Pf| <= eps |Hf| + C_eps |f| with eps = C lambda^{a-1}/(1-a),
// C_eps = C (lambda^a / a + lambda^{a-1}/(1-a)), C = |P (H+1)^{-a}| sin(pi a)/pi.
template <class Rng>
RelativeBound relative_bound_probe(const HermitianOperator& h, const ComplexMatrix& p, double a, double lambda,
                                   std::size_t samples, Rng& rng) {
  if (p.rows() != h.dim() || p.cols() != h.dim()) throw DimensionError("relative_bound_probe: shape mismatch");
  if (!(lambda > 0.0)) throw DomainError("relative_bound_probe: lambda must be positive");
  const double c = op_norm(p * frac_power_inv(h, a)) * std::sin(kPi * a) / kPi;
  RelativeBound out;
  out.epsilon = c * std::pow(lambda, a - 1.0) / (1.0 - a);
  out.c_epsilon = c * (std::pow(lambda, a) / a + std::pow(lambda, a - 1.0) / (1.0 - a));
  out.worst_slack = std::numeric_limits<double>::infinity();
  const Eigen::Index n = h.dim();
  for (std::size_t s = 0; s < samples; ++s) {
    ComplexVector f(n);
    for (Eigen::Index i = 0; i < n; ++i) f(i) = rng.complex_normal();
    f.normalize();
    const double lhs = (p * f).norm();
    const double rhs = out.epsilon * (h.matrix() * f).norm() + out.c_epsilon;
    out.worst_slack = std::min(out.worst_slack, rhs - lhs);
    if (lhs > rhs * (1.0 + 1e-12) + 1e-14) out.holds = false;
  }
  return out;
}

}  // namespace linalg
}  // namespace dyson
