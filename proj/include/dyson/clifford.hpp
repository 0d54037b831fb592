// Complex Clifford algebra of R^d (d even) on spinors C^{2^{d/2}}, with
// c_i c_j + c_j c_i = -2 delta_ij, supertraces, quantization of forms,
// the spin map T(A) and the A-hat series in the even exterior algebra.
#pragma once

#include "dyson/grassmann.hpp"
#include "dyson/linalg.hpp"

#include <array>
#include <vector>

namespace dyson::clifford {

using Form = grassmann::MultiVector;
using FormMatrix = std::vector<std::vector<Form>>;
using Word = std::vector<RealMatrix>;

struct SpinorRep {
  unsigned d = 0;
  unsigned l = 0;
  std::vector<ComplexMatrix> c;  // c_1..c_d stored at 0..d-1
  ComplexMatrix chirality;
  int sigma = 1;

  Eigen::Index dim() const { return Eigen::Index{1} << l; }
  const ComplexMatrix& gen(unsigned i) const { return c.at(i - 1); }
};

inline ComplexMatrix clifford_quantize(const SpinorRep& rep, const Form& form) {
  if (form.generators() != rep.d) throw DimensionError("clifford_quantize: form dimension mismatch");
  ComplexMatrix out = ComplexMatrix::Zero(rep.dim(), rep.dim());
  for (const auto& [mask, coef] : form.terms()) {
    ComplexMatrix m = ComplexMatrix::Identity(rep.dim(), rep.dim());
    for (unsigned i = 1; i <= rep.d; ++i)
      if (mask >> (i - 1) & 1u) m = m * rep.gen(i);
    out += coef * m;
  }
  return out;
}

inline cplx supertrace(const SpinorRep& rep, const ComplexMatrix& m) {
  if (m.rows() != rep.dim() || m.cols() != rep.dim()) throw DimensionError("supertrace: shape mismatch");
  return (rep.chirality * m).trace();
}

inline void check_antisymmetric(const RealMatrix& a, unsigned d) {
  if (a.rows() != d || a.cols() != d) throw DimensionError("antisymmetric matrix has wrong size");
  if ((a + a.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw DomainError("matrix is not antisymmetric");
}

// T(A) = (1/4) sum a_ij c_i c_j.
inline ComplexMatrix T_of(const SpinorRep& rep, const RealMatrix& a) {
  check_antisymmetric(a, rep.d);
  ComplexMatrix out = ComplexMatrix::Zero(rep.dim(), rep.dim());
  for (unsigned i = 0; i < rep.d; ++i)
    for (unsigned j = 0; j < rep.d; ++j)
      if (a(i, j) != 0.0) out += (0.25 * a(i, j)) * (rep.c[i] * rep.c[j]);
  return out;
}

// alpha(A) = (1/2) sum a_ij e^i ^ e^j.
inline Form alpha_of(const RealMatrix& a) {
  const unsigned d = static_cast<unsigned>(a.rows());
  check_antisymmetric(a, d);
  Form out(d);
  for (unsigned i = 0; i < d; ++i)
    for (unsigned j = i + 1; j < d; ++j) out.add((1u << i) | (1u << j), a(i, j));
  return out;
}

struct TopIdentity {
  cplx lhs;
  cplx rhs;
  double residual = 0.0;
};

inline ComplexMatrix word_product(const SpinorRep& rep, const Word& word) {
  ComplexMatrix m = ComplexMatrix::Identity(rep.dim(), rep.dim());
  for (const auto& a : word) m = m * T_of(rep, a);
  return m;
}

// Str(T(A_1)..T(A_l)) against top(alpha(A_1)^..^alpha(A_l)) / i^l.
inline TopIdentity patodi_top_identity(const SpinorRep& rep, const Word& word) {
  if (word.size() != rep.l) throw DimensionError("patodi_top_identity: need exactly d/2 factors");
  TopIdentity r;
  r.lhs = supertrace(rep, word_product(rep, word));
  Form w = Form::scalar(rep.d, 1.0);
  for (const auto& a : word) w = wedge(w, alpha_of(a));
  r.rhs = grassmann::berezin(w) / std::pow(kI, static_cast<int>(rep.l));
  r.residual = std::abs(r.lhs - r.rhs);
  return r;
}

inline double patodi_vanishing(const SpinorRep& rep, const Word& word) {
  if (word.size() + 1 > rep.l) throw DimensionError("patodi_vanishing: word order must be at most d/2 - 1");
  return std::abs(supertrace(rep, word_product(rep, word)));
}

// Tensor-product construction: gamma_{2k-1} = s3^{k-1} (x) s1 (x) 1, gamma_{2k} = s3^{k-1} (x) s2 (x) 1,
// c_i = i gamma_i. The chirality sign is fixed by the top identity on
// A_k = A^{2k-1,2k}.
inline SpinorRep build_spinor_rep(unsigned d) {
  if (d == 0 || d % 2 || d > 10) throw DimensionError("build_spinor_rep: d must be even and at most 10");
  SpinorRep rep;
  rep.d = d;
  rep.l = d / 2;
  ComplexMatrix s1(2, 2), s2(2, 2), s3(2, 2), id = ComplexMatrix::Identity(2, 2);
  s1 << 0, 1, 1, 0;
  s2 << 0, -kI, kI, 0;
  s3 << 1, 0, 0, -1;
  for (unsigned k = 1; k <= rep.l; ++k) {
    for (const ComplexMatrix* s : {&s1, &s2}) {
      ComplexMatrix g = ComplexMatrix::Identity(1, 1);
      for (unsigned f = 1; f <= rep.l; ++f) g = linalg::kron(g, f < k ? s3 : (f == k ? *s : id));
      rep.c.push_back(kI * g);
    }
  }
  ComplexMatrix prod = ComplexMatrix::Identity(rep.dim(), rep.dim());
  for (const auto& ci : rep.c) prod = prod * ci;
  rep.chirality = std::pow(kI, static_cast<int>(rep.l)) * prod;

  Word calib;
  for (unsigned k = 0; k < rep.l; ++k) {
    RealMatrix a = RealMatrix::Zero(d, d);
    a(2 * k, 2 * k + 1) = 1.0;
    a(2 * k + 1, 2 * k) = -1.0;
    calib.push_back(a);
  }
  const TopIdentity probe = patodi_top_identity(rep, calib);
  if (std::abs(probe.lhs + probe.rhs) < std::abs(probe.lhs - probe.rhs)) {
    rep.sigma = -1;
    rep.chirality = -rep.chirality;
  }
  if (patodi_top_identity(rep, calib).residual > 1e-12) throw DomainError("build_spinor_rep: calibration failed");
  return rep;
}

// Even forms commute, so these are ordinary commutative-ring operations.
namespace detail {

inline FormMatrix form_matmul(const FormMatrix& a, const FormMatrix& b, unsigned d) {
  const std::size_t n = a.size();
  FormMatrix out(n, std::vector<Form>(n, Form(d)));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) out[i][j] += wedge(a[i][k], b[k][j]);
  return out;
}

// sum_k coeffs[k] m^k for nilpotent m of even degree.
inline Form power_series(const Form& m, const std::vector<double>& coeffs) {
  Form out(m.generators()), pw = Form::scalar(m.generators(), 1.0);
  for (double c : coeffs) {
    if (pw.is_zero()) break;
    out += c * pw;
    pw = wedge(pw, m);
  }
  return out;
}

inline std::vector<double> binomial_half(std::size_t terms) {
  std::vector<double> c{1.0};
  for (std::size_t k = 1; k < terms; ++k) c.push_back(c.back() * (0.5 - static_cast<double>(k - 1)) / k);
  return c;
}

}  // namespace detail

inline Form form_exp(const Form& x) {
  const Form c0 = Form::scalar(x.generators(), x.coeff(0));
  Form nil = x - c0;
  std::vector<double> coeffs{1.0};
  for (unsigned k = 1; k <= x.generators(); ++k) coeffs.push_back(coeffs.back() / k);
  return std::exp(x.coeff(0)) * detail::power_series(nil, coeffs);
}

// Bernoulli numbers B_0, B_2, ..., B_12.
inline constexpr std::array<double, 7> kBernoulliEven{1.0,        1.0 / 6.0,   -1.0 / 30.0, 1.0 / 42.0,
                                                      -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0};

// det^{1/2}((Omega/2) / sinh(Omega/2)) for an antisymmetric matrix of 2-forms.
inline Form a_hat_series(const FormMatrix& omega, unsigned d) {
  const std::size_t n = omega.size();
  for (const auto& row : omega) {
    if (row.size() != n) throw DimensionError("a_hat_series: matrix is not square");
    for (const auto& e : row) {
      if (e.generators() != d) throw DimensionError("a_hat_series: entry dimension mismatch");
      if (e.pure_degree() != 2 && !e.is_zero()) throw DomainError("a_hat_series: entries must be 2-forms");
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if ((omega[i][j] + omega[j][i]).max_abs() > 1e-12) throw DomainError("a_hat_series: matrix not antisymmetric");

  FormMatrix half = omega;
  for (auto& row : half)
    for (auto& e : row) e *= 0.5;
  const FormMatrix x2 = detail::form_matmul(half, half, d);

  // F = sum_k a_k x^{2k}, a_k = (2 - 2^{2k}) B_{2k} / (2k)!.
  FormMatrix f(n, std::vector<Form>(n, Form(d)));
  for (std::size_t i = 0; i < n; ++i) f[i][i] = Form::scalar(d, 1.0);
  FormMatrix pw = f;
  double fact = 1.0;
  for (std::size_t k = 1; k < kBernoulliEven.size() && 4 * k <= d; ++k) {
    pw = detail::form_matmul(pw, x2, d);
    fact *= static_cast<double>((2 * k - 1) * (2 * k));
    const double ak = (2.0 - std::ldexp(1.0, static_cast<int>(2 * k))) * kBernoulliEven[k] / fact;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) f[i][j] += ak * pw[i][j];
  }

  // Determinant by elimination; every pivot is 1 + nilpotent.
  const std::size_t terms = d / 2 + 2;
  std::vector<double> inv_coeffs(terms);
  for (std::size_t k = 0; k < terms; ++k) inv_coeffs[k] = (k % 2) ? -1.0 : 1.0;
  Form det = Form::scalar(d, 1.0);
  for (std::size_t k = 0; k < n; ++k) {
    const Form pivot = f[k][k];
    const cplx p0 = pivot.coeff(0);
    if (std::abs(p0) < 1e-300) throw DomainError("a_hat_series: singular pivot");
    Form pinv = (1.0 / p0) * detail::power_series((1.0 / p0) * pivot - Form::scalar(d, 1.0), inv_coeffs);
    det = wedge(det, pivot);
    for (std::size_t i = k + 1; i < n; ++i) {
      if (f[i][k].is_zero()) continue;
      const Form factor = wedge(f[i][k], pinv);
      for (std::size_t j = k; j < n; ++j) f[i][j] -= wedge(factor, f[k][j]);
    }
  }
  const cplx d0 = det.coeff(0);
  const Form m = (1.0 / d0) * det - Form::scalar(d, 1.0);
  return std::sqrt(d0) * detail::power_series(m, detail::binomial_half(terms));
}

// Antisymmetric matrix of 2-forms from a list of (i, j, form) entries, 1-based.
struct CurvatureEntry {
  unsigned i;
  unsigned j;
  Form form;
};

inline FormMatrix curvature_matrix(unsigned d, const std::vector<CurvatureEntry>& entries) {
  FormMatrix om(d, std::vector<Form>(d, Form(d)));
  for (const auto& e : entries) {
    if (e.i < 1 || e.j < 1 || e.i > d || e.j > d || e.i == e.j) throw DimensionError("curvature_matrix: bad index");
    om[e.i - 1][e.j - 1] += e.form;
    om[e.j - 1][e.i - 1] -= e.form;
  }
  return om;
}

}  // namespace dyson::clifford
