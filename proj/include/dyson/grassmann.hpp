// Exterior algebra over C^n with a bitmask monomial basis.
// Bit j-1 of a mask is set iff theta_j is present.
#pragma once

#include "dyson/linalg.hpp"

#include <bit>
#include <cstdint>
#include <map>

namespace dyson::grassmann {

using Mask = std::uint32_t;
inline constexpr unsigned kMaxGenerators = 24;

// Sign of theta_S ^ theta_T written back in sorted order; 0 if S and T overlap.
inline int wedge_sign(Mask s, Mask t) {
  if (s & t) return 0;
  unsigned swaps = 0;
  for (Mask rest = t; rest; rest &= rest - 1) {
    const unsigned j = static_cast<unsigned>(std::countr_zero(rest));
    swaps += static_cast<unsigned>(std::popcount(s >> (j + 1)));
  }
  return (swaps & 1u) ? -1 : 1;
}

class MultiVector {
 public:
  explicit MultiVector(unsigned n = 0) : n_(n) {
    if (n > kMaxGenerators) throw DimensionError("MultiVector: too many generators");
  }

  static MultiVector scalar(unsigned n, cplx c) { return monomial(n, 0, c); }

  // theta_j, 1-based.
  static MultiVector generator(unsigned n, unsigned j, cplx c = 1.0) {
    if (j < 1 || j > n) throw DimensionError("MultiVector: generator index out of range");
    return monomial(n, Mask{1} << (j - 1), c);
  }

  static MultiVector monomial(unsigned n, Mask s, cplx c = 1.0) {
    MultiVector m(n);
    m.add(s, c);
    return m;
  }

  unsigned generators() const { return n_; }
  Mask full_mask() const { return n_ == 32 ? ~Mask{0} : ((Mask{1} << n_) - 1); }
  const std::map<Mask, cplx>& terms() const { return coeffs_; }

  cplx coeff(Mask s) const {
    auto it = coeffs_.find(s);
    return it == coeffs_.end() ? cplx{} : it->second;
  }

  void add(Mask s, cplx c) {
    if (s & ~full_mask()) throw DimensionError("MultiVector: mask outside generator range");
    if (c == cplx{}) return;
    auto [it, inserted] = coeffs_.try_emplace(s, c);
    if (!inserted) {
      it->second += c;
      if (it->second == cplx{}) coeffs_.erase(it);
    }
  }

  bool is_zero() const { return coeffs_.empty(); }

  // Degree of every term if all terms share one degree; -1 for zero, -2 if mixed.
  int pure_degree() const {
    int deg = -1;
    for (const auto& [s, c] : coeffs_) {
      const int d = std::popcount(s);
      if (deg == -1) deg = d;
      else if (deg != d) return -2;
    }
    return deg;
  }

  MultiVector degree_part(unsigned k) const {
    MultiVector out(n_);
    for (const auto& [s, c] : coeffs_)
      if (static_cast<unsigned>(std::popcount(s)) == k) out.coeffs_.emplace(s, c);
    return out;
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& [s, c] : coeffs_) m = std::max(m, std::abs(c));
    return m;
  }

  MultiVector& operator+=(const MultiVector& o) {
    check_same(o);
    for (const auto& [s, c] : o.coeffs_) add(s, c);
    return *this;
  }
  MultiVector& operator-=(const MultiVector& o) {
    check_same(o);
    for (const auto& [s, c] : o.coeffs_) add(s, -c);
    return *this;
  }
  MultiVector& operator*=(cplx k) {
    if (k == cplx{}) {
      coeffs_.clear();
      return *this;
    }
    for (auto& [s, c] : coeffs_) c *= k;
    return *this;
  }

  friend MultiVector operator+(MultiVector a, const MultiVector& b) { return a += b; }
  friend MultiVector operator-(MultiVector a, const MultiVector& b) { return a -= b; }
  friend MultiVector operator*(cplx k, MultiVector a) { return a *= k; }
  friend MultiVector operator*(MultiVector a, cplx k) { return a *= k; }

  void check_same(const MultiVector& o) const {
    if (o.n_ != n_) throw DimensionError("MultiVector: generator counts differ");
  }

 private:
  unsigned n_;
  std::map<Mask, cplx> coeffs_;
};

inline MultiVector wedge(const MultiVector& a, const MultiVector& b) {
  a.check_same(b);
  MultiVector out(a.generators());
  for (const auto& [s, x] : a.terms())
    for (const auto& [t, y] : b.terms())
      if (const int sg = wedge_sign(s, t)) out.add(s | t, static_cast<double>(sg) * x * y);
  return out;
}

// Coefficient of theta_1 ... theta_n.
inline cplx berezin(const MultiVector& a) { return a.coeff(a.full_mask()); }

// Matrix of beta -> theta_j ^ beta on the 2^n basis ordered by mask value.
inline ComplexMatrix theta_hat_matrix(unsigned j, unsigned n) {
  if (j < 1 || j > n) throw DimensionError("theta_hat_matrix: index out of range");
  if (n > 12) throw DimensionError("theta_hat_matrix: dense form limited to n <= 12");
  const Mask bit = Mask{1} << (j - 1);
  const Eigen::Index dim = Eigen::Index{1} << n;
  ComplexMatrix m = ComplexMatrix::Zero(dim, dim);
  for (Mask s = 0; s < static_cast<Mask>(dim); ++s) {
    if (s & bit) continue;
    m(s | bit, s) = (std::popcount(s & (bit - 1)) & 1) ? -1.0 : 1.0;
  }
  return m;
}

}  // namespace dyson::grassmann
