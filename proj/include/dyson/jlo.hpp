// Differential graded JLO cocycle on finite Fredholm modules and on the
// Fourier-sectored flat torus spinor module.
#pragma once

#include "dyson/clifford.hpp"
#include "dyson/phi.hpp"

#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace dyson::jlo {

using clifford::Form;

// omega = omega' + u omega''.
struct DGAElement {
  Form prime;
  Form doubleprime;
};

using Chain = std::vector<DGAElement>;

// Blocks are 1-based closed intervals [first, last].
struct OrderedPartition {
  std::vector<std::pair<std::size_t, std::size_t>> blocks;
};

inline std::vector<OrderedPartition> ordered_partitions(std::size_t m, std::size_t n) {
  if (m < 1 || m > n) throw DomainError("ordered_partitions: need 1 <= m <= n");
  std::vector<OrderedPartition> out;
  // Cut points 1 <= c_1 < ... < c_{m-1} <= n-1, in lexicographic order.
  std::vector<std::size_t> cuts(m - 1);
  for (std::size_t i = 0; i + 1 < m; ++i) cuts[i] = i + 1;
  while (true) {
    OrderedPartition p;
    std::size_t start = 1;
    for (std::size_t c : cuts) {
      p.blocks.emplace_back(start, c);
      start = c + 1;
    }
    p.blocks.emplace_back(start, n);
    out.push_back(std::move(p));
    std::size_t i = m - 1;
    while (i > 0 && cuts[i - 1] == n - 1 - (m - 1 - i)) --i;
    if (i == 0) break;
    ++cuts[i - 1];
    for (std::size_t j = i; j + 1 < m; ++j) cuts[j] = cuts[j - 1] + 1;
  }
  return out;
}

inline int checked_degree(const Form& f, const char* what) {
  const int deg = f.pure_degree();
  if (deg == -2) throw DomainError(std::string(what) + ": mixed-degree form");
  return deg < 0 ? 0 : deg;
}

// Graded state space C^{2^{d/2}} (x) C^mult with Clifford map c(omega) =
// weight^{deg} quantize(omega) (x) 1. The Dirac operator is either one fixed
// odd matrix or the flat-torus family D_k = dirac_weight * sum_j i k_j c_j
// over Fourier modes |k|_inf <= K(t).
struct FredholmModule {
  clifford::SpinorRep rep;
  Eigen::Index multiplicity = 1;
  ComplexMatrix D;
  std::function<Form(const Form&)> d_operator;  // empty means the zero differential
  double clifford_weight = 1.0;
  bool flat_torus = false;
  double dirac_weight = 1.0;
  std::optional<int> truncation;  // flat torus only; adaptive when empty

  Eigen::Index dim() const { return rep.dim() * multiplicity; }

  ComplexMatrix grading() const {
    return linalg::kron(rep.chirality, ComplexMatrix::Identity(multiplicity, multiplicity));
  }

  ComplexMatrix clifford(const Form& f) const {
    ComplexMatrix m = ComplexMatrix::Zero(rep.dim(), rep.dim());
    for (const auto& [mask, c] : f.terms())
      m += std::pow(clifford_weight, std::popcount(mask)) * clifford::clifford_quantize(rep, Form::monomial(rep.d, mask, c));
    return multiplicity == 1 ? m : linalg::kron(m, ComplexMatrix::Identity(multiplicity, multiplicity));
  }

  Form differential(const Form& f) const { return d_operator ? d_operator(f) : Form(f.generators()); }

  int mode_cutoff(double t) const {
    if (truncation) return *truncation;
    // exp(-t w^2 K^2) below 1e-20 for the Gaussian weight of the outermost shell.
    const double w2 = dirac_weight * dirac_weight;
    return static_cast<int>(std::ceil(std::sqrt(46.0 / (t * w2)))) + 1;
  }

  // Dirac blocks of all sectors; a single block for the finite module.
  std::vector<ComplexMatrix> sectors(double t) const {
    if (!flat_torus) return {D};
    const int K = mode_cutoff(t);
    const unsigned d = rep.d;
    std::vector<ComplexMatrix> out;
    std::vector<int> k(d, -K);
    while (true) {
      ComplexMatrix dk = ComplexMatrix::Zero(rep.dim(), rep.dim());
      for (unsigned j = 0; j < d; ++j) dk += (dirac_weight * k[j]) * (kI * rep.c[j]);
      out.push_back(std::move(dk));
      unsigned j = 0;
      while (j < d && k[j] == K) k[j++] = -K;
      if (j == d) break;
      ++k[j];
    }
    return out;
  }

  void validate() const {
    if (flat_torus) return;
    if (D.rows() != dim() || D.cols() != dim()) throw DimensionError("FredholmModule: D has wrong size");
    const double s = std::max(1.0, linalg::op_norm(D));
    if ((D - D.adjoint()).norm() > 1e-12 * s) throw DomainError("FredholmModule: D is not self-adjoint");
    const ComplexMatrix g = grading();
    if ((g * D + D * g).norm() > 1e-12 * s) throw DomainError("FredholmModule: D is not odd");
  }
};

inline FredholmModule make_finite_module(const clifford::SpinorRep& rep, const ComplexMatrix& D,
                                         Eigen::Index multiplicity = 1) {
  FredholmModule m;
  m.rep = rep;
  m.multiplicity = multiplicity;
  m.D = D;
  m.validate();
  return m;
}

// Flat torus R^d / (2 pi Z)^d with Dirac operator D/sqrt(2) and Clifford map
// 2^{-deg/2} c, so that the squared Dirac operator is (1/2) nabla^dagger nabla.
inline FredholmModule make_flat_torus_module(unsigned d, std::optional<int> truncation = std::nullopt) {
  FredholmModule m;
  m.rep = clifford::build_spinor_rep(d);
  m.flat_torus = true;
  m.dirac_weight = 1.0 / std::sqrt(2.0);
  m.clifford_weight = 1.0 / std::sqrt(2.0);
  m.truncation = truncation;
  return m;
}

inline double torus_volume(unsigned d) { return std::pow(2.0 * kPi, static_cast<double>(d)); }

// P(omega) on one sector with the M_t rescaling: sqrt(t) on D, t^{deg/2} on c.
inline ComplexMatrix p_of(const FredholmModule& mod, const ComplexMatrix& Dk, const DGAElement& w, double t = 1.0) {
  const int dp = checked_degree(w.prime, "p_of");
  const int dpp = checked_degree(w.doubleprime, "p_of");
  const ComplexMatrix cp = mod.clifford(w.prime);
  const double sgn = (dp % 2) ? -1.0 : 1.0;
  ComplexMatrix out = std::pow(t, 0.5 * (dp + 1)) * (Dk * cp - sgn * cp * Dk);
  const Form dw = mod.differential(w.prime);
  if (!dw.is_zero()) out -= std::pow(t, 0.5 * (dp + 1)) * mod.clifford(dw);
  if (!w.doubleprime.is_zero()) out += std::pow(t, 0.5 * dpp) * mod.clifford(w.doubleprime);
  return out;
}

inline ComplexMatrix p_of(const FredholmModule& mod, const DGAElement& w, double t = 1.0) {
  return p_of(mod, mod.D, w, t);
}

// P(omega_1, omega_2) = (-1)^{deg omega_1'} (c(omega_1' ^ omega_2') - c(omega_1') c(omega_2')).
inline ComplexMatrix p_of_pair(const FredholmModule& mod, const DGAElement& a, const DGAElement& b, double t = 1.0) {
  const int da = checked_degree(a.prime, "p_of_pair");
  const int db = checked_degree(b.prime, "p_of_pair");
  const double sgn = (da % 2) ? -1.0 : 1.0;
  return sgn * std::pow(t, 0.5 * (da + db)) *
         (mod.clifford(wedge(a.prime, b.prime)) - mod.clifford(a.prime) * mod.clifford(b.prime));
}

// Block of consecutive chain entries [first, last] (1-based indices into omega_1..omega_n).
inline std::optional<ComplexMatrix> p_of_block(const FredholmModule& mod, const ComplexMatrix& Dk, const Chain& chain,
                                               std::size_t first, std::size_t last, double t = 1.0) {
  if (last == first) return p_of(mod, Dk, chain.at(first), t);
  if (last == first + 1) return p_of_pair(mod, chain.at(first), chain.at(last), t);
  return std::nullopt;
}

// Ch(M_t)(omega_0, ..., omega_n) =
//   Str( c_t(omega_0') sum_m (-1)^m sum_I Phi^{t D^2}_1(P_t(omega_{I_1}), ..., P_t(omega_{I_m})) ).
inline cplx chern_eval(const FredholmModule& mod, const Chain& chain, double t) {
  if (!(t > 0.0)) throw DomainError("chern_eval: t must be positive");
  if (chain.empty()) throw DimensionError("chern_eval: empty chain");
  const std::size_t n = chain.size() - 1;
  const int d0 = checked_degree(chain[0].prime, "chern_eval");
  const ComplexMatrix c0 = std::pow(t, 0.5 * d0) * mod.clifford(chain[0].prime);
  const ComplexMatrix grading = mod.grading();

  std::vector<std::vector<OrderedPartition>> parts(n + 1);
  for (std::size_t m = 1; m <= n; ++m) parts[m] = ordered_partitions(m, n);

  std::vector<cplx> per_sector;
  for (const ComplexMatrix& Dk : mod.sectors(t)) {
    const HermitianOperator h(ComplexMatrix(t * Dk * Dk));
    ComplexMatrix acc = ComplexMatrix::Zero(mod.dim(), mod.dim());
    if (n == 0) {
      acc = linalg::herm_exp(h, 1.0);
    } else {
      for (std::size_t m = 1; m <= n; ++m) {
        const double sign = (m % 2) ? -1.0 : 1.0;
        for (const auto& part : parts[m]) {
          std::vector<ComplexMatrix> ps;
          bool vanishes = false;
          for (const auto& [a, b] : part.blocks) {
            auto p = p_of_block(mod, Dk, chain, a, b, t);
            if (!p || p->norm() == 0.0) {
              vanishes = true;
              break;
            }
            ps.push_back(std::move(*p));
          }
          if (vanishes) continue;
          acc += sign * phi_fermionic(OperatorFamily(h, std::move(ps)), 1.0).value;
        }
      }
    }
    per_sector.push_back((grading * c0 * acc).trace());
  }
  return pairwise_sum(per_sector);
}

struct McKeanSinger {
  std::vector<double> t_grid;
  std::vector<cplx> values;
  double spread = 0.0;
  long kernel_signature = 0;
  double signature_residual = 0.0;
};

// Str(e^{-t D^2}) over the grid and the graded dimension of ker D.
inline McKeanSinger mckean_singer(const ComplexMatrix& grading, const ComplexMatrix& D, const std::vector<double>& t_grid) {
  McKeanSinger out;
  out.t_grid = t_grid;
  const HermitianOperator dsq(ComplexMatrix(D * D));
  double lo = 1e300, hi = -1e300;
  for (double t : t_grid) {
    if (!(t > 0.0)) throw DomainError("mckean_singer: grid must be positive");
    const cplx v = (grading * linalg::herm_exp(dsq, t)).trace();
    out.values.push_back(v);
    lo = std::min(lo, v.real());
    hi = std::max(hi, v.real());
    out.spread = std::max(out.spread, std::abs(v.imag()));
  }
  if (!t_grid.empty()) out.spread = std::max(out.spread, hi - lo);
  const HermitianOperator dh(D);
  const double tol = 1e-8 * std::max(1.0, dh.norm());
  cplx sig = 0.0;
  for (Eigen::Index i = 0; i < dh.eigvals().size(); ++i)
    if (std::abs(dh.eigvals()(i)) < tol) sig += dh.eigvecs().col(i).dot(grading * dh.eigvecs().col(i));
  out.kernel_signature = std::lround(sig.real());
  out.signature_residual = std::abs(sig - static_cast<double>(out.kernel_signature));
  return out;
}

inline McKeanSinger mckean_singer(const FredholmModule& mod, const std::vector<double>& t_grid) {
  if (!mod.flat_torus) return mckean_singer(mod.grading(), mod.D, t_grid);
  McKeanSinger out;
  out.t_grid = t_grid;
  for (double t : t_grid) {
    std::vector<cplx> parts;
    for (const auto& Dk : mod.sectors(t))
      parts.push_back((mod.grading() * linalg::herm_exp(HermitianOperator(ComplexMatrix(Dk * Dk)), t)).trace());
    out.values.push_back(pairwise_sum(parts));
  }
  double lo = 1e300, hi = -1e300;
  for (const auto& v : out.values) {
    lo = std::min(lo, v.real());
    hi = std::max(hi, v.real());
  }
  out.spread = out.values.empty() ? 0.0 : hi - lo;
  return out;
}

// ((-1)^n 2^{2n} / (n! (2 pi i)^{d/2})) * volume * top(omega_0' ^ omega_1'' ^ ... ^ omega_n'').
inline cplx localization_target(const Chain& chain, unsigned d, double volume) {
  if (chain.empty()) throw DimensionError("localization_target: empty chain");
  const std::size_t n = chain.size() - 1;
  Form w = chain[0].prime;
  for (std::size_t j = 1; j <= n; ++j) w = wedge(w, chain[j].doubleprime);
  const double coef = ((n % 2) ? -1.0 : 1.0) * std::ldexp(1.0, static_cast<int>(2 * n)) /
                      std::tgamma(static_cast<double>(n) + 1.0);
  return coef * volume * grassmann::berezin(w) / std::pow(2.0 * kPi * kI, static_cast<double>(d) / 2.0);
}

struct Extrapolation {
  std::vector<double> t;
  std::vector<cplx> values;
  cplx extrapolated;
  cplx target;
  double power = 1.0;
};

// Two-point Richardson on the last two entries: v(t) ~ v0 + a t^p.
inline cplx richardson(double t1, cplx v1, double t2, cplx v2, double p) {
  const double r = std::pow(t1 / t2, p);
  return (r * v2 - v1) / (r - 1.0);
}

inline Extrapolation small_time_limit(const FredholmModule& mod, const Chain& chain, const std::vector<double>& t_sequence,
                                      double power = 1.0) {
  if (!mod.flat_torus || mod.d_operator) throw DomainError("small_time_limit: requires the flat constant-form model");
  if (t_sequence.size() < 2) throw DomainError("small_time_limit: need at least two times");
  Extrapolation ex;
  ex.power = power;
  ex.t = t_sequence;
  for (double t : t_sequence) ex.values.push_back(chern_eval(mod, chain, t));
  const std::size_t k = t_sequence.size();
  ex.extrapolated = richardson(t_sequence[k - 2], ex.values[k - 2], t_sequence[k - 1], ex.values[k - 1], power);
  ex.target = localization_target(chain, mod.rep.d, torus_volume(mod.rep.d));
  return ex;
}

inline std::vector<double> geometric_sequence(double t0, std::size_t count) {
  std::vector<double> ts;
  for (std::size_t k = 0; k < count; ++k) ts.push_back(t0 * std::ldexp(1.0, -static_cast<int>(k)));
  return ts;
}

}  // namespace dyson::jlo
