// Iterated operator integrals
//   Phi_t(P_1..P_n) = int_{0<=s_1<=...<=s_n<=t} e^{-s_1 H} P_1 e^{-(s_2-s_1)H} P_2 ... P_n e^{-(t-s_n)H}
// evaluated by nested quadrature, by the Grassmann-lifted semigroup, and by
// the suffix ODE system; plus bound and structure checks.
#pragma once

#include "dyson/grassmann.hpp"
#include "dyson/linalg.hpp"
#include "dyson/reduce.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace dyson {

inline constexpr std::size_t kLiftBudget = 4096;

struct OperatorFamily {
  HermitianOperator H;
  std::vector<ComplexMatrix> perturbations;
  std::vector<double> exponents;

  OperatorFamily() = default;
  OperatorFamily(HermitianOperator h, std::vector<ComplexMatrix> p, std::vector<double> a = {})
      : H(std::move(h)), perturbations(std::move(p)), exponents(std::move(a)) {
    if (!H.is_nonnegative()) throw DomainError("OperatorFamily: H must be nonnegative");
    for (const auto& m : perturbations)
      if (m.rows() != H.dim() || m.cols() != H.dim()) throw DimensionError("OperatorFamily: perturbation shape");
    if (exponents.empty()) exponents.assign(perturbations.size(), 0.5);
    if (exponents.size() != perturbations.size()) throw DimensionError("OperatorFamily: exponent count");
    for (double a : exponents)
      if (!(a > 0.0 && a < 1.0)) throw DomainError("OperatorFamily: exponents must lie in (0,1)");
  }

  std::size_t order() const { return perturbations.size(); }
  Eigen::Index dim() const { return H.dim(); }

  // Family with perturbations [first, last).
  OperatorFamily slice(std::size_t first, std::size_t last) const {
    OperatorFamily f;
    f.H = H;
    f.perturbations.assign(perturbations.begin() + first, perturbations.begin() + last);
    f.exponents.assign(exponents.begin() + first, exponents.begin() + last);
    return f;
  }
};

enum class PhiMethod { quadrature, fermionic, ode };

inline const char* to_string(PhiMethod m) {
  switch (m) {
    case PhiMethod::quadrature: return "quadrature";
    case PhiMethod::fermionic: return "fermionic";
    default: return "ode";
  }
}

struct PhiResult {
  ComplexMatrix value;
  PhiMethod method = PhiMethod::fermionic;
  double t = 0.0;
  std::map<std::string, double> diagnostics;
};

// Generator H^(n) + P^(n) on C^n (slots) x Lambda_n x H, slot outermost:
// row = ((slot-1) * 2^n + mask) * dimH + h.
struct FermionicLift {
  std::size_t n = 0;
  Eigen::Index dimH = 0;
  ComplexMatrix generator;

  Eigen::Index lambda_dim() const { return Eigen::Index{1} << n; }
  Eigen::Index dim() const { return static_cast<Eigen::Index>(n) * lambda_dim() * dimH; }
  Eigen::Index index(std::size_t slot, grassmann::Mask mask, Eigen::Index h) const {
    return ((static_cast<Eigen::Index>(slot) - 1) * lambda_dim() + mask) * dimH + h;
  }
  // Slot block (q, r), 1-based, of size 2^n dimH.
  ComplexMatrix slot_block(std::size_t q, std::size_t r) const {
    const Eigen::Index b = lambda_dim() * dimH;
    return generator.block((q - 1) * b, (r - 1) * b, b, b);
  }
};

inline std::size_t lift_dimension(std::size_t n, Eigen::Index dimH) {
  return n * (std::size_t{1} << n) * static_cast<std::size_t>(dimH);
}

// Slot blocks: (1, n) carries theta_n (x) P_n and (q, q-1) carries
// theta_{n-q+1} (x) P_{n-q+1}; for n = 1 the single block is theta_1 (x) P_1.
inline FermionicLift build_lift(const OperatorFamily& fam) {
  const std::size_t n = fam.order();
  if (n == 0) throw DimensionError("build_lift: empty family");
  if (n > 12 || lift_dimension(n, fam.dim()) > kLiftBudget)
    throw DimensionError("build_lift: lifted dimension exceeds budget of 4096");
  FermionicLift lift;
  lift.n = n;
  lift.dimH = fam.dim();
  const Eigen::Index b = lift.lambda_dim() * lift.dimH;
  lift.generator = ComplexMatrix::Zero(lift.dim(), lift.dim());
  for (std::size_t q = 0; q < n; ++q) lift.generator.block(q * b, q * b, b, b) =
      linalg::kron(ComplexMatrix::Identity(lift.lambda_dim(), lift.lambda_dim()), fam.H.matrix());
  auto place = [&](std::size_t q, std::size_t r, std::size_t j) {
    lift.generator.block((q - 1) * b, (r - 1) * b, b, b) +=
        linalg::kron(grassmann::theta_hat_matrix(static_cast<unsigned>(j), static_cast<unsigned>(n)),
                     fam.perturbations[j - 1]);
  };
  place(1, n, n);
  for (std::size_t q = 2; q <= n; ++q) place(q, q - 1, n - q + 1);
  return lift;
}

inline PhiResult phi_fermionic(const OperatorFamily& fam, double t) {
  if (!(t >= 0.0)) throw DomainError("phi_fermionic: t must be nonnegative");
  PhiResult res;
  res.method = PhiMethod::fermionic;
  res.t = t;
  const std::size_t n = fam.order();
  if (n == 0) {
    res.value = linalg::herm_exp(fam.H, t);
    return res;
  }
  const FermionicLift lift = build_lift(fam);
  const ComplexMatrix e = linalg::expm(ComplexMatrix(-t * lift.generator));
  const grassmann::Mask full = static_cast<grassmann::Mask>(lift.lambda_dim() - 1);
  res.value = e.block(lift.index(n, full, 0), lift.index(n, 0, 0), lift.dimH, lift.dimH);
  if (n % 2) res.value = -res.value;
  res.diagnostics["lift_dimension"] = static_cast<double>(lift.dim());
  return res;
}

struct GaussRule {
  std::vector<double> nodes;    // on [-1, 1], ascending
  std::vector<double> weights;
};

// Gauss-Legendre rule by Newton iteration on P_m.
inline GaussRule gauss_legendre(std::size_t m) {
  if (m == 0) throw DomainError("gauss_legendre: need at least one node");
  GaussRule g;
  if (m == 1) return GaussRule{{0.0}, {2.0}};
  g.nodes.resize(m);
  g.weights.resize(m);
  for (std::size_t i = 0; i < (m + 1) / 2; ++i) {
    double x = std::cos(kPi * (static_cast<double>(i) + 0.75) / (static_cast<double>(m) + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (std::size_t k = 2; k <= m; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
        p0 = p1;
        p1 = p2;
      }
      dp = static_cast<double>(m) * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    g.nodes[i] = -x;
    g.nodes[m - 1 - i] = x;
    g.weights[i] = g.weights[m - 1 - i] = w;
  }
  if (m % 2 == 1) g.nodes[m / 2] = 0.0;
  return g;
}

namespace detail {

// Works in the eigenbasis of H where e^{-tau H} is diagonal.
struct EigenFrame {
  const HermitianOperator& H;
  std::vector<ComplexMatrix> p;  // U* P_j U
  explicit EigenFrame(const OperatorFamily& fam) : H(fam.H) {
    for (const auto& m : fam.perturbations) p.push_back(H.eigvecs().adjoint() * m * H.eigvecs());
  }
  Eigen::VectorXd decay(double tau) const { return (-tau * H.eigvals().array()).exp().matrix(); }
  ComplexMatrix to_original(const ComplexMatrix& m) const { return H.eigvecs() * m * H.eigvecs().adjoint(); }
};

// F_k(s) = int_0^s F_{k-1}(u) P_k e^{-(s-u)H} du with F_0(s) = e^{-sH}.
inline ComplexMatrix quad_level(const EigenFrame& f, const GaussRule& g, std::size_t k, double s) {
  const Eigen::Index d = f.H.dim();
  if (k == 0) return f.decay(s).cast<cplx>().asDiagonal();
  std::vector<ComplexMatrix> terms;
  terms.reserve(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const double u = 0.5 * s * (1.0 + g.nodes[i]);
    ComplexMatrix m = quad_level(f, g, k - 1, u) * f.p[k - 1];
    const Eigen::VectorXd dec = f.decay(s - u);
    for (Eigen::Index c = 0; c < d; ++c) m.col(c) *= dec(c) * 0.5 * s * g.weights[i];
    terms.push_back(std::move(m));
  }
  return pairwise_sum(terms);
}

}  // namespace detail

inline PhiResult phi_quadrature(const OperatorFamily& fam, double t, std::size_t nodes_per_dim = 32) {
  if (!(t > 0.0)) throw DomainError("phi_quadrature: t must be positive");
  if (fam.order() == 0) throw DimensionError("phi_quadrature: empty family");
  if (nodes_per_dim < 4) throw DomainError("phi_quadrature: need at least 4 nodes per dimension");
  const detail::EigenFrame frame(fam);
  const GaussRule g = gauss_legendre(nodes_per_dim);
  PhiResult res;
  res.method = PhiMethod::quadrature;
  res.t = t;
  res.value = frame.to_original(detail::quad_level(frame, g, fam.order(), t));
  res.diagnostics["nodes_per_dim"] = static_cast<double>(nodes_per_dim);
  res.diagnostics["total_nodes"] = std::pow(static_cast<double>(nodes_per_dim), static_cast<double>(fam.order()));
  return res;
}

// Suffix system Phi^{(k)} = Phi(P_k..P_n), (Phi^{(k)})' = -H Phi^{(k)} + P_k Phi^{(k+1)},
// stepped with exact propagators and a midpoint rule. Level k uses step
// t / (steps 2^{k-1}) so the midpoint values of level k+1 lie on its grid.
inline PhiResult phi_ode(const OperatorFamily& fam, double t, std::size_t steps = 4096) {
  if (!(t > 0.0)) throw DomainError("phi_ode: t must be positive");
  if (steps < 16) throw DomainError("phi_ode: need at least 16 steps");
  const std::size_t n = fam.order();
  if (n == 0) throw DimensionError("phi_ode: empty family");
  if (n > 20 || (steps << (n - 1)) > (std::size_t{1} << 26)) throw DomainError("phi_ode: step underflow");
  const detail::EigenFrame frame(fam);
  const Eigen::Index d = fam.dim();

  auto diag_left = [](const Eigen::VectorXd& v, ComplexMatrix m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m.row(r) *= v(r);
    return m;
  };

  // Values of Phi^{(k+1)} on the grid of level k+1 (2 * steps * 2^{k-1} intervals).
  std::vector<ComplexMatrix> next;
  const std::size_t finest = steps << (n - 1);
  {
    const double hf = t / static_cast<double>(2 * finest);
    next.resize(2 * finest + 1);
    for (std::size_t i = 0; i <= 2 * finest; ++i)
      next[i] = frame.decay(hf * static_cast<double>(i)).cast<cplx>().asDiagonal();
  }
  for (std::size_t k = n; k >= 1; --k) {
    const std::size_t m = steps << (k - 1);
    const double h = t / static_cast<double>(m);
    const Eigen::VectorXd full = frame.decay(h);
    const Eigen::VectorXd half = frame.decay(0.5 * h);
    std::vector<ComplexMatrix> cur(m + 1);
    cur[0] = ComplexMatrix::Zero(d, d);
    for (std::size_t i = 0; i < m; ++i)
      cur[i + 1] = diag_left(full, cur[i]) + h * diag_left(half, frame.p[k - 1] * next[2 * i + 1]);
    next = std::move(cur);
  }
  PhiResult res;
  res.method = PhiMethod::ode;
  res.t = t;
  res.value = frame.to_original(next.back());
  res.diagnostics["steps"] = static_cast<double>(steps);
  res.diagnostics["step_size"] = t / static_cast<double>(steps);
  return res;
}

// Same integral from one exponential of the block upper-bidiagonal matrix
// with H on the diagonal and P_j at block (j-1, j).
inline ComplexMatrix phi_block_triangular(const OperatorFamily& fam, double t) {
  const std::size_t n = fam.order();
  const Eigen::Index d = fam.dim();
  ComplexMatrix m = ComplexMatrix::Zero((n + 1) * d, (n + 1) * d);
  for (std::size_t j = 0; j <= n; ++j) m.block(j * d, j * d, d, d) = fam.H.matrix();
  for (std::size_t j = 1; j <= n; ++j) m.block((j - 1) * d, j * d, d, d) = fam.perturbations[j - 1];
  const ComplexMatrix e = linalg::expm(ComplexMatrix(-t * m));
  ComplexMatrix v = e.block(0, n * d, d, d);
  return (n % 2) ? ComplexMatrix(-v) : v;
}

inline PhiResult phi_evaluate(const OperatorFamily& fam, double t, PhiMethod method, std::size_t nodes = 32,
                              std::size_t steps = 4096) {
  if (fam.order() > 0 && t == 0.0) {
    PhiResult r;
    r.method = method;
    r.value = ComplexMatrix::Zero(fam.dim(), fam.dim());
    return r;
  }
  switch (method) {
    case PhiMethod::quadrature: return phi_quadrature(fam, t, nodes);
    case PhiMethod::ode: return phi_ode(fam, t, steps);
    default: return phi_fermionic(fam, t);
  }
}

// int over the unit simplex of (s_2-s_1)^{-a_1} ... (1-s_n)^{-a_n}.
inline double simplex_constant(const std::vector<double>& a) {
  double lg = 0.0, sum = 0.0;
  for (double x : a) {
    if (!(x >= 0.0 && x < 1.0)) throw DomainError("simplex_constant: exponent out of range");
    lg += std::lgamma(1.0 - x);
    sum += x;
  }
  return std::exp(lg - std::lgamma(static_cast<double>(a.size()) + 1.0 - sum));
}

struct BoundCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = true;
};

inline BoundCheck norm_bound_check(const OperatorFamily& fam, double t) {
  if (!(t >= 0.0)) throw DomainError("norm_bound_check: t must be nonnegative");
  BoundCheck b;
  const std::size_t n = fam.order();
  b.lhs = (n > 0 && t == 0.0) ? 0.0 : linalg::op_norm(phi_fermionic(fam, t).value);
  double c = 1.0, asum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    c *= linalg::op_norm(fam.perturbations[j] * linalg::frac_power_inv(fam.H, fam.exponents[j]));
    asum += fam.exponents[j];
  }
  b.rhs = c * simplex_constant(fam.exponents) * std::exp(static_cast<double>(n) * t) *
          std::pow(t, static_cast<double>(n) - asum);
  b.holds = b.lhs <= b.rhs * (1.0 + 1e-8);
  return b;
}

struct DysonSum {
  ComplexMatrix approx;
  ComplexMatrix exact;
  double error = 0.0;
  double bound = 0.0;
  bool holds = true;
};

// Partial Dyson sum up to order L against expm(-t(H+P)) and the tail bound
// sum_{l>L} c^l Gamma(1-a)^l / Gamma(l+1-la) e^{lt} t^{l(1-a)}, c = |P (H+1)^{-a}|.
inline DysonSum dyson_partial_sum(const HermitianOperator& h, const ComplexMatrix& p, double t, std::size_t L,
                                  double a = 0.5) {
  if (!(t > 0.0)) throw DomainError("dyson_partial_sum: t must be positive");
  const Eigen::Index d = h.dim();
  DysonSum out;
  out.exact = linalg::expm(ComplexMatrix(-t * (h.matrix() + p)));
  out.approx = linalg::herm_exp(h, t);
  if (L > 0) {
    ComplexMatrix m = ComplexMatrix::Zero((L + 1) * d, (L + 1) * d);
    for (std::size_t j = 0; j <= L; ++j) m.block(j * d, j * d, d, d) = h.matrix();
    for (std::size_t j = 1; j <= L; ++j) m.block((j - 1) * d, j * d, d, d) = p;
    // Block (0, l) of exp(-tM) is (-1)^l Phi_t(P,..,P), already carrying the Dyson sign.
    const ComplexMatrix e = linalg::expm(ComplexMatrix(-t * m));
    for (std::size_t l = 1; l <= L; ++l) out.approx += e.block(0, l * d, d, d);
  }
  out.error = linalg::op_norm(out.approx - out.exact);
  const double c = linalg::op_norm(p * linalg::frac_power_inv(h, a));
  double tail = 0.0;
  if (c > 0.0) {
    const double lg1 = std::lgamma(1.0 - a);
    for (std::size_t l = L + 1; l < L + 100000; ++l) {
      const double dl = static_cast<double>(l);
      const double term = std::exp(dl * (std::log(c) + lg1 + t + (1.0 - a) * std::log(t)) -
                                   std::lgamma(dl + 1.0 - dl * a));
      tail += term;
      if (term < 1e-18 * tail || term < 1e-300) break;
    }
  }
  out.bound = tail;
  out.holds = out.error <= out.bound * (1.0 + 1e-8) + 1e-13;
  return out;
}

struct NilpotencyResult {
  double norm = 0.0;
  double scale = 0.0;
};

// Quadrature of Phi^{H^(n)}_t(P^(n), ..., P^(n)) with l copies on the lifted space.
inline NilpotencyResult nilpotency_check(const OperatorFamily& fam, double t, std::size_t l,
                                         std::size_t nodes = 4) {
  const FermionicLift lift = build_lift(fam);
  ComplexMatrix h_lift = linalg::kron(ComplexMatrix::Identity(static_cast<Eigen::Index>(lift.n) * lift.lambda_dim(),
                                                              static_cast<Eigen::Index>(lift.n) * lift.lambda_dim()),
                                      fam.H.matrix());
  ComplexMatrix p_lift = lift.generator - h_lift;
  OperatorFamily lifted(HermitianOperator(h_lift), std::vector<ComplexMatrix>(l, p_lift));
  NilpotencyResult r;
  r.norm = linalg::op_norm(phi_quadrature(lifted, t, nodes).value);
  r.scale = std::pow(t * linalg::op_norm(p_lift), static_cast<double>(l)) / std::tgamma(static_cast<double>(l) + 1.0);
  return r;
}

// |central difference of Phi - (-H Phi_t(P_1..P_n) + P_1 Phi_t(P_2..P_n))|.
inline double derivative_check(const OperatorFamily& fam, double t, double h) {
  if (!(t > h && h > 0.0)) throw DomainError("derivative_check: need t > h > 0");
  const ComplexMatrix fd =
      (phi_fermionic(fam, t + h).value - phi_fermionic(fam, t - h).value) / (2.0 * h);
  ComplexMatrix rhs = -fam.H.matrix() * phi_fermionic(fam, t).value;
  if (fam.order() > 0)
    rhs += fam.perturbations[0] * phi_fermionic(fam.slice(1, fam.order()), t).value;
  return linalg::op_norm(fd - rhs);
}

}  // namespace dyson
