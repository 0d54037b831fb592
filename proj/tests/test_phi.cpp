#include "dyson/phi.hpp"
#include "dyson/testing/oracles.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace dyson;
using namespace dyson::testutil;

namespace {

OperatorFamily scalar_family(double lambda, const std::vector<double>& p) {
  std::vector<ComplexMatrix> ps;
  for (double x : p) ps.push_back(ComplexMatrix::Constant(1, 1, x));
  return OperatorFamily(HermitianOperator(ComplexMatrix::Constant(1, 1, lambda)), ps);
}

double scalar_closed_form(double lambda, const std::vector<double>& p, double t) {
  double prod = 1.0;
  for (double x : p) prod *= x;
  const double n = static_cast<double>(p.size());
  return prod * std::pow(t, n) * std::exp(-lambda * t) / std::tgamma(n + 1.0);
}

OperatorFamily random_family(Stream& rng, Eigen::Index dim, std::size_t n, bool hermitian_p = false) {
  std::vector<ComplexMatrix> ps;
  for (std::size_t j = 0; j < n; ++j) ps.push_back(hermitian_p ? random_hermitian(rng, dim) : random_matrix(rng, dim));
  return OperatorFamily(HermitianOperator::nonnegative(random_psd(rng, dim, 4.0)), ps);
}

}  // namespace

TEST(Lift, SingleSlot) {
  Stream rng(1, 0);
  const OperatorFamily fam = random_family(rng, 3, 1);
  const FermionicLift lift = build_lift(fam);
  const ComplexMatrix expected = linalg::kron(ComplexMatrix::Identity(2, 2), fam.H.matrix()) +
                                 linalg::kron(grassmann::theta_hat_matrix(1, 1), fam.perturbations[0]);
  EXPECT_EQ(lift.generator, expected);
}

TEST(Lift, HandAssembledTwoSlots) {
  const OperatorFamily fam = scalar_family(0.0, {1.0, 1.0});
  const FermionicLift lift = build_lift(fam);
  ComplexMatrix g = ComplexMatrix::Zero(8, 8);
  // slot 1 rows 0..3, slot 2 rows 4..7; masks 0,1,2,3.
  // (1,2): theta_2 sends mask 0 -> 2 (+), mask 1 -> 3 (-).
  g(2, 4 + 0) = 1.0;
  g(3, 4 + 1) = -1.0;
  // (2,1): theta_1 sends mask 0 -> 1 (+), mask 2 -> 3 (+).
  g(4 + 1, 0) = 1.0;
  g(4 + 3, 2) = 1.0;
  EXPECT_EQ(lift.generator, g);
  const ComplexMatrix g2 = g * g;
  EXPECT_EQ(g2(4 + 3, 4 + 0), cplx(1.0));
  EXPECT_EQ((g2 * g).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_NEAR(phi_fermionic(fam, 0.8).value(0, 0).real(), 0.32, 1e-15);
}

TEST(Lift, OneBlockPerSlotRowAndColumn) {
  Stream rng(2, 0);
  for (std::size_t n = 1; n <= 4; ++n) {
    const OperatorFamily fam = random_family(rng, 2, n);
    const FermionicLift lift = build_lift(fam);
    const ComplexMatrix hpart = linalg::kron(ComplexMatrix::Identity(n << n, n << n), fam.H.matrix());
    FermionicLift p = lift;
    p.generator -= hpart;
    for (std::size_t q = 1; q <= n; ++q) {
      int row_nz = 0, col_nz = 0;
      for (std::size_t r = 1; r <= n; ++r) {
        row_nz += p.slot_block(q, r).norm() > 0;
        col_nz += p.slot_block(r, q).norm() > 0;
      }
      EXPECT_EQ(row_nz, 1);
      EXPECT_EQ(col_nz, 1);
    }
    ComplexMatrix pw = ComplexMatrix::Identity(p.dim(), p.dim());
    for (std::size_t k = 0; k <= n; ++k) pw = pw * p.generator;
    EXPECT_EQ(pw.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Lift, BudgetEnforced) {
  Stream rng(3, 0);
  EXPECT_THROW(build_lift(random_family(rng, 40, 5)), DimensionError);
}

TEST(Phi, EmptyFamilyIsSemigroup) {
  Stream rng(4, 0);
  const OperatorFamily fam = random_family(rng, 4, 0);
  EXPECT_LT((phi_fermionic(fam, 0.7).value - linalg::herm_exp(fam.H, 0.7)).norm(), 1e-15);
}

TEST(Phi, ScalarClosedForm) {
  const std::vector<double> p{0.7, -1.3, 2.0};
  for (std::size_t n = 1; n <= 3; ++n) {
    std::vector<double> pn(p.begin(), p.begin() + n);
    const OperatorFamily fam = scalar_family(1.7, pn);
    for (double t : {0.1, 0.5, 1.0}) {
      const double ref = scalar_closed_form(1.7, pn, t);
      EXPECT_NEAR(phi_fermionic(fam, t).value(0, 0).real(), ref, 1e-10);
      EXPECT_NEAR(phi_quadrature(fam, t, 16).value(0, 0).real(), ref, 1e-10);
      EXPECT_NEAR(phi_ode(fam, t, 4096).value(0, 0).real(), ref, 1e-7);
    }
  }
}

TEST(Phi, TwoByTwoAnalytic) {
  const double lambda = 2.3, t = 0.6;
  ComplexMatrix h = ComplexMatrix::Zero(2, 2);
  h(1, 1) = lambda;
  ComplexMatrix p(2, 2);
  p << 0, 1, 1, 0;
  const OperatorFamily fam(HermitianOperator(h), {p});
  const ComplexMatrix ref = ((1.0 - std::exp(-lambda * t)) / lambda) * p;
  EXPECT_LT((phi_fermionic(fam, t).value - ref).norm(), 1e-12);
  EXPECT_LT((phi_quadrature(fam, t, 16).value - ref).norm(), 1e-12);
}

TEST(Phi, ConstantIntegrandKeepsProductOrder) {
  Stream rng(5, 0);
  std::vector<ComplexMatrix> ps{random_matrix(rng, 3), random_matrix(rng, 3), random_matrix(rng, 3)};
  const OperatorFamily fam(HermitianOperator(ComplexMatrix::Zero(3, 3)), ps);
  const double t = 0.9;
  const ComplexMatrix ref = ps[0] * ps[1] * ps[2] * (t * t * t / 6.0);
  EXPECT_LT(rel_diff(phi_fermionic(fam, t).value, ref), 1e-12);
  EXPECT_LT(rel_diff(phi_quadrature(fam, t, 8).value, ref), 1e-12);
  EXPECT_LT(rel_diff(phi_ode(fam, t, 4096).value, ref), 1e-7);
}

TEST(Phi, CrossMethodAgreement) {
  Stream rng(6, 0);
  for (int rep = 0; rep < 6; ++rep) {
    const std::size_t n = 1 + rep % 3;
    const OperatorFamily fam = random_family(rng, 6, n);
    for (double t : {0.3, 1.0}) {
      const ComplexMatrix f = phi_fermionic(fam, t).value;
      EXPECT_LT(rel_diff(phi_quadrature(fam, t, 32).value, f), 1e-8);
      EXPECT_LT(rel_diff(phi_ode(fam, t, 4096).value, f), 1e-6);
      EXPECT_LT(rel_diff(phi_block_triangular(fam, t), f), 1e-10);
    }
  }
}

TEST(Phi, OdeIsSecondOrder) {
  Stream rng(13, 0);
  const OperatorFamily fam = random_family(rng, 4, 2);
  const ComplexMatrix ref = phi_fermionic(fam, 1.0).value;
  const double e1 = (phi_ode(fam, 1.0, 32).value - ref).norm();
  const double e2 = (phi_ode(fam, 1.0, 64).value - ref).norm();
  EXPECT_NEAR(e1 / e2, 4.0, 0.2);
}

TEST(Phi, ZeroTimeAndArgumentChecks) {
  Stream rng(7, 0);
  const OperatorFamily fam = random_family(rng, 3, 2);
  EXPECT_EQ(phi_fermionic(fam, 0.0).value.norm(), 0.0);
  EXPECT_EQ(phi_evaluate(fam, 0.0, PhiMethod::ode).value.norm(), 0.0);
  EXPECT_THROW(phi_quadrature(fam, 0.0, 8), DomainError);
  EXPECT_THROW(phi_quadrature(fam, 1.0, 3), DomainError);
  EXPECT_THROW(phi_ode(fam, 1.0, 8), DomainError);
  EXPECT_THROW(phi_fermionic(fam, -1.0), DomainError);
}

TEST(Phi, AdjointReversal) {
  Stream rng(8, 0);
  for (std::size_t n = 1; n <= 3; ++n) {
    const OperatorFamily fam = random_family(rng, 4, n, true);
    OperatorFamily rev = fam;
    std::reverse(rev.perturbations.begin(), rev.perturbations.end());
    const ComplexMatrix a = phi_fermionic(fam, 0.8).value, b = phi_fermionic(rev, 0.8).value;
    EXPECT_LT(rel_diff(ComplexMatrix(a.adjoint()), b), 1e-10);
  }
}

TEST(Gauss, IntegratesPolynomialsExactly) {
  for (std::size_t m : {1, 2, 5, 16, 32}) {
    const GaussRule g = gauss_legendre(m);
    for (std::size_t deg = 0; deg < 2 * m; ++deg) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += g.weights[i] * std::pow(g.nodes[i], static_cast<double>(deg));
      const double ref = deg % 2 ? 0.0 : 2.0 / (deg + 1.0);
      EXPECT_NEAR(s, ref, 1e-13) << m << " " << deg;
    }
    EXPECT_TRUE(std::is_sorted(g.nodes.begin(), g.nodes.end()));
  }
}

TEST(Simplex, ClosedForm) {
  EXPECT_NEAR(simplex_constant({0.5}), 2.0, 1e-14);
  EXPECT_NEAR(simplex_constant({1e-12, 1e-12, 1e-12}), 1.0 / 6.0, 1e-10);
  EXPECT_THROW(simplex_constant({1.0}), DomainError);
  const auto mc = oracle::simplex_mc({0.5, 0.5}, 1000000, 17);
  EXPECT_LT(std::abs(mc.mean - simplex_constant({0.5, 0.5})), 3.0 * mc.stderr_);
}

TEST(NormBound, Cases) {
  Stream rng(9, 0);
  const OperatorFamily zero(HermitianOperator::nonnegative(random_psd(rng, 4)),
                            {ComplexMatrix::Zero(4, 4), ComplexMatrix::Zero(4, 4)});
  auto z = norm_bound_check(zero, 1.0);
  EXPECT_EQ(z.lhs, 0.0);
  EXPECT_TRUE(z.holds);
  const OperatorFamily fam = random_family(rng, 6, 2);
  EXPECT_TRUE(norm_bound_check(fam, 0.0).holds);
  for (double t : {0.01, 0.1, 1.0}) EXPECT_TRUE(norm_bound_check(fam, t).holds) << t;
}

TEST(Dyson, PartialSums) {
  Stream rng(10, 0);
  const HermitianOperator h = HermitianOperator::nonnegative(random_psd(rng, 4));
  auto zero = dyson_partial_sum(h, ComplexMatrix::Zero(4, 4), 0.5, 3);
  EXPECT_LT((zero.approx - zero.exact).norm(), 1e-14);

  const HermitianOperator h0(ComplexMatrix::Zero(1, 1));
  const double p = 0.8, t = 0.7;
  double partial = 0.0, term = 1.0;
  for (std::size_t l = 0; l <= 5; ++l) {
    partial += term;
    term *= -t * p / static_cast<double>(l + 1);
  }
  auto sc = dyson_partial_sum(h0, ComplexMatrix::Constant(1, 1, p), t, 5);
  EXPECT_NEAR(sc.approx(0, 0).real(), partial, 1e-13);

  const ComplexMatrix pm = random_matrix(rng, 4, 0.5);
  double prev = 1e300;
  for (std::size_t L = 0; L <= 8; ++L) {
    auto r = dyson_partial_sum(h, pm, 0.5, L);
    EXPECT_TRUE(r.holds) << L;
    if (r.error > 1e-14) {
      EXPECT_LT(r.error, prev) << L;
    }
    prev = r.error;
  }
}

TEST(Nilpotency, LiftedRepeatedIntegralVanishes) {
  Stream rng(11, 0);
  auto one = nilpotency_check(random_family(rng, 3, 1), 0.7, 2);
  EXPECT_LE(one.norm, 1e-10 * one.scale);
  const OperatorFamily fam = random_family(rng, 3, 2);
  auto three = nilpotency_check(fam, 0.7, 3);
  EXPECT_LE(three.norm, 1e-10 * three.scale);
  auto two = nilpotency_check(fam, 0.7, 2);
  EXPECT_GT(two.norm, 1e-3 * two.scale);
}

TEST(Derivative, CentralDifferenceIsSecondOrder) {
  Stream rng(12, 0);
  const OperatorFamily fam = random_family(rng, 6, 2);
  const double r1 = derivative_check(fam, 0.7, 0.02), r2 = derivative_check(fam, 0.7, 0.01);
  EXPECT_NEAR(r1 / r2, 4.0, 0.5);
  const OperatorFamily none(fam.H, {});
  EXPECT_LT(derivative_check(none, 0.7, 0.01), 1e-3);
  const OperatorFamily sc = scalar_family(1.2, {0.9});
  EXPECT_LT(derivative_check(sc, 0.5, 1e-3), 1e-6);
}
