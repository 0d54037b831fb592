#include "dyson/clifford.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace dyson;
using namespace dyson::clifford;
using testutil::rel_diff;

namespace {

RealMatrix random_antisym(Stream& rng, unsigned d) {
  RealMatrix a(d, d);
  for (unsigned i = 0; i < d; ++i)
    for (unsigned j = 0; j < d; ++j) a(i, j) = rng.normal();
  return a - a.transpose();
}

RealMatrix elementary(unsigned d, unsigned i, unsigned j) {
  RealMatrix a = RealMatrix::Zero(d, d);
  a(i - 1, j - 1) = 1.0;
  a(j - 1, i - 1) = -1.0;
  return a;
}

Form random_form_of_parity(Stream& rng, unsigned d, int parity) {
  Form f(d);
  for (grassmann::Mask s = 0; s < (1u << d); ++s)
    if (std::popcount(s) % 2 == parity) f.add(s, rng.complex_normal());
  return f;
}

// log(x / sinh x) = -sum_k c_k x^{2k}, c_k = 2^{2k} B_{2k} / (2k (2k)!).
Form a_hat_log_oracle(const FormMatrix& omega, unsigned d) {
  const std::size_t n = omega.size();
  FormMatrix half = omega;
  for (auto& row : half)
    for (auto& e : row) e *= 0.5;
  auto mul = [&](const FormMatrix& a, const FormMatrix& b) {
    FormMatrix out(n, std::vector<Form>(n, Form(d)));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k) out[i][j] += wedge(a[i][k], b[k][j]);
    return out;
  };
  const FormMatrix x2 = mul(half, half);
  FormMatrix pw = x2;
  Form expo(d);
  double fact = 2.0;
  for (unsigned k = 1; 4 * k <= d; ++k) {
    if (k > 1) {
      pw = mul(pw, x2);
      fact *= static_cast<double>((2 * k - 1) * (2 * k));
    }
    const double ck = std::ldexp(1.0, static_cast<int>(2 * k)) * kBernoulliEven[k] / (2.0 * k * fact);
    Form tr(d);
    for (std::size_t i = 0; i < n; ++i) tr += pw[i][i];
    expo += (-0.5 * ck) * tr;
  }
  return form_exp(expo);
}

}  // namespace

TEST(Spinor, Relations) {
  for (unsigned d : {2u, 4u, 6u, 8u}) {
    const SpinorRep rep = build_spinor_rep(d);
    const ComplexMatrix id = ComplexMatrix::Identity(rep.dim(), rep.dim());
    for (unsigned i = 1; i <= d; ++i) {
      EXPECT_EQ(std::abs(rep.gen(i).trace()), 0.0);
      for (unsigned j = 1; j <= d; ++j) {
        const ComplexMatrix ac = rep.gen(i) * rep.gen(j) + rep.gen(j) * rep.gen(i);
        const ComplexMatrix ref = (i == j ? -2.0 : 0.0) * id;
        EXPECT_EQ((ac - ref).cwiseAbs().maxCoeff(), 0.0);
      }
      EXPECT_EQ((rep.chirality * rep.gen(i) + rep.gen(i) * rep.chirality).cwiseAbs().maxCoeff(), 0.0);
      EXPECT_LT((rep.gen(i) * rep.gen(i).adjoint() - id).norm(), 1e-15);
    }
    EXPECT_EQ((rep.chirality * rep.chirality - id).cwiseAbs().maxCoeff(), 0.0);
  }
  EXPECT_THROW(build_spinor_rep(3), DimensionError);
  EXPECT_THROW(build_spinor_rep(12), DimensionError);
}

TEST(Spinor, QuantizeAndSupertrace) {
  const SpinorRep rep = build_spinor_rep(2);
  EXPECT_EQ(clifford_quantize(rep, Form::scalar(2, 1.0)), ComplexMatrix(ComplexMatrix::Identity(2, 2)));
  const Form e12 = Form::monomial(2, 0b11);
  EXPECT_EQ(clifford_quantize(rep, e12), ComplexMatrix(rep.gen(1) * rep.gen(2)));
  const Form e21 = wedge(Form::generator(2, 2), Form::generator(2, 1));
  EXPECT_EQ(clifford_quantize(rep, e21), ComplexMatrix(-rep.gen(1) * rep.gen(2)));
  EXPECT_EQ(supertrace(rep, ComplexMatrix::Identity(2, 2)), cplx(0.0));
  EXPECT_EQ(supertrace(rep, rep.gen(1)), cplx(0.0));
  EXPECT_LT(std::abs(supertrace(rep, rep.gen(1) * rep.gen(2)) - cplx(0.0, -2.0)), 1e-15);
  EXPECT_THROW(supertrace(rep, ComplexMatrix::Identity(4, 4)), DimensionError);
}

TEST(Spinor, GradedCyclicity) {
  Stream rng(21, 0);
  for (unsigned d : {2u, 4u, 6u}) {
    const SpinorRep rep = build_spinor_rep(d);
    for (int pm = 0; pm < 2; ++pm)
      for (int pn = 0; pn < 2; ++pn) {
        const ComplexMatrix m = clifford_quantize(rep, random_form_of_parity(rng, d, pm));
        const ComplexMatrix n = clifford_quantize(rep, random_form_of_parity(rng, d, pn));
        const double sg = (pm == 1 && pn == 1) ? -1.0 : 1.0;
        const cplx lhs = supertrace(rep, m * n), rhs = sg * supertrace(rep, n * m);
        EXPECT_LT(std::abs(lhs - rhs), 1e-10 * std::max(1.0, std::abs(lhs)));
        if (pm != pn) {
          EXPECT_LT(std::abs(lhs), 1e-10);
        }
      }
  }
}

TEST(SpinMap, ElementaryAndLinear) {
  const SpinorRep rep = build_spinor_rep(4);
  EXPECT_EQ(T_of(rep, RealMatrix::Zero(4, 4)).norm(), 0.0);
  EXPECT_TRUE(alpha_of(RealMatrix::Zero(4, 4)).is_zero());
  const RealMatrix a12 = elementary(4, 1, 2);
  EXPECT_LT((T_of(rep, a12) - 0.5 * rep.gen(1) * rep.gen(2)).norm(), 1e-15);
  EXPECT_EQ(alpha_of(a12).coeff(0b11), cplx(1.0));
  Stream rng(22, 0);
  const RealMatrix a = random_antisym(rng, 4), b = random_antisym(rng, 4);
  EXPECT_LT((T_of(rep, a + b) - T_of(rep, a) - T_of(rep, b)).norm(), 1e-13);
  RealMatrix bad = RealMatrix::Zero(4, 4);
  bad(0, 1) = 1.0;
  EXPECT_THROW(T_of(rep, bad), DomainError);
}

// With c_i^2 = -1 the spin map intertwines the transposed action:
// [T(A), c(v)] = c(A^T v), hence [T(A), T(B)] = T([B, A]).
TEST(SpinMap, LieBracket) {
  Stream rng(23, 0);
  for (unsigned d : {2u, 4u, 6u}) {
    const SpinorRep rep = build_spinor_rep(d);
    for (int rep_i = 0; rep_i < 5; ++rep_i) {
      const RealMatrix a = random_antisym(rng, d), b = random_antisym(rng, d);
      const ComplexMatrix ta = T_of(rep, a), tb = T_of(rep, b);
      const ComplexMatrix lhs = ta * tb - tb * ta;
      EXPECT_LT((lhs - T_of(rep, b * a - a * b)).norm(), 1e-10);
      Eigen::VectorXd v(d);
      for (unsigned i = 0; i < d; ++i) v(i) = rng.normal();
      auto cvec = [&](const Eigen::VectorXd& w) {
        ComplexMatrix m = ComplexMatrix::Zero(rep.dim(), rep.dim());
        for (unsigned i = 0; i < d; ++i) m += w(i) * rep.c[i];
        return m;
      };
      const ComplexMatrix cv = cvec(v);
      EXPECT_LT((ta * cv - cv * ta - cvec(a.transpose() * v)).norm(), 1e-10);
    }
  }
}

TEST(Patodi, Vanishing) {
  Stream rng(24, 0);
  EXPECT_EQ(patodi_vanishing(build_spinor_rep(4), {}), 0.0);
  EXPECT_LE(patodi_vanishing(build_spinor_rep(4), {random_antisym(rng, 4)}), 1e-12);
  EXPECT_LE(patodi_vanishing(build_spinor_rep(6), {random_antisym(rng, 6), random_antisym(rng, 6)}), 1e-10);
  EXPECT_THROW(patodi_vanishing(build_spinor_rep(2), {random_antisym(rng, 2)}), DimensionError);
}

TEST(Patodi, TopIdentity) {
  const SpinorRep rep2 = build_spinor_rep(2);
  const auto calib = patodi_top_identity(rep2, {elementary(2, 1, 2)});
  EXPECT_LT(std::abs(calib.rhs - cplx(0.0, -1.0)), 1e-15);
  EXPECT_LT(calib.residual, 1e-15);

  Stream rng(25, 0);
  const SpinorRep rep4 = build_spinor_rep(4);
  const auto z = patodi_top_identity(rep4, {random_antisym(rng, 4), RealMatrix::Zero(4, 4)});
  EXPECT_EQ(std::abs(z.rhs), 0.0);
  EXPECT_LT(std::abs(z.lhs), 1e-14);
  for (int i = 0; i < 5; ++i) {
    const auto r = patodi_top_identity(rep4, {random_antisym(rng, 4), random_antisym(rng, 4)});
    EXPECT_LT(r.residual, 1e-10);
  }
  EXPECT_THROW(patodi_top_identity(rep4, {random_antisym(rng, 4)}), DimensionError);
}

TEST(AHat, ZeroAndFlatTwoDim) {
  const FormMatrix zero = curvature_matrix(4, {});
  const Form a = a_hat_series(zero, 4);
  EXPECT_EQ(a.coeff(0), cplx(1.0));
  EXPECT_EQ(a.terms().size(), 1u);
  const FormMatrix om2 = curvature_matrix(2, {{1, 2, Form::monomial(2, 0b11, 0.8)}});
  const Form a2 = a_hat_series(om2, 2);
  EXPECT_EQ(a2.coeff(0), cplx(1.0));
  EXPECT_LT((a2 - a_hat_log_oracle(om2, 2)).max_abs(), 1e-14);
  EXPECT_LT(a2.degree_part(2).max_abs(), 1e-15);
}

TEST(AHat, FourDimClosedForm) {
  const double a = 0.7, b = -1.3;
  const Form f = Form::monomial(4, 0b1100, a) + Form::monomial(4, 0b0011, b);
  const FormMatrix om = curvature_matrix(4, {{1, 2, f}});
  const Form ah = a_hat_series(om, 4);
  EXPECT_NEAR(ah.coeff(0b1111).real(), a * b / 12.0, 1e-14);
  EXPECT_LT((ah - a_hat_log_oracle(om, 4)).max_abs(), 1e-14);
}

TEST(AHat, MatchesLogOracleAndDegreesMod4) {
  Stream rng(26, 0);
  for (unsigned d : {4u, 6u, 8u}) {
    std::vector<CurvatureEntry> entries;
    for (unsigned i = 1; i <= d; ++i)
      for (unsigned j = i + 1; j <= d; ++j) {
        Form f(d);
        for (unsigned p = 0; p < d; ++p)
          for (unsigned q = p + 1; q < d; ++q) f.add((1u << p) | (1u << q), rng.normal());
        entries.push_back({i, j, f});
      }
    const FormMatrix om = curvature_matrix(d, entries);
    const Form ah = a_hat_series(om, d);
    const Form ref = a_hat_log_oracle(om, d);
    EXPECT_LT((ah - ref).max_abs(), 1e-9 * std::max(1.0, ref.max_abs())) << d;
    for (const auto& [mask, c] : ah.terms())
      if (std::popcount(mask) % 4) {
        EXPECT_LT(std::abs(c), 1e-9 * std::max(1.0, ref.max_abs()));
      }
  }
}
