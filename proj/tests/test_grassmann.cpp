#include "dyson/grassmann.hpp"
#include "dyson/rng.hpp"

#include <gtest/gtest.h>

#include <vector>

using namespace dyson;
using namespace dyson::grassmann;

namespace {

// Parity of the permutation sorting the concatenated index lists of S then T.
int inversion_sign(Mask s, Mask t, unsigned n) {
  std::vector<unsigned> seq;
  for (unsigned j = 0; j < n; ++j)
    if (s >> j & 1u) seq.push_back(j);
  for (unsigned j = 0; j < n; ++j)
    if (t >> j & 1u) seq.push_back(j);
  int inv = 0;
  for (std::size_t a = 0; a < seq.size(); ++a)
    for (std::size_t b = a + 1; b < seq.size(); ++b)
      if (seq[a] > seq[b]) ++inv;
  return inv % 2 ? -1 : 1;
}

}  // namespace

TEST(Wedge, BasicSigns) {
  const auto t1 = MultiVector::generator(2, 1), t2 = MultiVector::generator(2, 2);
  EXPECT_EQ(wedge(t1, t2).coeff(0b11), cplx(1.0));
  EXPECT_EQ(wedge(t2, t1).coeff(0b11), cplx(-1.0));
  EXPECT_TRUE(wedge(t1, t1).is_zero());
}

TEST(Wedge, MismatchedGeneratorsThrow) {
  EXPECT_THROW(wedge(MultiVector(2), MultiVector(3)), DimensionError);
}

TEST(Wedge, AssociativeAndGradedCommutative) {
  Stream rng(11, 0);
  const unsigned n = 5;
  auto rnd = [&] {
    MultiVector m(n);
    for (Mask s = 0; s < (1u << n); ++s)
      if (rng.uniform() < 0.4) m.add(s, rng.complex_normal());
    return m;
  };
  for (int rep = 0; rep < 10; ++rep) {
    const auto a = rnd(), b = rnd(), c = rnd();
    const auto lhs = wedge(wedge(a, b), c), rhs = wedge(a, wedge(b, c));
    EXPECT_LT((lhs - rhs).max_abs(), 1e-12);
  }
  for (Mask s = 0; s < 32; ++s)
    for (Mask t = 0; t < 32; ++t) {
      const auto ms = MultiVector::monomial(n, s), mt = MultiVector::monomial(n, t);
      const double sg = ((std::popcount(s) * std::popcount(t)) % 2) ? -1.0 : 1.0;
      EXPECT_LT((wedge(ms, mt) - sg * wedge(mt, ms)).max_abs(), 1e-15);
    }
}

TEST(Wedge, SignMatchesInversionCount) {
  const unsigned n = 6;
  for (Mask s = 0; s < (1u << n); ++s)
    for (Mask t = 0; t < (1u << n); ++t) {
      if (s & t) {
        EXPECT_EQ(wedge_sign(s, t), 0);
        continue;
      }
      EXPECT_EQ(wedge_sign(s, t), inversion_sign(s, t, n));
    }
}

TEST(Berezin, Coefficients) {
  MultiVector a(2);
  a.add(0, 3.0);
  a.add(0b01, 2.0);
  a.add(0b11, 5.0);
  EXPECT_EQ(berezin(a), cplx(5.0));
  MultiVector b(2);
  b.add(0, 3.0);
  b.add(0b01, 2.0);
  EXPECT_EQ(berezin(b), cplx(0.0));
  EXPECT_EQ(berezin(a + b), berezin(a) + berezin(b));
}

TEST(Berezin, ShuffleParityOnPartitions) {
  const unsigned n = 5;
  const Mask full = 31;
  for (Mask s = 0; s <= full; ++s)
    for (Mask t = 0; t <= full; ++t) {
      const cplx v = berezin(wedge(MultiVector::monomial(n, s), MultiVector::monomial(n, t)));
      if ((s | t) == full && !(s & t))
        EXPECT_EQ(v, cplx(inversion_sign(s, t, n)));
      else
        EXPECT_EQ(v, cplx(0.0));
    }
}

TEST(ThetaHat, SmallCase) {
  ComplexMatrix expected(2, 2);
  expected << 0, 0, 1, 0;
  EXPECT_EQ(theta_hat_matrix(1, 1), expected);
  EXPECT_THROW(theta_hat_matrix(0, 2), DimensionError);
  EXPECT_THROW(theta_hat_matrix(3, 2), DimensionError);
}

TEST(ThetaHat, ExactAnticommutation) {
  const unsigned n = 4;
  for (unsigned j = 1; j <= n; ++j)
    for (unsigned k = 1; k <= n; ++k) {
      const ComplexMatrix a = theta_hat_matrix(j, n), b = theta_hat_matrix(k, n);
      const ComplexMatrix r = a * b + b * a;
      EXPECT_EQ(r.cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(ThetaHat, AgreesWithWedgeAction) {
  const unsigned n = 4;
  for (unsigned j = 1; j <= n; ++j) {
    const ComplexMatrix m = theta_hat_matrix(j, n);
    for (Mask s = 0; s < 16; ++s) {
      const auto img = wedge(MultiVector::generator(n, j), MultiVector::monomial(n, s));
      for (Mask r = 0; r < 16; ++r) EXPECT_EQ(m(r, s), img.coeff(r));
    }
  }
}

TEST(ThetaHat, MonomialMatricesIndependent) {
  const unsigned n = 3;
  const Eigen::Index dim = 8;
  ComplexMatrix stack(dim * dim, dim);
  for (Mask s = 0; s < 8; ++s) {
    ComplexMatrix m = ComplexMatrix::Identity(dim, dim);
    for (unsigned j = 1; j <= n; ++j)
      if (s >> (j - 1) & 1u) m = m * theta_hat_matrix(j, n);
    stack.col(s) = m.reshaped();
  }
  Eigen::FullPivLU<ComplexMatrix> lu(stack);
  EXPECT_EQ(lu.rank(), 8);
}
