#include "dyson/stochastic.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace dyson;
using namespace dyson::mc;
using testutil::random_hermitian;
using testutil::random_matrix;

namespace {

ComplexMatrix random_skew(Stream& rng, Eigen::Index r, double scale) {
  return kI * random_hermitian(rng, r, scale);
}

TorusModel random_model(Stream& rng, unsigned d, Eigen::Index r, std::size_t n) {
  TorusModel m = TorusModel::free(d, r);
  for (auto& a : m.A) a = random_skew(rng, r, 0.4);
  m.W = testutil::random_psd(rng, r, 0.6);
  for (std::size_t j = 0; j < n; ++j) {
    PerturbationSpec p;
    for (unsigned k = 0; k < d; ++k) p.S.push_back(random_matrix(rng, r, 0.4));
    p.V = random_matrix(rng, r, 0.4);
    m.perturbations.push_back(std::move(p));
  }
  return m;
}

}  // namespace

TEST(HeatKernel, NormalisedAndSymmetric) {
  const int N = 2000;
  double s = 0.0;
  for (int i = 0; i < N; ++i) s += heat_kernel(1, 0.3, {1.0}, {kTwoPi * (i + 0.5) / N});
  EXPECT_NEAR(s * kTwoPi / N, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(heat_kernel(2, 0.7, {0.1, 2.0}, {3.0, 5.5}), heat_kernel(2, 0.7, {3.0, 5.5}, {0.1, 2.0}));
  EXPECT_NEAR(heat_kernel(2, 60.0, {0.0, 0.0}, {1.0, 4.0}), 1.0 / (kTwoPi * kTwoPi), 1e-14);
  EXPECT_THROW(heat_kernel(1, 0.0, {0.0}, {0.0}), DomainError);
}

TEST(Expm, RankTwoClosedForm) {
  Stream rng(41, 0);
  for (int i = 0; i < 20; ++i) {
    const ComplexMatrix m = random_matrix(rng, 2, 0.2 + i * 0.2);
    EXPECT_LT(testutil::rel_diff(ComplexMatrix(expm_fiber(Fiber(m))), linalg::expm(m)), 1e-13);
  }
  ComplexMatrix nil = ComplexMatrix::Zero(2, 2);
  nil(0, 1) = 3.0;
  EXPECT_LT(testutil::rel_diff(ComplexMatrix(expm_fiber(Fiber(nil))), linalg::expm(nil)), 1e-15);
}

TEST(Bridge, EndpointsPinnedAndLawAtMidpoint) {
  Stream rng(42, 0);
  const BridgePath b = sample_bridge(2, {0.3, 6.0}, {5.0, 1.0}, 1.5, 64, rng);
  EXPECT_EQ(b.positions(0, 0), 0.3);
  EXPECT_EQ(b.positions(64, 0), 5.0);
  EXPECT_EQ(b.positions(64, 1), 1.0);
  for (unsigned j = 0; j < 2; ++j) EXPECT_NEAR(b.increments.col(j).sum(), b.lift[j] - b.x[j], 1e-12);
  const auto law = bridge_law_test(2.0, 1.0, 5.0, 20000, 7, 64, 30);
  EXPECT_TRUE(law.endpoints_pinned);
  EXPECT_GT(law.p_value, 1e-3);
  EXPECT_THROW(sample_bridge(1, {0.0}, {0.0}, 1.0, 1, rng), DomainError);
}

TEST(PathFunctionals, FusedMatchesComposed) {
  Stream mrng(43, 0);
  const TorusModel m = random_model(mrng, 2, 2, 3);
  const std::size_t steps = 200;
  const double t = 0.8;
  const Point x{0.5, 1.5}, y{4.0, 2.0};
  Stream r1(5, 17), r2(5, 17);
  const BridgePath b = sample_bridge(m, x, y, t, steps, r1);
  const PathFunctionals f = path_functionals(m, b);
  const StepKernel K(m, m.perturbations, t / steps);
  const PathState s = simulate_path(K, x, y, t, steps, 3, r2);
  EXPECT_LT((ComplexMatrix(s.transport_inv) - f.transport_inv.back()).norm(), 1e-12);
  EXPECT_LT((ComplexMatrix(s.w) - f.w_factor.back()).norm(), 1e-12);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_LT((ComplexMatrix(s.iterated[j]) - f.iterated[j]).norm(), 1e-11);
}

TEST(PathFunctionals, TransportStaysUnitary) {
  Stream mrng(44, 0);
  const TorusModel m = random_model(mrng, 3, 4, 0);
  Stream rng(9, 0);
  const BridgePath b = sample_bridge(m, {0, 0, 0}, {1, 2, 3}, 2.0, 4096, rng);
  const auto f = transport(m, b);
  const ComplexMatrix& T = f.transport_inv.back();
  EXPECT_LT((T * T.adjoint() - ComplexMatrix::Identity(4, 4)).norm(), 1e-8);
}

TEST(IteratedIto, OrderOneIsSumAndOrderTwoIsStrictlyOrdered) {
  std::vector<std::vector<ComplexMatrix>> psi(2);
  Stream rng(45, 0);
  for (int k = 0; k < 5; ++k) {
    psi[0].push_back(random_matrix(rng, 2));
    psi[1].push_back(random_matrix(rng, 2));
  }
  const auto I = iterated_ito(psi, 2);
  ComplexMatrix s1 = ComplexMatrix::Zero(2, 2), s2 = ComplexMatrix::Zero(2, 2);
  for (int k = 0; k < 5; ++k) s1 += psi[0][k];
  for (int k = 0; k < 5; ++k)
    for (int j = 0; j < k; ++j) s2 += psi[0][j] * psi[1][k];
  EXPECT_LT((I[0] - s1).norm(), 1e-13);
  EXPECT_LT((I[1] - s2).norm(), 1e-13);
}

TEST(Spectral, ClosedFormsWithoutConnection) {
  Stream rng(46, 0);
  TorusModel m = TorusModel::free(2, 2);
  m.W = random_hermitian(rng, 2, 0.5);
  m.W += 1.0 * ComplexMatrix::Identity(2, 2);
  const Point x{0.3, 1.0}, y{2.0, 5.0};
  const double t = 0.4;
  const double p = heat_kernel(2, t, x, y);
  const ComplexMatrix eW = linalg::expm(ComplexMatrix(-t * m.W));
  EXPECT_LT((spectral_phi_kernel(m, t, x, y).value - p * eW).norm(), 1e-12);
  m.W.setZero();
  PerturbationSpec v{{ComplexMatrix::Zero(2, 2), ComplexMatrix::Zero(2, 2)}, random_matrix(rng, 2)};
  m.perturbations.push_back(v);
  EXPECT_LT((spectral_phi_kernel(m, t, x, y).value - t * p * v.V).norm(), 1e-12);
  EXPECT_THROW(spectral_phi_kernel(m, t, x, y, 2), DomainError);
}

TEST(FeynmanKac, MatchesSpectralOracle) {
  Stream mrng(47, 0);
  const TorusModel m = random_model(mrng, 1, 2, 1);
  const Point x{0.4}, y{1.3};
  const double t = 0.5;
  const ComplexMatrix oracle = spectral_phi_kernel(m, t, x, y).value;
  const FkEstimate fk = fk_estimate(m, t, x, y, 20000, 256, 3, 1);
  for (Eigen::Index i = 0; i < 2; ++i)
    for (Eigen::Index j = 0; j < 2; ++j)
      EXPECT_LT(std::abs(fk.estimate(i, j) - oracle(i, j)), 4.0 * fk.stderr_(i, j) + 1e-3) << i << "," << j;
}

TEST(FeynmanKac, DriftBelowStderrAndSqrtScaling) {
  Stream mrng(48, 0);
  const TorusModel m = random_model(mrng, 1, 2, 1);
  const Point x{0.0}, y{0.7};
  const FkEstimate drift = fk_discretization_drift(m, 0.5, x, y, 4000, 128, 11, 1);
  const FkEstimate est = fk_estimate(m, 0.5, x, y, 4000, 128, 11, 1);
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_LE(std::abs(drift.estimate(i)), est.stderr_(i));
  const FkEstimate big = fk_estimate(m, 0.5, x, y, 16000, 128, 12, 1);
  const double slope = std::log(big.stderr_.sum() / est.stderr_.sum()) / std::log(4.0);
  EXPECT_NEAR(slope, -0.5, 0.05);
}

TEST(FeynmanKac, WorkerCountDoesNotChangeBits) {
  Stream mrng(49, 0);
  const TorusModel m = random_model(mrng, 2, 2, 2);
  const FkEstimate a = fk_estimate(m, 0.3, {0, 0}, {1, 1}, 3000, 32, 5, 1);
  const FkEstimate b = fk_estimate(m, 0.3, {0, 0}, {1, 1}, 3000, 32, 5, 3);
  EXPECT_EQ(a.estimate, b.estimate);
  EXPECT_EQ(a.stderr_, b.stderr_);
  EXPECT_THROW(fk_estimate(m, 0.3, {0, 0}, {1, 1}, 10, 32, 5, 1), DomainError);
}

TEST(MomentScaling, FirstOrderSlope) {
  TorusModel m = TorusModel::free(1, 1);
  m.perturbations.push_back({{ComplexMatrix::Identity(1, 1)}, ComplexMatrix::Identity(1, 1)});
  const auto s = moment_scaling_probe(m, {0}, 2.0, {0.05, 0.1, 0.2, 0.4}, 4000, 3, 64, 1);
  EXPECT_NEAR(s.slope, 1.0, 0.1);
  const auto v = moment_scaling_probe(m, {1}, 2.0, {0.05, 0.1, 0.2, 0.4}, 1000, 3, 64, 1);
  EXPECT_NEAR(v.slope, 2.0, 1e-9);
}

TEST(LevyArea, ZeroCurvatureIsOneAndFourDimTop) {
  const auto zero = clifford::curvature_matrix(2, {});
  const clifford::Form one = levy_area_estimate(zero, 2, 1000, 16, 1, 1);
  EXPECT_EQ(one.coeff(0), cplx(1.0));
  EXPECT_EQ(one.terms().size(), 1u);

  const auto om2 = clifford::curvature_matrix(2, {{1, 2, clifford::Form::monomial(2, 0b11, 1.5)}});
  const clifford::Form e2 = levy_area_estimate(om2, 2, 20000, 64, 2, 1);
  EXPECT_EQ(e2.coeff(0), cplx(1.0));
  EXPECT_LT(std::abs(e2.coeff(0b11)), 0.01);

  const double a = 1.0, b = 1.0;
  const auto f = clifford::Form::monomial(4, 0b1100, a) + clifford::Form::monomial(4, 0b0011, b);
  const auto om4 = clifford::curvature_matrix(4, {{1, 2, f}});
  const clifford::Form e4 = levy_area_estimate(om4, 4, 20000, 64, 3, 1);
  EXPECT_NEAR(e4.coeff(0b1111).real(), a * b / 12.0, 0.006);
}

TEST(Localization, SpectralValuesMatchTargets) {
  using jlo::Chain;
  const Chain c0{{clifford::Form::monomial(2, 0b11), clifford::Form(2)}};
  const auto r0 = localization_check(2, c0, {0.1, 0.05});
  EXPECT_LT(std::abs(r0.target - 1.0 / (2.0 * kPi * kI)), 1e-14);
  EXPECT_LT(std::abs(r0.extrapolated - r0.target), 1e-8);
  const Chain c1{{clifford::Form::generator(2, 1), clifford::Form(2)},
                 {clifford::Form(2), clifford::Form::generator(2, 2)}};
  const auto r1 = localization_check(2, c1, {0.1, 0.05});
  EXPECT_LT(std::abs(r1.target - 2.0 * kI / kPi), 1e-14);
  EXPECT_LT(std::abs(r1.extrapolated - r1.target), 1e-8);
}

TEST(Validation, RejectsBadModels) {
  TorusModel m = TorusModel::free(1, 2);
  m.A[0] = ComplexMatrix::Identity(2, 2);
  EXPECT_THROW(m.validate(), DomainError);
  m = TorusModel::free(1, 9);
  EXPECT_THROW(m.validate(), DimensionError);
}
