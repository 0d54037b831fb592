// Monte Carlo on flat torus bundles R^d / (2 pi Z)^d with constant
// connection, potential and perturbation coefficients, and the exact
// Fourier-spectral kernels used as ground truth.
#pragma once

#include "dyson/clifford.hpp"
#include "dyson/jlo.hpp"
#include "dyson/phi.hpp"
#include "dyson/reduce.hpp"
#include "dyson/rng.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

namespace dyson::mc {

inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr Eigen::Index kMaxRank = 8;
inline constexpr std::size_t kPathBlock = 256;

using Fiber = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxRank, kMaxRank>;
using Point = std::vector<double>;

// P = sum_j S^j nabla_j + V.
struct PerturbationSpec {
  std::vector<ComplexMatrix> S;
  ComplexMatrix V;
};

struct TorusModel {
  unsigned d = 1;
  Eigen::Index r = 1;
  std::vector<ComplexMatrix> A;  // skew-Hermitian, nabla = d + sum A_j dx^j
  ComplexMatrix W;               // Hermitian potential
  std::vector<PerturbationSpec> perturbations;

  static TorusModel free(unsigned d, Eigen::Index r) {
    TorusModel m;
    m.d = d;
    m.r = r;
    m.A.assign(d, ComplexMatrix::Zero(r, r));
    m.W = ComplexMatrix::Zero(r, r);
    return m;
  }

  bool has_connection() const {
    for (const auto& a : A)
      if (a.norm() != 0.0) return true;
    return false;
  }

  void validate() const {
    if (d < 1 || d > 8) throw DimensionError("TorusModel: d must be in [1, 8]");
    if (r < 1 || r > kMaxRank) throw DimensionError("TorusModel: rank must be in [1, 8]");
    if (A.size() != d) throw DimensionError("TorusModel: need one connection coefficient per direction");
    for (const auto& a : A) {
      if (a.rows() != r || a.cols() != r) throw DimensionError("TorusModel: connection coefficient shape");
      if ((a + a.adjoint()).norm() > 1e-12 * std::max(1.0, a.norm()))
        throw DomainError("TorusModel: connection coefficients must be skew-Hermitian");
    }
    if (W.rows() != r || W.cols() != r) throw DimensionError("TorusModel: potential shape");
    if ((W - W.adjoint()).norm() > 1e-12 * std::max(1.0, W.norm())) throw DomainError("TorusModel: W must be Hermitian");
    for (const auto& p : perturbations) {
      if (p.S.size() != d) throw DimensionError("TorusModel: perturbation needs d symbol coefficients");
      for (const auto& s : p.S)
        if (s.rows() != r || s.cols() != r) throw DimensionError("TorusModel: symbol coefficient shape");
      if (p.V.rows() != r || p.V.cols() != r) throw DimensionError("TorusModel: zeroth-order part shape");
    }
  }
};

// H_k = (1/2) sum_j -(i k_j + A_j)^2 + W on the mode e^{i k x}.
inline ComplexMatrix mode_hamiltonian(const TorusModel& m, const std::vector<int>& k) {
  ComplexMatrix h = m.W;
  for (unsigned j = 0; j < m.d; ++j) {
    const ComplexMatrix a = kI * static_cast<double>(k[j]) * ComplexMatrix::Identity(m.r, m.r) + m.A[j];
    h -= 0.5 * a * a;
  }
  return 0.5 * (h + h.adjoint());
}

inline ComplexMatrix mode_perturbation(const TorusModel& m, const PerturbationSpec& p, const std::vector<int>& k) {
  ComplexMatrix out = p.V;
  for (unsigned j = 0; j < m.d; ++j)
    out += p.S[j] * (kI * static_cast<double>(k[j]) * ComplexMatrix::Identity(m.r, m.r) + m.A[j]);
  return out;
}

// Number of winding images so the neglected Gaussian tail is below ~1e-17.
inline int winding_window(double t) { return static_cast<int>(std::ceil(std::sqrt(2.0 * t * 40.0) / kTwoPi)) + 2; }

inline double wrapped_gaussian_1d(double t, double x, double y) {
  const int M = winding_window(t);
  double s = 0.0;
  for (int m = -M; m <= M; ++m) {
    const double z = y + kTwoPi * m - x;
    s += std::exp(-z * z / (2.0 * t));
  }
  return s / std::sqrt(2.0 * kPi * t);
}

// Heat kernel of -Delta/2 on the torus.
inline double heat_kernel(unsigned d, double t, const Point& x, const Point& y) {
  if (!(t > 0.0)) throw DomainError("heat_kernel: t must be positive");
  if (x.size() != d || y.size() != d) throw DimensionError("heat_kernel: point dimension");
  double p = 1.0;
  for (unsigned j = 0; j < d; ++j) p *= wrapped_gaussian_1d(t, x[j], y[j]);
  return p;
}

inline double heat_kernel(const TorusModel& m, double t, const Point& x, const Point& y) {
  return heat_kernel(m.d, t, x, y);
}

inline double wrap(double v) {
  double w = std::fmod(v, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  return w;
}

// ---------------------------------------------------------------------------
// Spectral oracle

struct SpectralKernel {
  ComplexMatrix value;
  int truncation = 0;
  double tail_estimate = 0.0;
};

inline int default_mode_cutoff(const TorusModel& m, double t) {
  double a = 0.0;
  for (const auto& aj : m.A) a = std::max(a, linalg::op_norm(aj));
  return static_cast<int>(std::ceil(std::sqrt(2.0 * 46.0 / t) + a)) + 2;
}

// (2 pi)^{-d} sum_{|k|_inf <= K} e^{i k (x - y)} Phi^{H_k}_t(P_{1,k}, ..., P_{n,k}).
inline SpectralKernel spectral_phi_kernel(const TorusModel& m, double t, const Point& x, const Point& y,
                                          std::optional<int> K = std::nullopt) {
  m.validate();
  if (!(t > 0.0)) throw DomainError("spectral_phi_kernel: t must be positive");
  if (x.size() != m.d || y.size() != m.d) throw DimensionError("spectral_phi_kernel: point dimension");
  SpectralKernel out;
  out.truncation = K ? *K : default_mode_cutoff(m, t);
  const int Kc = out.truncation;
  std::vector<ComplexMatrix> terms;
  double shell = 0.0, total = 0.0;
  std::vector<int> k(m.d, -Kc);
  while (true) {
    std::vector<ComplexMatrix> ps;
    for (const auto& p : m.perturbations) ps.push_back(mode_perturbation(m, p, k));
    const OperatorFamily fam(HermitianOperator::nonnegative(mode_hamiltonian(m, k)), std::move(ps));
    double phase = 0.0;
    int kmax = 0;
    for (unsigned j = 0; j < m.d; ++j) {
      phase += k[j] * (x[j] - y[j]);
      kmax = std::max(kmax, std::abs(k[j]));
    }
    ComplexMatrix term = std::polar(1.0, phase) * phi_fermionic(fam, t).value;
    const double nrm = term.norm();
    total += nrm;
    if (kmax == Kc) shell += nrm;
    terms.push_back(std::move(term));
    unsigned j = 0;
    while (j < m.d && k[j] == Kc) k[j++] = -Kc;
    if (j == m.d) break;
    ++k[j];
  }
  out.value = pairwise_sum(terms) / std::pow(kTwoPi, static_cast<double>(m.d));
  // Gaussian decay makes the outermost shell an upper estimate of the remaining tail.
  out.tail_estimate = 4.0 * shell / std::pow(kTwoPi, static_cast<double>(m.d));
  const double scale = std::max(out.value.norm(), total / std::pow(kTwoPi, static_cast<double>(m.d)) * 1e-3);
  if (out.tail_estimate > 1e-10 * std::max(1.0, scale))
    throw DomainError("spectral_phi_kernel: truncation does not converge");
  return out;
}

// ---------------------------------------------------------------------------
// Bridges

struct BridgePath {
  Point x, y;
  double t = 0.0;
  std::size_t steps = 0;
  Point lift;                 // Euclidean endpoint y + 2 pi k
  RealMatrix increments;      // steps x d
  RealMatrix positions;       // (steps + 1) x d, wrapped
};

inline double sample_winding(double t, double x, double y, Stream& rng) {
  const int M = winding_window(t);
  std::vector<double> w(2 * M + 1);
  double total = 0.0;
  for (int m = -M; m <= M; ++m) {
    const double z = y + kTwoPi * m - x;
    w[m + M] = std::exp(-z * z / (2.0 * t));
    total += w[m + M];
  }
  double u = rng.uniform() * total;
  for (int m = -M; m <= M; ++m) {
    u -= w[m + M];
    if (u <= 0.0) return y + kTwoPi * m;
  }
  return y + kTwoPi * M;
}

// Next Euclidean increment of a bridge at z heading to `target` with `remaining` time left.
inline double bridge_increment(double z, double target, double remaining, double h, bool last, Stream& rng) {
  if (last) return target - z;
  const double mean = (target - z) * h / remaining;
  const double sd = std::sqrt(h * (remaining - h) / remaining);
  return mean + sd * rng.normal();
}

inline Point normalize_point(const Point& p) {
  Point out(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) out[j] = wrap(p[j]);
  return out;
}

// Lift endpoints (one winding draw per coordinate), then exact Gaussian bridge steps.
inline BridgePath sample_bridge(unsigned d, const Point& x, const Point& y, double t, std::size_t steps, Stream& rng) {
  if (steps < 2) throw DomainError("sample_bridge: need at least 2 steps");
  if (!(t > 0.0)) throw DomainError("sample_bridge: t must be positive");
  if (x.size() != d || y.size() != d) throw DimensionError("sample_bridge: point dimension");
  BridgePath b;
  b.x = normalize_point(x);
  b.y = normalize_point(y);
  b.t = t;
  b.steps = steps;
  b.lift.resize(d);
  for (unsigned j = 0; j < d; ++j) b.lift[j] = sample_winding(t, b.x[j], b.y[j], rng);
  b.increments.resize(steps, d);
  b.positions.resize(steps + 1, d);
  const double h = t / static_cast<double>(steps);
  Point z = b.x;
  for (unsigned j = 0; j < d; ++j) b.positions(0, j) = b.x[j];
  for (std::size_t k = 0; k < steps; ++k) {
    const double remaining = t - h * static_cast<double>(k);
    for (unsigned j = 0; j < d; ++j) {
      const double dz = bridge_increment(z[j], b.lift[j], remaining, h, k + 1 == steps, rng);
      b.increments(k, j) = dz;
      z[j] = (k + 1 == steps) ? b.lift[j] : z[j] + dz;
      b.positions(k + 1, j) = (k + 1 == steps) ? b.y[j] : wrap(z[j]);
    }
  }
  return b;
}

inline BridgePath sample_bridge(const TorusModel& m, const Point& x, const Point& y, double t, std::size_t steps,
                                Stream& rng) {
  return sample_bridge(m.d, x, y, t, steps, rng);
}

// ---------------------------------------------------------------------------
// Path functionals

// Exponential of a small matrix; closed form for rank 2.
inline Fiber expm_fiber(const Fiber& m) {
  if (m.rows() == 1) {
    Fiber e(1, 1);
    e(0, 0) = std::exp(m(0, 0));
    return e;
  }
  if (m.rows() == 2) {
    const cplx mu = 0.5 * (m(0, 0) + m(1, 1));
    const cplx half = 0.5 * (m(0, 0) - m(1, 1));
    const cplx delta = std::sqrt(half * half + m(0, 1) * m(1, 0));
    const cplx ch = std::cosh(delta);
    const cplx shc = std::abs(delta) < 1e-4 ? 1.0 + delta * delta / 6.0 + delta * delta * delta * delta / 120.0
                                            : std::sinh(delta) / delta;
    const cplx em = std::exp(mu);
    Fiber e(2, 2);
    e(0, 0) = em * (ch + shc * half);
    e(1, 1) = em * (ch - shc * half);
    e(0, 1) = em * shc * m(0, 1);
    e(1, 0) = em * shc * m(1, 0);
    return e;
  }
  return linalg::expm(m);
}

// Precomputed per-model step data in bounded-size storage.
struct StepKernel {
  unsigned d = 0;
  Eigen::Index r = 0;
  double h = 0.0;
  bool has_connection = false;
  bool has_potential = false;
  std::vector<Fiber> A;
  Fiber expW;
  std::vector<std::vector<Fiber>> S;
  std::vector<Fiber> V;

  StepKernel(const TorusModel& m, const std::vector<PerturbationSpec>& specs, double step)
      : d(m.d), r(m.r), h(step), has_connection(m.has_connection()), has_potential(m.W.norm() != 0.0) {
    for (const auto& a : m.A) A.emplace_back(a);
    expW = has_potential ? Fiber(linalg::expm(ComplexMatrix(-h * m.W))) : Fiber(Fiber::Identity(r, r));
    for (const auto& p : specs) {
      std::vector<Fiber> s;
      for (const auto& sj : p.S) s.emplace_back(sj);
      S.push_back(std::move(s));
      V.emplace_back(p.V);
    }
  }
};

struct PathState {
  Fiber transport_inv;
  Fiber w;                      // Z_0
  std::vector<Fiber> iterated;  // Z_1..Z_n

  PathState(Eigen::Index r, std::size_t n)
      : transport_inv(Fiber::Identity(r, r)), w(Fiber::Identity(r, r)), iterated(n, Fiber::Zero(r, r)) {}
};

// One step from the left endpoint state with bridge increment dB.
//   E_k       = //^{-1}_k e^{-hW} //_k
//   dPsi_j    = //^{-1}_k (sum_m S_j^m dB^m + V_j h) //_k
//   Z_m      <- (Z_m + Z_{m-1} dPsi_m) E_k, highest order first, Z_0 = W-functional
//   //^{-1}_{k+1} = //^{-1}_k expm(sum_j A_j dB^j)
// Z_m is the iterated Ito integral with the potential weight interleaved between
// insertions; without potential it reduces to I_m.
inline void advance(const StepKernel& K, const double* dB, PathState& s) {
  const Fiber& T = s.transport_inv;
  const Fiber Tadj = T.adjoint();
  const std::size_t n = s.iterated.size();
  for (std::size_t jj = n; jj-- > 0;) {
    Fiber g = K.h * K.V[jj];
    for (unsigned m = 0; m < K.d; ++m) g += dB[m] * K.S[jj][m];
    const Fiber dpsi = T * g * Tadj;
    s.iterated[jj] += (jj == 0 ? s.w : s.iterated[jj - 1]) * dpsi;
  }
  if (K.has_potential) {
    const Fiber E = T * K.expW * Tadj;
    s.w = s.w * E;
    for (auto& z : s.iterated) z = z * E;
  }
  if (K.has_connection) {
    Fiber g = Fiber::Zero(K.r, K.r);
    for (unsigned m = 0; m < K.d; ++m) g += dB[m] * K.A[m];
    s.transport_inv = T * expm_fiber(g);
  }
}

struct PathFunctionals {
  std::vector<ComplexMatrix> transport_inv;              // steps + 1 entries
  std::vector<ComplexMatrix> w_factor;                   // steps + 1 entries
  std::vector<std::vector<ComplexMatrix>> psi_increments;  // [perturbation][step]
  std::vector<ComplexMatrix> step_factors;               // E_k, steps entries
  std::vector<ComplexMatrix> iterated;                   // Z_1..Z_n at the horizon
};

// Stochastic parallel transport //^{-1}_{k+1} = //^{-1}_k expm(sum_j A_j dB^j_k).
inline PathFunctionals transport(const TorusModel& m, const BridgePath& path) {
  PathFunctionals f;
  ComplexMatrix T = ComplexMatrix::Identity(m.r, m.r);
  f.transport_inv.push_back(T);
  for (std::size_t k = 0; k < path.steps; ++k) {
    Fiber g = Fiber::Zero(m.r, m.r);
    for (unsigned j = 0; j < m.d; ++j) g += path.increments(k, j) * Fiber(m.A[j]);
    T = T * ComplexMatrix(expm_fiber(g));
    f.transport_inv.push_back(T);
  }
  return f;
}

inline PathFunctionals& w_functional(const TorusModel& m, const BridgePath& path, PathFunctionals& f) {
  const double h = path.t / static_cast<double>(path.steps);
  const ComplexMatrix e = linalg::expm(ComplexMatrix(-h * m.W));
  ComplexMatrix w = ComplexMatrix::Identity(m.r, m.r);
  f.w_factor.assign(1, w);
  f.step_factors.clear();
  for (std::size_t k = 0; k < path.steps; ++k) {
    const ComplexMatrix& T = f.transport_inv[k];
    f.step_factors.push_back(T * e * T.adjoint());
    w = w * f.step_factors.back();
    f.w_factor.push_back(w);
  }
  return f;
}

inline std::vector<ComplexMatrix> ito_psi(const TorusModel& m, const BridgePath& path, const PathFunctionals& f,
                                          const PerturbationSpec& p) {
  const double h = path.t / static_cast<double>(path.steps);
  std::vector<ComplexMatrix> out;
  out.reserve(path.steps);
  for (std::size_t k = 0; k < path.steps; ++k) {
    ComplexMatrix g = h * p.V;
    for (unsigned j = 0; j < m.d; ++j) g += path.increments(k, j) * p.S[j];
    const ComplexMatrix& T = f.transport_inv[k];
    out.push_back(T * g * T.adjoint());
  }
  return out;
}

// I_1 = sum dPsi_1, I_m += I_{m-1}(left) dPsi_m; returns I_1..I_n at the horizon.
// With step factors E_k the potential weight is interleaved:
// Z_m <- (Z_m + Z_{m-1} dPsi_m) E_k with Z_0 the running product of the E_k.
inline std::vector<ComplexMatrix> iterated_ito(const std::vector<std::vector<ComplexMatrix>>& psi, std::size_t n,
                                               std::size_t stop = static_cast<std::size_t>(-1),
                                               const std::vector<ComplexMatrix>* step_factors = nullptr) {
  if (psi.size() < n) throw DimensionError("iterated_ito: not enough increment streams");
  if (n == 0) return {};
  const Eigen::Index r = psi[0].empty() ? 0 : psi[0][0].rows();
  std::vector<ComplexMatrix> I(n, ComplexMatrix::Zero(r, r));
  ComplexMatrix z0 = ComplexMatrix::Identity(r, r);
  const std::size_t steps = std::min(stop, psi[0].size());
  if (step_factors && step_factors->size() < steps) throw DimensionError("iterated_ito: missing step factors");
  for (std::size_t k = 0; k < steps; ++k) {
    for (std::size_t jj = n; jj-- > 0;) I[jj] += (jj == 0 ? z0 : I[jj - 1]) * psi[jj][k];
    if (step_factors) {
      const ComplexMatrix& E = (*step_factors)[k];
      z0 = z0 * E;
      for (auto& z : I) z = z * E;
    }
  }
  return I;
}

// Full functional stack on a stored path.
inline PathFunctionals path_functionals(const TorusModel& m, const BridgePath& path) {
  PathFunctionals f = transport(m, path);
  w_functional(m, path, f);
  for (const auto& p : m.perturbations) f.psi_increments.push_back(ito_psi(m, path, f, p));
  f.iterated = iterated_ito(f.psi_increments, m.perturbations.size(), static_cast<std::size_t>(-1), &f.step_factors);
  return f;
}

// Streams one bridge through the step kernel without storing it; stops after
// `stop` steps (the full horizon by default).
inline PathState simulate_path(const StepKernel& K, const Point& x, const Point& y, double t, std::size_t steps,
                               std::size_t n, Stream& rng, std::size_t stop = static_cast<std::size_t>(-1)) {
  std::array<double, 8> lift{}, z{}, dB{};
  for (unsigned j = 0; j < K.d; ++j) {
    lift[j] = sample_winding(t, x[j], y[j], rng);
    z[j] = x[j];
  }
  PathState s(K.r, n);
  const std::size_t last = std::min(stop, steps);
  for (std::size_t k = 0; k < last; ++k) {
    const double remaining = t - K.h * static_cast<double>(k);
    for (unsigned j = 0; j < K.d; ++j) {
      dB[j] = bridge_increment(z[j], lift[j], remaining, K.h, k + 1 == steps, rng);
      z[j] += dB[j];
    }
    advance(K, dB.data(), s);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Feynman-Kac estimator

struct MomentBlock {
  ComplexMatrix sum;
  RealMatrix sum_sq;  // sum of |X_ij|^2
  std::size_t count = 0;

  MomentBlock& operator+=(const MomentBlock& o) {
    sum += o.sum;
    sum_sq += o.sum_sq;
    count += o.count;
    return *this;
  }
};

struct FkEstimate {
  ComplexMatrix estimate;
  RealMatrix stderr_;
  double kernel = 0.0;
  std::size_t paths = 0;
  std::size_t steps = 0;
};

inline FkEstimate finish_moments(const MomentBlock& tot, double scale) {
  FkEstimate out;
  const double N = static_cast<double>(tot.count);
  out.estimate = scale * tot.sum / N;
  const ComplexMatrix mean = tot.sum / N;
  out.stderr_.resize(mean.rows(), mean.cols());
  for (Eigen::Index i = 0; i < mean.rows(); ++i)
    for (Eigen::Index j = 0; j < mean.cols(); ++j) {
      const double var = std::max(0.0, tot.sum_sq(i, j) / N - std::norm(mean(i, j))) * N / std::max(1.0, N - 1.0);
      out.stderr_(i, j) = scale * std::sqrt(var / N);
    }
  return out;
}

// p(t,x,y) * E[ Z_n(t) //^{-1}(t) ] over pinned bridges (Z_0 = W-functional).
inline FkEstimate fk_estimate(const TorusModel& m, double t, const Point& x_in, const Point& y_in, std::size_t paths,
                              std::size_t steps, std::uint64_t seed, unsigned workers = default_workers()) {
  m.validate();
  if (paths < 1000) throw DomainError("fk_estimate: need at least 1000 paths");
  if (steps < 2) throw DomainError("fk_estimate: need at least 2 steps");
  const Point x = normalize_point(x_in), y = normalize_point(y_in);
  if (x.size() != m.d || y.size() != m.d) throw DimensionError("fk_estimate: point dimension");
  const StepKernel K(m, m.perturbations, t / static_cast<double>(steps));
  const std::size_t n = m.perturbations.size();
  const std::size_t blocks = (paths + kPathBlock - 1) / kPathBlock;
  auto run = [&](std::size_t b) {
    MomentBlock mb{ComplexMatrix::Zero(m.r, m.r), RealMatrix::Zero(m.r, m.r), 0};
    const std::size_t hi = std::min(paths, (b + 1) * kPathBlock);
    for (std::size_t p = b * kPathBlock; p < hi; ++p) {
      Stream rng(seed, p);
      const PathState s = simulate_path(K, x, y, t, steps, n, rng);
      const Fiber X = n == 0 ? Fiber(s.w * s.transport_inv) : Fiber(s.iterated[n - 1] * s.transport_inv);
      mb.sum += ComplexMatrix(X);
      mb.sum_sq += X.cwiseAbs2();
      ++mb.count;
    }
    return mb;
  };
  const auto parts = run_blocks<MomentBlock>(blocks, workers, run);
  const double kern = heat_kernel(m.d, t, x, y);
  FkEstimate out = finish_moments(pairwise_sum(parts), kern);
  out.kernel = kern;
  out.paths = paths;
  out.steps = steps;
  return out;
}

// Coupled estimate of E[X_{2 steps}] - E[X_{steps}]: the coarse path uses the
// sums of consecutive fine increments, which is the exact coarse bridge.
inline FkEstimate fk_discretization_drift(const TorusModel& m, double t, const Point& x_in, const Point& y_in,
                                          std::size_t paths, std::size_t steps, std::uint64_t seed,
                                          unsigned workers = default_workers()) {
  m.validate();
  const Point x = normalize_point(x_in), y = normalize_point(y_in);
  const std::size_t fine = 2 * steps;
  const StepKernel Kf(m, m.perturbations, t / static_cast<double>(fine));
  const StepKernel Kc(m, m.perturbations, t / static_cast<double>(steps));
  const std::size_t n = m.perturbations.size();
  const std::size_t blocks = (paths + kPathBlock - 1) / kPathBlock;
  auto value = [&](const PathState& s) {
    return n == 0 ? Fiber(s.w * s.transport_inv) : Fiber(s.iterated[n - 1] * s.transport_inv);
  };
  auto run = [&](std::size_t b) {
    MomentBlock mb{ComplexMatrix::Zero(m.r, m.r), RealMatrix::Zero(m.r, m.r), 0};
    const std::size_t hi = std::min(paths, (b + 1) * kPathBlock);
    for (std::size_t p = b * kPathBlock; p < hi; ++p) {
      Stream rng(seed, p);
      std::array<double, 8> lift{}, z{}, d1{}, d2{}, dc{};
      for (unsigned j = 0; j < m.d; ++j) {
        lift[j] = sample_winding(t, x[j], y[j], rng);
        z[j] = x[j];
      }
      PathState sf(m.r, n), sc(m.r, n);
      for (std::size_t k = 0; k < fine; k += 2) {
        for (auto* dst : {&d1, &d2}) {
          const std::size_t kk = (dst == &d1) ? k : k + 1;
          const double remaining = t - Kf.h * static_cast<double>(kk);
          for (unsigned j = 0; j < m.d; ++j) {
            (*dst)[j] = bridge_increment(z[j], lift[j], remaining, Kf.h, kk + 1 == fine, rng);
            z[j] += (*dst)[j];
          }
          advance(Kf, dst->data(), sf);
        }
        for (unsigned j = 0; j < m.d; ++j) dc[j] = d1[j] + d2[j];
        advance(Kc, dc.data(), sc);
      }
      const Fiber X = value(sf) - value(sc);
      mb.sum += ComplexMatrix(X);
      mb.sum_sq += X.cwiseAbs2();
      ++mb.count;
    }
    return mb;
  };
  const auto parts = run_blocks<MomentBlock>(blocks, workers, run);
  const double kern = heat_kernel(m.d, t, x, y);
  FkEstimate out = finish_moments(pairwise_sum(parts), kern);
  out.kernel = kern;
  out.paths = paths;
  out.steps = steps;
  return out;
}

// ---------------------------------------------------------------------------
// Moment scaling of iterated integrals

struct MomentScaling {
  std::vector<double> t_grid;
  std::vector<double> moments;
  double slope = 0.0;
  double expected = 0.0;
};

// E|I_m(t/2)|^b along loops at x for pure first-order (nu_j = 0) or pure
// zeroth-order (nu_j = 1) integrands taken from the model's perturbations;
// slope of log moment against log t.
inline MomentScaling moment_scaling_probe(const TorusModel& m, const std::vector<int>& nu, double b,
                                          const std::vector<double>& t_grid, std::size_t paths, std::uint64_t seed,
                                          std::size_t steps = 256, unsigned workers = default_workers()) {
  m.validate();
  const std::size_t order = nu.size();
  if (order == 0 || order > m.perturbations.size()) throw DimensionError("moment_scaling_probe: bad pattern length");
  if (t_grid.size() < 2) throw DomainError("moment_scaling_probe: degenerate grid");
  std::vector<PerturbationSpec> specs;
  int nu_abs = 0;
  for (std::size_t j = 0; j < order; ++j) {
    PerturbationSpec s = m.perturbations[j];
    if (nu[j] == 0) {
      s.V = ComplexMatrix::Zero(m.r, m.r);
    } else if (nu[j] == 1) {
      for (auto& sj : s.S) sj = ComplexMatrix::Zero(m.r, m.r);
      ++nu_abs;
    } else {
      throw DomainError("moment_scaling_probe: pattern entries must be 0 or 1");
    }
    specs.push_back(std::move(s));
  }
  if (steps % 2) ++steps;
  const Point x(m.d, 0.0);
  MomentScaling out;
  out.t_grid = t_grid;
  out.expected = 0.5 * b * static_cast<double>(order + nu_abs);
  for (std::size_t ti = 0; ti < t_grid.size(); ++ti) {
    const double t = t_grid[ti];
    const StepKernel K(m, specs, t / static_cast<double>(steps));
    const std::size_t blocks = (paths + kPathBlock - 1) / kPathBlock;
    auto run = [&](std::size_t blk) {
      double acc = 0.0;
      const std::size_t hi = std::min(paths, (blk + 1) * kPathBlock);
      for (std::size_t p = blk * kPathBlock; p < hi; ++p) {
        Stream rng(seed + 0x9E37 * ti, p);
        const PathState s = simulate_path(K, x, x, t, steps, order, rng, steps / 2);
        acc += std::pow(s.iterated[order - 1].norm(), b);
      }
      return acc;
    };
    out.moments.push_back(pairwise_sum(run_blocks<double>(blocks, workers, run)) / static_cast<double>(paths));
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double N = static_cast<double>(t_grid.size());
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    const double lx = std::log(t_grid[i]), ly = std::log(out.moments[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double den = N * sxx - sx * sx;
  if (std::abs(den) < 1e-300) throw DomainError("moment_scaling_probe: degenerate grid");
  out.slope = (N * sxy - sx * sy) / den;
  return out;
}

// ---------------------------------------------------------------------------
// Levy area

// E[exp(J)] with J = -(1/2) sum_k (Omega Y_k, dY_k) over standard Euclidean
// bridges Y on [0,1] from 0 to 0 in R^d (left-endpoint sums).
inline clifford::Form levy_area_estimate(const clifford::FormMatrix& omega, unsigned d, std::size_t paths,
                                         std::size_t steps, std::uint64_t seed, unsigned workers = default_workers()) {
  if (d == 0 || d % 2 || d > 10) throw DimensionError("levy_area_estimate: d must be even and at most 10");
  if (omega.size() != d) throw DimensionError("levy_area_estimate: Omega must be d x d");
  bool all_zero = true;
  for (const auto& row : omega) {
    if (row.size() != d) throw DimensionError("levy_area_estimate: Omega must be d x d");
    for (const auto& e : row) {
      if (e.generators() != d) throw DimensionError("levy_area_estimate: entry dimension");
      all_zero = all_zero && e.is_zero();
    }
  }
  if (all_zero) return clifford::Form::scalar(d, 1.0);
  if (steps < 2) throw DomainError("levy_area_estimate: need at least 2 steps");
  using Coeffs = Eigen::VectorXcd;
  const Eigen::Index nmask = Eigen::Index{1} << d;
  const std::size_t blocks = (paths + kPathBlock - 1) / kPathBlock;
  const double h = 1.0 / static_cast<double>(steps);
  auto run = [&](std::size_t blk) {
    Coeffs acc = Coeffs::Zero(nmask);
    const std::size_t hi = std::min(paths, (blk + 1) * kPathBlock);
    RealMatrix L(d, d);
    std::vector<double> Y(d), dY(d);
    for (std::size_t p = blk * kPathBlock; p < hi; ++p) {
      Stream rng(seed, p);
      L.setZero();
      std::fill(Y.begin(), Y.end(), 0.0);
      for (std::size_t k = 0; k < steps; ++k) {
        const double remaining = 1.0 - h * static_cast<double>(k);
        for (unsigned i = 0; i < d; ++i) dY[i] = bridge_increment(Y[i], 0.0, remaining, h, k + 1 == steps, rng);
        for (unsigned i = 0; i < d; ++i)
          for (unsigned j = 0; j < d; ++j) L(i, j) += Y[j] * dY[i];
        for (unsigned i = 0; i < d; ++i) Y[i] += dY[i];
      }
      clifford::Form J(d);
      for (unsigned i = 0; i < d; ++i)
        for (unsigned j = 0; j < d; ++j)
          if (!omega[i][j].is_zero()) J += (-0.5 * L(i, j)) * omega[i][j];
      const clifford::Form e = clifford::form_exp(J);
      for (const auto& [mask, c] : e.terms()) acc(mask) += c;
    }
    return acc;
  };
  const Coeffs tot = pairwise_sum(run_blocks<Coeffs>(blocks, workers, run)) / static_cast<double>(paths);
  clifford::Form out(d);
  for (Eigen::Index s = 0; s < nmask; ++s) out.add(static_cast<grassmann::Mask>(s), tot(s));
  return out;
}

// ---------------------------------------------------------------------------
// Bridge law check

struct BridgeLawTest {
  std::vector<double> observed;
  std::vector<double> expected;
  double chi2 = 0.0;
  double dof = 0.0;
  double p_value = 0.0;
  bool endpoints_pinned = true;
};

// Histogram of the wrapped position at time s of a one-dimensional torus bridge
// x -> y on [0, t] against p(s,x,z) p(t-s,z,y) / p(t,x,y).
inline BridgeLawTest bridge_law_test(double t, double x, double y, std::size_t samples, std::uint64_t seed,
                                     std::size_t steps = 64, std::size_t bins = 40) {
  if (steps < 2 || steps % 2) throw DomainError("bridge_law_test: steps must be even and at least 2");
  if (bins < 2) throw DomainError("bridge_law_test: need at least 2 bins");
  const double s = 0.5 * t;
  BridgeLawTest out;
  out.observed.assign(bins, 0.0);
  const double width = kTwoPi / static_cast<double>(bins);
  const double xw = wrap(x), yw = wrap(y);
  for (std::size_t p = 0; p < samples; ++p) {
    Stream rng(seed, p);
    const BridgePath b = sample_bridge(1, {xw}, {yw}, t, steps, rng);
    const double z = b.positions(static_cast<Eigen::Index>(steps / 2), 0);
    out.observed[std::min(bins - 1, static_cast<std::size_t>(z / width))] += 1.0;
    out.endpoints_pinned = out.endpoints_pinned && b.positions(0, 0) == xw && b.positions(steps, 0) == yw;
  }
  const double norm = wrapped_gaussian_1d(t, xw, yw);
  auto density = [&](double z) { return wrapped_gaussian_1d(s, xw, z) * wrapped_gaussian_1d(t - s, z, yw) / norm; };
  const int sub = 64;  // composite Simpson per bin
  for (std::size_t i = 0; i < bins; ++i) {
    const double a = width * static_cast<double>(i), hh = width / sub;
    double acc = density(a) + density(a + width);
    for (int k = 1; k < sub; ++k) acc += (k % 2 ? 4.0 : 2.0) * density(a + k * hh);
    out.expected.push_back(acc * hh / 3.0 * static_cast<double>(samples));
  }
  for (std::size_t i = 0; i < bins; ++i) {
    const double diff = out.observed[i] - out.expected[i];
    out.chi2 += diff * diff / out.expected[i];
  }
  out.dof = static_cast<double>(bins - 1);
  out.p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(out.dof), out.chi2));
  return out;
}

// ---------------------------------------------------------------------------
// Flat-model stochastic localization

struct LocalizationResult {
  std::vector<double> t;
  std::vector<cplx> values;
  cplx extrapolated;
  cplx target;
  std::optional<cplx> mc_value;
  std::optional<double> mc_stderr;
  std::optional<double> mc_t;
};

// Spin model on the flat torus: rank 2^{d/2}, trivial connection, H = D^2/2.
inline TorusModel flat_spin_model(unsigned d) {
  return TorusModel::free(d, Eigen::Index{1} << (d / 2));
}

// Per-block perturbation data for P(omega) = sum_m S^m d_m + V and P(omega_1, omega_2) = V.
inline std::optional<PerturbationSpec> block_spec(const clifford::SpinorRep& rep, const jlo::Chain& chain,
                                                  std::size_t first, std::size_t last) {
  const Eigen::Index r = rep.dim();
  jlo::FredholmModule plain;
  plain.rep = rep;
  PerturbationSpec spec;
  spec.S.assign(rep.d, ComplexMatrix::Zero(r, r));
  if (first == last) {
    const auto& w = chain.at(first);
    const int deg = jlo::checked_degree(w.prime, "localization_check");
    jlo::checked_degree(w.doubleprime, "localization_check");
    const ComplexMatrix cp = plain.clifford(w.prime);
    const double sgn = (deg % 2) ? -1.0 : 1.0;
    for (unsigned m = 0; m < rep.d; ++m) spec.S[m] = rep.c[m] * cp - sgn * cp * rep.c[m];
    spec.V = plain.clifford(w.doubleprime);
    return spec;
  }
  if (last == first + 1) {
    spec.V = jlo::p_of_pair(plain, chain.at(first), chain.at(last));
    return spec;
  }
  return std::nullopt;
}

// (t/2)^{-n/2 + sum deg omega_j'/2} Str( sum_m (-2)^m sum_I c(omega_0') Phi^{D^2/2}_t(P(omega_I1), ...)(x,x) ),
// evaluated through the spectral kernel.
inline cplx localization_value(const clifford::SpinorRep& rep, const jlo::Chain& chain, double t, const Point& x,
                               std::optional<std::size_t> mc_paths = std::nullopt, std::uint64_t seed = 0,
                               double* mc_stderr = nullptr, cplx* mc_value = nullptr, std::size_t steps = 256,
                               unsigned workers = default_workers()) {
  const std::size_t n = chain.size() - 1;
  double degsum = 0.0;
  for (const auto& w : chain) degsum += jlo::checked_degree(w.prime, "localization_check");
  const double pref = std::pow(0.5 * t, -0.5 * static_cast<double>(n) + 0.5 * degsum);
  jlo::FredholmModule plain;
  plain.rep = rep;
  const ComplexMatrix c0 = plain.clifford(chain[0].prime);
  const TorusModel base = flat_spin_model(rep.d);

  std::vector<std::pair<double, TorusModel>> terms;
  if (n == 0) {
    terms.emplace_back(1.0, base);
  } else {
    for (std::size_t mm = 1; mm <= n; ++mm) {
      const double weight = std::pow(-2.0, static_cast<double>(mm));
      for (const auto& part : jlo::ordered_partitions(mm, n)) {
        TorusModel model = base;
        bool vanishes = false;
        for (const auto& [a, b] : part.blocks) {
          auto spec = block_spec(rep, chain, a, b);
          if (!spec) {
            vanishes = true;
            break;
          }
          model.perturbations.push_back(std::move(*spec));
        }
        if (!vanishes) terms.emplace_back(weight, std::move(model));
      }
    }
  }
  cplx total = 0.0;
  double var = 0.0;
  cplx mc_total = 0.0;
  for (const auto& [weight, model] : terms) {
    const ComplexMatrix ker = spectral_phi_kernel(model, t, x, x).value;
    total += weight * clifford::supertrace(rep, c0 * ker);
    if (mc_paths) {
      const FkEstimate fk = fk_estimate(model, t, x, x, *mc_paths, steps, seed, workers);
      mc_total += weight * clifford::supertrace(rep, c0 * fk.estimate);
      // Conservative: errors of the r^2 entries added in quadrature through |Gamma c0| <= 1 entrywise bound.
      const ComplexMatrix gc = rep.chirality * c0;
      for (Eigen::Index i = 0; i < gc.rows(); ++i)
        for (Eigen::Index j = 0; j < gc.cols(); ++j)
          var += std::norm(weight * gc(i, j)) * fk.stderr_(j, i) * fk.stderr_(j, i);
    }
  }
  if (mc_paths) {
    if (mc_value) *mc_value = pref * mc_total;
    if (mc_stderr) *mc_stderr = pref * std::sqrt(var);
  }
  return pref * total;
}

// Spectral localisation values on a t-sequence, Richardson limit and per-unit-volume
// target; optionally one Feynman-Kac cross-check at the last time.
inline LocalizationResult localization_check(unsigned d, const jlo::Chain& chain, const std::vector<double>& t_seq,
                                             std::optional<std::size_t> mc_paths = std::nullopt,
                                             std::uint64_t seed = 0, std::size_t steps = 256,
                                             unsigned workers = default_workers()) {
  if (chain.empty()) throw DimensionError("localization_check: empty chain");
  if (t_seq.size() < 2) throw DomainError("localization_check: need at least two times");
  const auto rep = clifford::build_spinor_rep(d);
  const Point x(d, 0.0);
  LocalizationResult out;
  out.t = t_seq;
  for (std::size_t i = 0; i < t_seq.size(); ++i) {
    const bool last = i + 1 == t_seq.size();
    if (last && mc_paths) {
      double se = 0.0;
      cplx mv;
      out.values.push_back(localization_value(rep, chain, t_seq[i], x, mc_paths, seed, &se, &mv, steps, workers));
      out.mc_value = mv;
      out.mc_stderr = se;
      out.mc_t = t_seq[i];
    } else {
      out.values.push_back(localization_value(rep, chain, t_seq[i], x));
    }
  }
  const std::size_t n = t_seq.size();
  out.extrapolated = jlo::richardson(t_seq[n - 2], out.values[n - 2], t_seq[n - 1], out.values[n - 1], 1.0);
  out.target = jlo::localization_target(chain, d, 1.0);
  return out;
}

}  // namespace dyson::mc
