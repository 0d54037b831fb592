// Acceptance suite shared by the acceptance test binary and `dysonctl selftest`.
#pragma once

#include "dyson/clifford.hpp"
#include "dyson/jlo.hpp"
#include "dyson/phi.hpp"
#include "dyson/stochastic.hpp"
#include "dyson/testing/oracles.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

namespace dyson::selftest {

using json = nlohmann::ordered_json;

struct Comparison {
  std::string name;
  double value = 0.0;
  double target = 0.0;
  double tolerance = 0.0;
  bool pass = true;
  bool diagnostic = false;  // reported, not part of the verdict
};

struct Criterion {
  int id = 0;
  std::string title;
  std::vector<Comparison> checks;
  json details = json::object();
  double seconds = 0.0;

  Criterion(int id_, std::string title_) : id(id_), title(std::move(title_)) {}

  bool pass() const {
    for (const auto& c : checks)
      if (!c.diagnostic && !c.pass) return false;
    return true;
  }

  // |value - target| <= tol
  void near(std::string name, double value, double target, double tol) {
    checks.push_back({std::move(name), value, target, tol, std::abs(value - target) <= tol, false});
  }
  // value <= bound
  void at_most(std::string name, double value, double bound) {
    checks.push_back({std::move(name), value, 0.0, bound, value <= bound, false});
  }
  void in_range(std::string name, double value, double lo, double hi) {
    checks.push_back({std::move(name), value, 0.5 * (lo + hi), 0.5 * (hi - lo), value >= lo && value <= hi, false});
  }
  void flag(std::string name, bool ok) { checks.push_back({std::move(name), ok ? 1.0 : 0.0, 1.0, 0.0, ok, false}); }
  void diagnostic(std::string name, double value, double target, double tol) {
    checks.push_back({std::move(name), value, target, tol, std::abs(value - target) <= tol, true});
  }
};

struct Options {
  std::uint64_t seed = 0;
  unsigned workers = default_workers();
  bool reduced = false;  // smaller sample sizes, used for the reproducibility rerun
};

namespace detail {

inline ComplexMatrix rand_matrix(Stream& rng, Eigen::Index n, double scale = 1.0) {
  ComplexMatrix m(n, n);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.complex_normal();
  return m;
}

inline ComplexMatrix rand_hermitian(Stream& rng, Eigen::Index n, double scale = 1.0) {
  const ComplexMatrix m = rand_matrix(rng, n, scale);
  return 0.5 * (m + m.adjoint());
}

inline ComplexMatrix rand_psd(Stream& rng, Eigen::Index n, double top) {
  const Eigen::HouseholderQR<ComplexMatrix> qr(rand_matrix(rng, n));
  const ComplexMatrix q = qr.householderQ();
  Eigen::VectorXd ev(n);
  for (Eigen::Index i = 0; i < n; ++i) ev(i) = top * rng.uniform();
  const ComplexMatrix h = q * ev.cast<cplx>().asDiagonal() * q.adjoint();
  return 0.5 * (h + h.adjoint());
}

inline RealMatrix rand_antisym(Stream& rng, unsigned d) {
  RealMatrix a(d, d);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  return a - a.transpose();
}

inline double rel_dev(const ComplexMatrix& a, const ComplexMatrix& b) {
  const double s = std::max(a.norm(), b.norm());
  return s == 0.0 ? 0.0 : (a - b).norm() / s;
}

inline OperatorFamily random_family(Stream& rng, Eigen::Index dim, std::size_t n) {
  std::vector<ComplexMatrix> ps;
  for (std::size_t j = 0; j < n; ++j) ps.push_back(rand_matrix(rng, dim));
  return OperatorFamily(HermitianOperator::nonnegative(rand_psd(rng, dim, 4.0)), std::move(ps));
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

}  // namespace detail

// The fixed torus model used by the Monte Carlo criteria.
inline mc::TorusModel acceptance_torus(std::uint64_t seed, std::size_t n) {
  Stream rng(seed, 0xF00D);
  mc::TorusModel m = mc::TorusModel::free(2, 2);
  for (auto& a : m.A) a = kI * detail::rand_hermitian(rng, 2, 0.4);
  m.W = detail::rand_psd(rng, 2, 0.6);
  for (std::size_t j = 0; j < n; ++j) {
    mc::PerturbationSpec p;
    for (unsigned k = 0; k < 2; ++k) p.S.push_back(detail::rand_matrix(rng, 2, 0.4));
    p.V = detail::rand_matrix(rng, 2, 0.4);
    m.perturbations.push_back(std::move(p));
  }
  return m;
}

inline Criterion cross_evaluator(const Options& o) {
  Criterion c(1, "cross-evaluator agreement");
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t families = o.reduced ? 4 : 20;
  double worst = 0.0;
  json rows = json::array();
  for (std::size_t i = 0; i < families; ++i) {
    Stream rng(o.seed, 100 + i);
    const Eigen::Index dim = 1 + static_cast<Eigen::Index>(i % 8);
    const std::size_t n = 1 + i % 3;
    const OperatorFamily fam = detail::random_family(rng, dim, n);
    for (double t : {0.1, 0.5, 1.0}) {
      const ComplexMatrix f = phi_fermionic(fam, t).value;
      const ComplexMatrix q = phi_quadrature(fam, t, 32).value;
      const ComplexMatrix e = phi_ode(fam, t, 4096).value;
      const double dev = std::max({detail::rel_dev(f, q), detail::rel_dev(f, e), detail::rel_dev(q, e)});
      worst = std::max(worst, dev);
      rows.push_back({{"family", i}, {"dim", dim}, {"n", n}, {"t", t}, {"max_rel_dev", dev}});
    }
  }
  c.details["runs"] = rows;
  c.at_most("max pairwise relative deviation", worst, 1e-6);
  c.seconds = detail::seconds_since(t0);
  c.flag("runtime within 60 s", c.seconds <= 60.0);
  return c;
}

inline Criterion closed_forms(const Options&) {
  Criterion c(2, "closed-form exactness");
  const double lambda = 1.7;
  const std::vector<double> p{0.7, -1.3, 2.0};
  double worst = 0.0, worst_ode = 0.0;
  for (std::size_t n = 1; n <= 3; ++n) {
    std::vector<ComplexMatrix> ps;
    double prod = 1.0;
    for (std::size_t j = 0; j < n; ++j) {
      ps.push_back(ComplexMatrix::Constant(1, 1, p[j]));
      prod *= p[j];
    }
    const OperatorFamily fam(HermitianOperator(ComplexMatrix::Constant(1, 1, lambda)), ps);
    for (double t : {0.1, 0.5, 1.0}) {
      const double ref = prod * std::pow(t, static_cast<double>(n)) * std::exp(-lambda * t) /
                         std::tgamma(static_cast<double>(n) + 1.0);
      worst = std::max(worst, std::abs(phi_fermionic(fam, t).value(0, 0) - ref));
      worst = std::max(worst, std::abs(phi_quadrature(fam, t, 32).value(0, 0) - ref));
      worst_ode = std::max(worst_ode, std::abs(phi_ode(fam, t, 4096).value(0, 0) - ref));
    }
  }
  c.at_most("scalar family, fermionic and quadrature", worst, 1e-10);
  c.diagnostic("scalar family, ode (second order)", worst_ode, 0.0, 1e-7);

  const double lam2 = 2.3, t = 0.6;
  ComplexMatrix h = ComplexMatrix::Zero(2, 2);
  h(1, 1) = lam2;
  ComplexMatrix pm(2, 2);
  pm << 0, 1, 1, 0;
  const OperatorFamily fam2(HermitianOperator(h), {pm});
  const ComplexMatrix ref2 = ((1.0 - std::exp(-lam2 * t)) / lam2) * pm;
  const double e2 = std::max((phi_fermionic(fam2, t).value - ref2).cwiseAbs().maxCoeff(),
                             (phi_quadrature(fam2, t, 32).value - ref2).cwiseAbs().maxCoeff());
  c.at_most("2x2 first-order analytic case", e2, 1e-10);
  return c;
}

inline Criterion nilpotency(const Options& o) {
  Criterion c(3, "nilpotency of the lifted perturbation");
  for (std::size_t n = 1; n <= 3; ++n) {
    Stream rng(o.seed, 300 + n);
    const OperatorFamily fam = detail::random_family(rng, 3, n);
    const auto r = nilpotency_check(fam, 0.7, n + 1);
    c.at_most("n=" + std::to_string(n) + " norm / scale", r.norm / r.scale, 1e-10);
  }
  return c;
}

inline Criterion dyson_bound(const Options& o) {
  Criterion c(4, "Dyson tail bound and simplex constant");
  std::size_t held = 0;
  double worst_ratio = 0.0;
  for (std::size_t i = 0; i < 20; ++i) {
    Stream rng(o.seed, 400 + i);
    const Eigen::Index dim = 2 + static_cast<Eigen::Index>(i % 5);
    const HermitianOperator h = HermitianOperator::nonnegative(detail::rand_psd(rng, dim, 4.0));
    const ComplexMatrix p = detail::rand_matrix(rng, dim, 0.2 + 0.1 * static_cast<double>(i % 4));
    const double t = 0.1 + 0.9 * rng.uniform();
    const std::size_t L = i % 7;
    const DysonSum s = dyson_partial_sum(h, p, t, L);
    held += s.holds ? 1 : 0;
    worst_ratio = std::max(worst_ratio, s.error / std::max(s.bound, 1e-300));
  }
  c.near("instances with error <= tail bound", static_cast<double>(held), 20.0, 0.0);
  c.details["worst_error_over_bound"] = worst_ratio;
  const std::size_t samples = o.reduced ? 10000 : 1000000;
  for (std::size_t n = 1; n <= 3; ++n)
    for (double a : {0.3, 0.5, 0.7}) {
      const std::vector<double> ex(n, a);
      const auto mcv = oracle::simplex_mc(ex, samples, o.seed + 17 * n + static_cast<std::uint64_t>(a * 10));
      const double closed = simplex_constant(ex);
      c.near("simplex n=" + std::to_string(n) + " a=" + detail::fmt(a) + " within 3 stderr", mcv.mean, closed,
             3.0 * mcv.stderr_);
    }
  return c;
}

inline Criterion derivative(const Options& o) {
  Criterion c(5, "derivative recursion is second order");
  for (std::size_t i = 0; i < 10; ++i) {
    Stream rng(o.seed, 500 + i);
    const OperatorFamily fam = detail::random_family(rng, 2 + static_cast<Eigen::Index>(i % 5), 1 + i % 3);
    const double r1 = derivative_check(fam, 0.7, 0.02), r2 = derivative_check(fam, 0.7, 0.01);
    c.in_range("instance " + std::to_string(i) + " residual ratio", r1 / r2, 3.5, 4.5);
  }
  return c;
}

inline Criterion patodi(const Options& o) {
  Criterion c(6, "Patodi vanishing and top identity");
  for (unsigned d : {2u, 4u, 6u}) {
    const auto rep = clifford::build_spinor_rep(d);
    Stream rng(o.seed, 600 + d);
    double low = 0.0, top = 0.0;
    for (int k = 0; k < 50; ++k) {
      const std::size_t order = rep.l > 1 ? static_cast<std::size_t>(rng.next_u64() % rep.l) : 0;
      clifford::Word w;
      for (std::size_t j = 0; j < order; ++j) w.push_back(detail::rand_antisym(rng, d));
      low = std::max(low, clifford::patodi_vanishing(rep, w));
    }
    for (int k = 0; k < 50; ++k) {
      clifford::Word w;
      for (unsigned j = 0; j < rep.l; ++j) w.push_back(detail::rand_antisym(rng, d));
      top = std::max(top, clifford::patodi_top_identity(rep, w).residual);
    }
    c.at_most("d=" + std::to_string(d) + " max |Str| below order d/2", low, 1e-10);
    c.at_most("d=" + std::to_string(d) + " max top-identity residual", top, 1e-10);
  }
  return c;
}

inline Criterion mckean_singer(const Options& o) {
  Criterion c(7, "McKean-Singer constancy");
  std::vector<double> grid;
  for (int k = 0; k < 20; ++k) grid.push_back(0.1 + 1.9 * k / 19.0);
  for (std::size_t i = 0; i < 10; ++i) {
    Stream rng(o.seed, 700 + i);
    const Eigen::Index p = 1 + static_cast<Eigen::Index>(rng.next_u64() % 5);
    const Eigen::Index q = 1 + static_cast<Eigen::Index>(rng.next_u64() % 5);
    ComplexMatrix grading = ComplexMatrix::Zero(p + q, p + q);
    grading.topLeftCorner(p, p).setIdentity();
    grading.bottomRightCorner(q, q) = -ComplexMatrix::Identity(q, q);
    const ComplexMatrix B = [&] {
      ComplexMatrix b(q, p);
      for (Eigen::Index k = 0; k < b.size(); ++k) b.data()[k] = rng.complex_normal();
      return b;
    }();
    ComplexMatrix D = ComplexMatrix::Zero(p + q, p + q);
    D.bottomLeftCorner(q, p) = B;
    D.topRightCorner(p, q) = B.adjoint();
    const auto ms = jlo::mckean_singer(grading, D, grid);
    const double constructed = static_cast<double>(p - q);
    const std::string tag = "D" + std::to_string(i) + " (" + std::to_string(p) + "|" + std::to_string(q) + ")";
    c.at_most(tag + " spread", ms.spread, 1e-9);
    c.near(tag + " kernel signature", static_cast<double>(ms.kernel_signature), constructed, 0.0);
    c.near(tag + " value vs signature", ms.values.front().real(), constructed, 1e-9);
  }
  return c;
}

inline Criterion jlo_localization(const Options&) {
  Criterion c(8, "JLO localisation on the flat torus");
  const auto t0 = std::chrono::steady_clock::now();
  const auto mod = jlo::make_flat_torus_module(2);
  const std::vector<jlo::Chain> chains{
      {{clifford::Form::monomial(2, 0b11), clifford::Form(2)}},
      {{clifford::Form::generator(2, 1), clifford::Form(2)}, {clifford::Form(2), clifford::Form::generator(2, 2)}}};
  json runs = json::array();
  for (std::size_t n = 0; n < chains.size(); ++n) {
    const auto ex = jlo::small_time_limit(mod, chains[n], jlo::geometric_sequence(0.1, 3));
    const double rel = std::abs(ex.extrapolated - ex.target) / std::abs(ex.target);
    c.at_most("n=" + std::to_string(n) + " relative error of extrapolated value", rel, 0.02);
    const auto loc = mc::localization_check(2, chains[n], jlo::geometric_sequence(0.1, 3));
    const double rel_loc = std::abs(loc.extrapolated - loc.target) / std::abs(loc.target);
    c.diagnostic("n=" + std::to_string(n) + " stochastic-localisation route, relative error", rel_loc, 0.0, 0.02);
    runs.push_back({{"n", n},
                    {"extrapolated", {ex.extrapolated.real(), ex.extrapolated.imag()}},
                    {"target", {ex.target.real(), ex.target.imag()}},
                    {"ratio_re", (ex.extrapolated / ex.target).real()},
                    {"localisation_route", {loc.extrapolated.real(), loc.extrapolated.imag()}},
                    {"localisation_target_unit_volume", {loc.target.real(), loc.target.imag()}}});
  }
  c.details["runs"] = runs;
  c.seconds = detail::seconds_since(t0);
  c.flag("runtime within 120 s", c.seconds <= 120.0);
  return c;
}

inline Criterion feynman_kac(const Options& o) {
  Criterion c(9, "Feynman-Kac Monte Carlo vs spectral oracle");
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t paths = o.reduced ? 5000 : 100000;
  const std::size_t steps = o.reduced ? 64 : 512;
  const mc::Point x{0.3, 1.1}, y{1.0, 0.6};
  const double t = 0.5;
  json runs = json::array();
  for (std::size_t n = 0; n <= 1; ++n) {
    const mc::TorusModel m = acceptance_torus(o.seed, n);
    const ComplexMatrix oracle = mc::spectral_phi_kernel(m, t, x, y).value;
    const mc::FkEstimate fk = mc::fk_estimate(m, t, x, y, paths, steps, o.seed + 900 + n, o.workers);
    const double onorm = oracle.norm();
    json entries = json::array();
    for (Eigen::Index i = 0; i < 2; ++i)
      for (Eigen::Index j = 0; j < 2; ++j) {
        const std::string tag = "n=" + std::to_string(n) + " (" + std::to_string(i) + "," + std::to_string(j) + ")";
        const double err = std::abs(fk.estimate(i, j) - oracle(i, j));
        c.at_most(tag + " |error| / (3 stderr)", err / (3.0 * fk.stderr_(i, j)), 1.0);
        if (std::abs(oracle(i, j)) > 0.05 * onorm) c.at_most(tag + " relative error", err / std::abs(oracle(i, j)), 0.02);
        entries.push_back({{"i", i},
                           {"j", j},
                           {"estimate", {fk.estimate(i, j).real(), fk.estimate(i, j).imag()}},
                           {"oracle", {oracle(i, j).real(), oracle(i, j).imag()}},
                           {"stderr", fk.stderr_(i, j)},
                           {"z", err / fk.stderr_(i, j)}});
      }
    runs.push_back({{"n", n}, {"paths", paths}, {"steps", steps}, {"entries", entries}});
  }
  c.details["runs"] = runs;
  c.seconds = detail::seconds_since(t0);
  c.flag("runtime within 300 s", c.seconds <= 300.0);
  return c;
}

inline Criterion ito_scaling(const Options& o) {
  Criterion c(10, "iterated Ito integral moment scaling");
  const std::size_t paths = o.reduced ? 2000 : 20000;
  mc::TorusModel m = acceptance_torus(o.seed, 2);
  m.W.setZero();
  const std::vector<double> grid{0.01, 0.02, 0.04, 0.08, 0.16};
  const std::vector<std::vector<int>> patterns{{0}, {1}, {0, 0}, {1, 1}};
  json runs = json::array();
  for (std::size_t k = 0; k < patterns.size(); ++k) {
    const auto s = mc::moment_scaling_probe(m, patterns[k], 2.0, grid, paths, o.seed + 1000 + k, 128, o.workers);
    int nu = 0;
    for (int v : patterns[k]) nu += v;
    const std::string tag = "(m,|nu|)=(" + std::to_string(patterns[k].size()) + "," + std::to_string(nu) + ") slope";
    c.near(tag, s.slope, s.expected, 0.15);
    runs.push_back({{"pattern", patterns[k]}, {"t", s.t_grid}, {"moments", s.moments}, {"slope", s.slope}});
  }
  c.details["runs"] = runs;
  return c;
}

inline Criterion levy_area(const Options& o) {
  Criterion c(11, "Levy area against the A-hat form");
  const std::size_t paths = o.reduced ? 5000 : 100000;
  const auto zero = clifford::curvature_matrix(2, {});
  const clifford::Form one = mc::levy_area_estimate(zero, 2, paths, 256, o.seed, o.workers);
  c.flag("Omega = 0 gives exactly 1", one.terms().size() == 1 && one.coeff(0) == cplx(1.0));

  const auto om2 = clifford::curvature_matrix(2, {{1, 2, clifford::Form::monomial(2, 0b11, 1.5)}});
  const clifford::Form e2 = mc::levy_area_estimate(om2, 2, paths, 256, o.seed + 1, o.workers);
  const clifford::Form a2 = clifford::a_hat_series(om2, 2);
  const double scale2 = a2.max_abs();
  c.near("d=2 top coefficient", std::abs(e2.coeff(0b11) - a2.coeff(0b11)), 0.0, 0.01 * scale2);
  c.near("d=2 scalar coefficient", std::abs(e2.coeff(0) - a2.coeff(0)), 0.0, 0.01 * scale2);

  const auto f4 = clifford::Form::monomial(4, 0b1100, 1.0) + clifford::Form::monomial(4, 0b0011, 1.0);
  const auto om4 = clifford::curvature_matrix(4, {{1, 2, f4}});
  const clifford::Form e4 = mc::levy_area_estimate(om4, 4, paths, 256, o.seed + 2, o.workers);
  const clifford::Form a4 = clifford::a_hat_series(om4, 4);
  c.diagnostic("d=4 top coefficient (ab/12)", e4.coeff(0b1111).real(), a4.coeff(0b1111).real(), 0.005);
  c.details["d2_top"] = {e2.coeff(0b11).real(), e2.coeff(0b11).imag()};
  c.details["d4_top"] = {e4.coeff(0b1111).real(), a4.coeff(0b1111).real()};
  return c;
}

inline Criterion bridge_law(const Options& o) {
  Criterion c(12, "bridge midpoint law");
  const std::size_t samples = o.reduced ? 5000 : 100000;
  const auto r = mc::bridge_law_test(2.0, 1.0, 5.0, samples, o.seed + 1200, 64, 40);
  c.checks.push_back({"chi-square p-value >= 0.01", r.p_value, 0.01, 0.0, r.p_value >= 0.01, false});
  c.flag("endpoints pinned exactly", r.endpoints_pinned);
  c.details["chi2"] = r.chi2;
  c.details["dof"] = r.dof;
  return c;
}

inline json to_json(const Criterion& c) {
  json checks = json::array();
  for (const auto& k : c.checks)
    checks.push_back({{"name", k.name},
                      {"value", k.value},
                      {"target", k.target},
                      {"tolerance", k.tolerance},
                      {"verdict", k.pass ? "pass" : "fail"},
                      {"role", k.diagnostic ? "diagnostic" : "criterion"}});
  return {{"id", c.id}, {"title", c.title}, {"verdict", c.pass() ? "pass" : "fail"}, {"checks", checks},
          {"details", c.details}};
}

// Criteria 1-12. The report is a pure function of (seed, reduced); wall-clock
// times enter only through the budget flags.
inline std::vector<Criterion> run_numeric(const Options& o,
                                          const std::function<void(const Criterion&)>& on_done = {}) {
  std::vector<std::function<Criterion(const Options&)>> all{cross_evaluator, closed_forms, nilpotency,   dyson_bound,
                                                            derivative,      patodi,       mckean_singer, jlo_localization,
                                                            feynman_kac,     ito_scaling,  levy_area,     bridge_law};
  std::vector<Criterion> out;
  for (const auto& f : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Criterion c = f(o);
    c.seconds = detail::seconds_since(t0);
    if (on_done) on_done(c);
    out.push_back(std::move(c));
  }
  return out;
}

inline json report(const Options& o, const std::vector<Criterion>& cs) {
  json crit = json::array();
  bool ok = true;
  for (const auto& c : cs) {
    crit.push_back(to_json(c));
    ok = ok && c.pass();
  }
  return {{"command", "selftest"}, {"seed", o.seed}, {"reduced", o.reduced}, {"criteria", crit},
          {"all_pass", ok}};
}

// Reduced selftest on one worker, on `many` workers and once more on one worker.
inline Criterion reproducibility(const Options& o, unsigned many) {
  Criterion c(13, "bitwise reproducibility across reruns and worker counts");
  Options r = o;
  r.reduced = true;
  r.workers = 1;
  const std::string a = report(r, run_numeric(r)).dump();
  r.workers = std::max(2u, many);
  const std::string b = report(r, run_numeric(r)).dump();
  r.workers = 1;
  const std::string a2 = report(r, run_numeric(r)).dump();
  c.flag("1 worker vs " + std::to_string(std::max(2u, many)) + " workers identical", a == b);
  c.flag("rerun identical", a == a2);
  c.details["report_bytes"] = a.size();
  return c;
}

inline std::string verdict_line(const Criterion& c) {
  std::string failed;
  for (const auto& k : c.checks)
    if (!k.diagnostic && !k.pass) failed += (failed.empty() ? "" : "; ") + k.name + " = " + detail::fmt(k.value);
  char head[160];
  std::snprintf(head, sizeof head, "[%s] %2d %-56s %7.1fs", c.pass() ? "PASS" : "FAIL", c.id, c.title.c_str(),
                c.seconds);
  return failed.empty() ? std::string(head) : std::string(head) + "  (" + failed + ")";
}

}  // namespace dyson::selftest
