// dysonctl: command-line front end. Exit codes: 0 all verdicts pass,
// 1 numeric failure, 2 usage or schema error.
#include "dyson/selftest.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using json = nlohmann::ordered_json;
using namespace dyson;

constexpr const char* kVersion = "1.0.0";
constexpr double kRoundoff = 1e-12;

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::string config, out, method = "all", t_grid;
  std::optional<std::uint64_t> seed;
  std::optional<double> t;
  std::optional<std::size_t> paths, steps;
  std::optional<int> truncation;
  bool reduced = false;
  unsigned workers = default_workers();
};

// ---------------------------------------------------------------------------
// JSON input

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()); ++i) line += text[i] == '\n';
    throw SchemaError(path + ":" + std::to_string(line) + ": " + e.what());
  }
}

const json& need(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw SchemaError(where + ": missing field '" + key + "'");
  return j.at(key);
}

double num(const json& j, const std::string& where) {
  if (!j.is_number()) throw SchemaError(where + ": expected a number");
  return j.get<double>();
}

std::vector<double> reals(const json& j, const std::string& where) {
  if (!j.is_array()) throw SchemaError(where + ": expected an array of numbers");
  std::vector<double> v;
  for (std::size_t i = 0; i < j.size(); ++i) v.push_back(num(j[i], where + "/" + std::to_string(i)));
  return v;
}

// {rows, cols, re: [row-major], im: [row-major, optional]}
ComplexMatrix matrix(const json& j, const std::string& where) {
  const double rows = num(need(j, "rows", where), where + "/rows");
  const double cols = num(need(j, "cols", where), where + "/cols");
  if (rows < 1 || cols < 1 || rows != std::floor(rows) || cols != std::floor(cols))
    throw SchemaError(where + ": rows and cols must be positive integers");
  const auto r = static_cast<Eigen::Index>(rows), c = static_cast<Eigen::Index>(cols);
  const auto re = reals(need(j, "re", where), where + "/re");
  const auto im = j.contains("im") ? reals(j.at("im"), where + "/im") : std::vector<double>(re.size(), 0.0);
  if (re.size() != static_cast<std::size_t>(r * c)) throw SchemaError(where + ": re has wrong length");
  if (im.size() != re.size()) throw SchemaError(where + ": re/im length mismatch");
  ComplexMatrix m(r, c);
  for (Eigen::Index a = 0; a < r; ++a)
    for (Eigen::Index b = 0; b < c; ++b) {
      const std::size_t k = static_cast<std::size_t>(a * c + b);
      if (!std::isfinite(re[k]) || !std::isfinite(im[k])) throw SchemaError(where + ": non-finite entry");
      m(a, b) = cplx(re[k], im[k]);
    }
  return m;
}

std::vector<ComplexMatrix> matrices(const json& j, const std::string& where) {
  if (!j.is_array()) throw SchemaError(where + ": expected an array of matrices");
  std::vector<ComplexMatrix> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(matrix(j[i], where + "/" + std::to_string(i)));
  return out;
}

json matrix_json(const ComplexMatrix& m) {
  json re = json::array(), im = json::array();
  for (Eigen::Index a = 0; a < m.rows(); ++a)
    for (Eigen::Index b = 0; b < m.cols(); ++b) {
      re.push_back(m(a, b).real());
      im.push_back(m(a, b).imag());
    }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"re", re}, {"im", im}};
}

json real_matrix_json(const RealMatrix& m) { return matrix_json(m.cast<cplx>()); }

json cplx_json(cplx z) { return json::array({z.real(), z.imag()}); }

// Form: {d, terms: [{indices: [1-based...], re, im}]}
clifford::Form form(const json& j, unsigned d, const std::string& where) {
  clifford::Form f(d);
  if (j.is_number()) return clifford::Form::scalar(d, j.get<double>());
  const json& terms = need(j, "terms", where);
  if (!terms.is_array()) throw SchemaError(where + "/terms: expected an array");
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const std::string w = where + "/terms/" + std::to_string(i);
    std::vector<unsigned> idx;
    for (double x : reals(need(terms[i], "indices", w), w + "/indices")) {
      if (x < 1 || x > d || x != std::floor(x)) throw SchemaError(w + ": index out of range");
      idx.push_back(static_cast<unsigned>(x));
    }
    // wedge in the listed order so the sign follows the given ordering
    clifford::Form mono = clifford::Form::scalar(d, 1.0);
    for (unsigned k : idx) mono = wedge(mono, clifford::Form::generator(d, k));
    const double re = terms[i].contains("re") ? num(terms[i]["re"], w + "/re") : 0.0;
    const double im = terms[i].contains("im") ? num(terms[i]["im"], w + "/im") : 0.0;
    f += cplx(re, im) * mono;
  }
  return f;
}

jlo::Chain chain(const json& j, unsigned d, const std::string& where) {
  if (!j.is_array() || j.empty()) throw SchemaError(where + ": expected a non-empty array of chain entries");
  jlo::Chain c;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string w = where + "/" + std::to_string(i);
    const clifford::Form p = j[i].contains("prime") ? form(j[i]["prime"], d, w + "/prime") : clifford::Form(d);
    const clifford::Form q =
        j[i].contains("doubleprime") ? form(j[i]["doubleprime"], d, w + "/doubleprime") : clifford::Form(d);
    c.push_back({p, q});
  }
  return c;
}

clifford::FormMatrix curvature(const json& j, unsigned d, const std::string& where) {
  std::vector<clifford::CurvatureEntry> entries;
  if (!j.is_array()) throw SchemaError(where + ": expected an array of {i, j, form}");
  for (std::size_t k = 0; k < j.size(); ++k) {
    const std::string w = where + "/" + std::to_string(k);
    const auto i = static_cast<unsigned>(num(need(j[k], "i", w), w + "/i"));
    const auto jj = static_cast<unsigned>(num(need(j[k], "j", w), w + "/j"));
    entries.push_back({i, jj, form(need(j[k], "form", w), d, w + "/form")});
  }
  return clifford::curvature_matrix(d, entries);
}

json form_json(const clifford::Form& f) {
  json terms = json::array();
  for (const auto& [mask, c] : f.terms()) {
    json idx = json::array();
    for (unsigned k = 0; k < f.generators(); ++k)
      if (mask & (1u << k)) idx.push_back(k + 1);
    terms.push_back({{"indices", idx}, {"re", c.real()}, {"im", c.imag()}});
  }
  return {{"d", f.generators()}, {"terms", terms}};
}

mc::TorusModel torus(const json& cfg) {
  mc::TorusModel m;
  m.d = static_cast<unsigned>(num(need(cfg, "d", "config"), "config/d"));
  m.r = static_cast<Eigen::Index>(num(need(cfg, "r", "config"), "config/r"));
  m.A = cfg.contains("A") ? matrices(cfg["A"], "config/A")
                          : std::vector<ComplexMatrix>(m.d, ComplexMatrix::Zero(m.r, m.r));
  m.W = cfg.contains("W") ? matrix(cfg["W"], "config/W") : ComplexMatrix::Zero(m.r, m.r);
  if (cfg.contains("perturbations")) {
    const json& ps = cfg["perturbations"];
    if (!ps.is_array()) throw SchemaError("config/perturbations: expected an array");
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const std::string w = "config/perturbations/" + std::to_string(i);
      mc::PerturbationSpec p;
      p.S = ps[i].contains("S") ? matrices(ps[i]["S"], w + "/S")
                                : std::vector<ComplexMatrix>(m.d, ComplexMatrix::Zero(m.r, m.r));
      p.V = ps[i].contains("V") ? matrix(ps[i]["V"], w + "/V") : ComplexMatrix::Zero(m.r, m.r);
      m.perturbations.push_back(std::move(p));
    }
  }
  m.validate();
  return m;
}

std::vector<double> parse_grid(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw SchemaError("--t-grid: cannot parse '" + tok + "'");
    }
  }
  if (out.empty()) throw SchemaError("--t-grid: empty list");
  return out;
}

// Times from --t-grid, --t, config "t_grid" / "t", or the fallback.
std::vector<double> times(const Flags& f, const json& cfg, std::vector<double> fallback) {
  if (!f.t_grid.empty()) return parse_grid(f.t_grid);
  if (f.t) return {*f.t};
  if (cfg.contains("t_grid")) return reals(cfg["t_grid"], "config/t_grid");
  if (cfg.contains("t")) return {num(cfg["t"], "config/t")};
  return fallback;
}

template <class T>
T pick(const std::optional<T>& flag, const json& cfg, const std::string& key, T fallback) {
  if (flag) return *flag;
  if (cfg.contains(key)) return static_cast<T>(num(cfg[key], "config/" + key));
  return fallback;
}

// ---------------------------------------------------------------------------
// Reports

struct Report {
  json doc;
  json verdicts = json::array();
  std::vector<std::string> csv;

  Report(const std::string& command, const json& cfg, std::uint64_t seed) {
    doc["command"] = command;
    doc["config"] = cfg;
    doc["seed"] = seed;
    doc["versions"] = {{"dysonctl", kVersion},
                       {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                     "." + std::to_string(EIGEN_MINOR_VERSION)}};
    doc["results"] = json::object();
  }

  void verdict(const std::string& name, double value, double target, double tol, bool pass) {
    verdicts.push_back({{"name", name}, {"value", value}, {"target", target}, {"tolerance", tol},
                        {"verdict", pass ? "pass" : "fail"}});
  }

  bool all_pass() const {
    for (const auto& v : verdicts)
      if (v["verdict"] != "pass") return false;
    return true;
  }
};

int finish(Report& r, const Flags& f) {
  r.doc["verdicts"] = r.verdicts;
  r.doc["all_pass"] = r.all_pass();
  const std::string text = r.doc.dump(2) + "\n";
  if (f.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream(f.out) << text;
    if (!r.csv.empty()) {
      std::ofstream csv(f.out + ".csv");
      for (const auto& line : r.csv) csv << line << '\n';
    }
  }
  if (f.out.empty() && !r.csv.empty())
    for (const auto& line : r.csv) std::cerr << line << '\n';
  if (!r.all_pass()) {
    std::cerr << "failed verdicts:";
    for (const auto& v : r.verdicts)
      if (v["verdict"] != "pass") std::cerr << " " << v["name"].get<std::string>();
    std::cerr << '\n';
    return 1;
  }
  return 0;
}

std::string csv_num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_phi(const Flags& f) {
  const json cfg = load_config(f.config);
  const HermitianOperator H(matrix(need(cfg, "H", "config"), "config/H"));
  const auto P = cfg.contains("P") ? matrices(cfg["P"], "config/P") : std::vector<ComplexMatrix>{};
  std::vector<double> ex;
  if (cfg.contains("exponents")) ex = reals(cfg["exponents"], "config/exponents");
  const OperatorFamily fam(H, P, ex);
  const auto ts = times(f, cfg, {0.5});
  const std::size_t nodes = cfg.contains("nodes") ? static_cast<std::size_t>(num(cfg["nodes"], "config/nodes")) : 32;
  const std::size_t steps = f.steps.value_or(cfg.contains("steps") ? static_cast<std::size_t>(num(cfg["steps"], "config/steps")) : 4096);
  std::vector<PhiMethod> methods;
  if (f.method == "all") methods = {PhiMethod::fermionic, PhiMethod::quadrature, PhiMethod::ode};
  else if (f.method == "fermionic") methods = {PhiMethod::fermionic};
  else if (f.method == "quadrature") methods = {PhiMethod::quadrature};
  else if (f.method == "ode") methods = {PhiMethod::ode};
  else throw SchemaError("--method must be quadrature, fermionic, ode or all");

  Report r("phi", cfg, f.seed.value_or(0));
  json runs = json::array();
  r.csv.push_back("t,method,op_norm,max_rel_dev");
  for (double t : ts) {
    json vals = json::object();
    std::vector<ComplexMatrix> v;
    for (auto m : methods) {
      v.push_back(phi_evaluate(fam, t, m, nodes, steps).value);
      vals[to_string(m)] = matrix_json(v.back());
    }
    double dev = 0.0;
    for (std::size_t a = 0; a < v.size(); ++a)
      for (std::size_t b = a + 1; b < v.size(); ++b)
        dev = std::max(dev, selftest::detail::rel_dev(v[a], v[b]));
    const auto bound = norm_bound_check(fam, t);
    runs.push_back({{"t", t}, {"values", vals}, {"max_pairwise_rel_dev", dev}, {"norm_bound", {{"lhs", bound.lhs}, {"rhs", bound.rhs}}}});
    if (v.size() > 1) r.verdict("cross-method agreement t=" + csv_num(t), dev, 0.0, 1e-6, dev <= 1e-6);
    r.verdict("norm bound t=" + csv_num(t), bound.lhs, bound.rhs, 0.0, bound.holds);
    for (std::size_t k = 0; k < methods.size(); ++k)
      r.csv.push_back(csv_num(t) + "," + to_string(methods[k]) + "," + csv_num(linalg::op_norm(v[k])) + "," + csv_num(dev));
  }
  r.doc["results"]["runs"] = runs;
  if (ts.size() < 2) r.csv.clear();
  return finish(r, f);
}

int cmd_jlo(const Flags& f) {
  const json cfg = load_config(f.config);
  const unsigned d = static_cast<unsigned>(num(need(cfg, "d", "config"), "config/d"));
  const std::string model = cfg.value("model", std::string("flat"));
  jlo::FredholmModule mod;
  if (model == "flat") {
    mod = jlo::make_flat_torus_module(d, f.truncation);
  } else if (model == "finite") {
    const auto rep = clifford::build_spinor_rep(d);
    const Eigen::Index mult = cfg.contains("multiplicity") ? static_cast<Eigen::Index>(num(cfg["multiplicity"], "config/multiplicity")) : 1;
    mod = jlo::make_finite_module(rep, matrix(need(cfg, "D", "config"), "config/D"), mult);
  } else {
    throw SchemaError("config/model: expected 'flat' or 'finite'");
  }
  const jlo::Chain ch = chain(need(cfg, "chain", "config"), d, "config/chain");
  const auto ts = times(f, cfg, jlo::geometric_sequence(0.1, 3));
  Report r("jlo", cfg, f.seed.value_or(0));
  json vals = json::array();
  r.csv.push_back("t,re,im");
  for (double t : ts) {
    const cplx v = jlo::chern_eval(mod, ch, t);
    vals.push_back({{"t", t}, {"value", cplx_json(v)}});
    r.csv.push_back(csv_num(t) + "," + csv_num(v.real()) + "," + csv_num(v.imag()));
  }
  r.doc["results"]["values"] = vals;
  if (model == "flat" && ts.size() >= 2) {
    const auto ex = jlo::small_time_limit(mod, ch, ts);
    r.doc["results"]["extrapolated"] = cplx_json(ex.extrapolated);
    r.doc["results"]["target"] = cplx_json(ex.target);
    const double err = std::abs(ex.extrapolated - ex.target);
    const double scale = std::abs(ex.target);
    if (scale > 0.0)
      r.verdict("small-time limit relative error", err / scale, 0.0, 0.02, err <= 0.02 * scale);
    else
      r.verdict("small-time limit absolute error", err, 0.0, 1e-8, err <= 1e-8);
  }
  if (ts.size() < 2) r.csv.clear();
  return finish(r, f);
}

int cmd_patodi(const Flags& f) {
  const json cfg = load_config(f.config);
  const std::uint64_t seed = f.seed.value_or(cfg.value("seed", 0ull));
  std::vector<double> dims{2, 4, 6};
  if (cfg.contains("d")) dims = {num(cfg["d"], "config/d")};
  const int samples = cfg.contains("samples") ? static_cast<int>(num(cfg["samples"], "config/samples")) : 50;
  Report r("patodi", cfg, seed);
  json res = json::array();
  for (double dd : dims) {
    const auto d = static_cast<unsigned>(dd);
    const auto rep = clifford::build_spinor_rep(d);
    Stream rng(seed, 600 + d);
    double low = 0.0, top = 0.0;
    for (int k = 0; k < samples; ++k) {
      const std::size_t order = rep.l > 1 ? static_cast<std::size_t>(rng.next_u64() % rep.l) : 0;
      clifford::Word w;
      for (std::size_t j = 0; j < order; ++j) w.push_back(selftest::detail::rand_antisym(rng, d));
      low = std::max(low, clifford::patodi_vanishing(rep, w));
    }
    for (int k = 0; k < samples; ++k) {
      clifford::Word w;
      for (unsigned j = 0; j < rep.l; ++j) w.push_back(selftest::detail::rand_antisym(rng, d));
      top = std::max(top, clifford::patodi_top_identity(rep, w).residual);
    }
    res.push_back({{"d", d}, {"sigma", rep.sigma}, {"max_low_order_str", low}, {"max_top_residual", top}});
    r.verdict("d=" + std::to_string(d) + " low-order supertrace", low, 0.0, 1e-10, low <= 1e-10);
    r.verdict("d=" + std::to_string(d) + " top identity", top, 0.0, 1e-10, top <= 1e-10);
  }
  r.doc["results"]["runs"] = res;
  return finish(r, f);
}

int cmd_ahat(const Flags& f) {
  const json cfg = load_config(f.config);
  const unsigned d = static_cast<unsigned>(num(need(cfg, "d", "config"), "config/d"));
  const auto om = curvature(need(cfg, "curvature", "config"), d, "config/curvature");
  Report r("ahat", cfg, f.seed.value_or(0));
  r.doc["results"]["a_hat"] = form_json(clifford::a_hat_series(om, d));
  return finish(r, f);
}

int cmd_fk(const Flags& f) {
  const json cfg = load_config(f.config);
  const mc::TorusModel m = torus(cfg);
  const std::uint64_t seed = f.seed.value_or(cfg.value("seed", 0ull));
  const auto x = reals(need(cfg, "x", "config"), "config/x");
  const auto y = reals(need(cfg, "y", "config"), "config/y");
  const std::size_t paths = pick<std::size_t>(f.paths, cfg, "paths", 100000);
  const std::size_t steps = pick<std::size_t>(f.steps, cfg, "steps", 512);
  std::optional<int> K = f.truncation;
  if (!K && cfg.contains("K")) K = static_cast<int>(num(cfg["K"], "config/K"));
  const auto ts = times(f, cfg, {0.5});
  Report r("fk", cfg, seed);
  json runs = json::array();
  r.csv.push_back("t,i,j,estimate_re,estimate_im,stderr,oracle_re,oracle_im,z");
  for (double t : ts) {
    const auto fk = mc::fk_estimate(m, t, x, y, paths, steps, seed, f.workers);
    const auto oracle = mc::spectral_phi_kernel(m, t, x, y, K);
    RealMatrix z(m.r, m.r);
    for (Eigen::Index i = 0; i < m.r; ++i)
      for (Eigen::Index j = 0; j < m.r; ++j) {
        const double err = std::abs(fk.estimate(i, j) - oracle.value(i, j));
        // zero-variance estimators (e.g. no connection or perturbation) are compared up to round-off
        z(i, j) = err <= kRoundoff * std::max(1.0, oracle.value.norm()) ? 0.0 : err / fk.stderr_(i, j);
        r.verdict("t=" + csv_num(t) + " entry (" + std::to_string(i) + "," + std::to_string(j) + ") z-score", z(i, j), 0.0,
                  3.0, z(i, j) <= 3.0);
        r.csv.push_back(csv_num(t) + "," + std::to_string(i) + "," + std::to_string(j) + "," +
                        csv_num(fk.estimate(i, j).real()) + "," + csv_num(fk.estimate(i, j).imag()) + "," +
                        csv_num(fk.stderr_(i, j)) + "," + csv_num(oracle.value(i, j).real()) + "," +
                        csv_num(oracle.value(i, j).imag()) + "," + csv_num(z(i, j)));
      }
    runs.push_back({{"t", t},
                    {"paths", paths},
                    {"steps", steps},
                    {"estimate", matrix_json(fk.estimate)},
                    {"stderr", real_matrix_json(fk.stderr_)},
                    {"oracle", matrix_json(oracle.value)},
                    {"truncation", oracle.truncation},
                    {"tail_estimate", oracle.tail_estimate},
                    {"z_scores", real_matrix_json(z)}});
  }
  r.doc["results"]["runs"] = runs;
  if (ts.size() < 2) r.csv.clear();
  return finish(r, f);
}

int cmd_levy(const Flags& f) {
  const json cfg = load_config(f.config);
  const unsigned d = static_cast<unsigned>(num(need(cfg, "d", "config"), "config/d"));
  const auto om = cfg.contains("curvature") ? curvature(cfg["curvature"], d, "config/curvature")
                                            : clifford::curvature_matrix(d, {});
  const std::uint64_t seed = f.seed.value_or(cfg.value("seed", 0ull));
  const std::size_t paths = pick<std::size_t>(f.paths, cfg, "paths", 100000);
  const std::size_t steps = pick<std::size_t>(f.steps, cfg, "steps", 256);
  const auto est = mc::levy_area_estimate(om, d, paths, steps, seed, f.workers);
  const auto ah = clifford::a_hat_series(om, d);
  Report r("levy-area", cfg, seed);
  r.doc["results"]["estimate"] = form_json(est);
  r.doc["results"]["a_hat"] = form_json(ah);
  const grassmann::Mask top = (grassmann::Mask{1} << d) - 1;
  const double err = std::abs(est.coeff(top) - ah.coeff(top));
  const double tol = 0.01 * std::max(ah.max_abs(), 1.0);
  r.verdict("top coefficient", est.coeff(top).real(), ah.coeff(top).real(), tol, err <= tol);
  return finish(r, f);
}

int cmd_localize(const Flags& f) {
  const json cfg = load_config(f.config);
  const unsigned d = static_cast<unsigned>(num(need(cfg, "d", "config"), "config/d"));
  const jlo::Chain ch = chain(need(cfg, "chain", "config"), d, "config/chain");
  const auto ts = times(f, cfg, jlo::geometric_sequence(0.1, 3));
  const std::uint64_t seed = f.seed.value_or(cfg.value("seed", 0ull));
  std::optional<std::size_t> paths = f.paths;
  if (!paths && cfg.contains("paths")) paths = static_cast<std::size_t>(num(cfg["paths"], "config/paths"));
  const std::size_t steps = pick<std::size_t>(f.steps, cfg, "steps", 256);
  if (ts.size() < 2) throw SchemaError("localize: need at least two times");
  const auto loc = mc::localization_check(d, ch, ts, paths, seed, steps, f.workers);
  Report r("localize", cfg, seed);
  json vals = json::array();
  r.csv.push_back("t,re,im");
  for (std::size_t i = 0; i < ts.size(); ++i) {
    vals.push_back({{"t", ts[i]}, {"value", cplx_json(loc.values[i])}});
    r.csv.push_back(csv_num(ts[i]) + "," + csv_num(loc.values[i].real()) + "," + csv_num(loc.values[i].imag()));
  }
  r.doc["results"]["values"] = vals;
  r.doc["results"]["extrapolated"] = cplx_json(loc.extrapolated);
  r.doc["results"]["target"] = cplx_json(loc.target);
  const double err = std::abs(loc.extrapolated - loc.target), scale = std::abs(loc.target);
  if (scale > 0.0)
    r.verdict("relative error vs target", err / scale, 0.0, 0.02, err <= 0.02 * scale);
  else
    r.verdict("absolute error vs target", err, 0.0, 1e-8, err <= 1e-8);
  if (loc.mc_value) {
    r.doc["results"]["monte_carlo"] = {{"t", *loc.mc_t}, {"value", cplx_json(*loc.mc_value)}, {"stderr", *loc.mc_stderr}};
    const double err = std::abs(*loc.mc_value - loc.values.back());
    const double z = err <= kRoundoff * std::max(1.0, std::abs(loc.values.back())) ? 0.0 : err / *loc.mc_stderr;
    r.verdict("Monte Carlo vs spectral z-score", z, 0.0, 3.0, z <= 3.0);
  }
  return finish(r, f);
}

int cmd_bridge(const Flags& f) {
  const json cfg = load_config(f.config);
  const double t = f.t.value_or(cfg.contains("t") ? num(cfg["t"], "config/t") : 2.0);
  const double x = cfg.contains("x") ? num(cfg["x"], "config/x") : 1.0;
  const double y = cfg.contains("y") ? num(cfg["y"], "config/y") : 5.0;
  const std::uint64_t seed = f.seed.value_or(cfg.value("seed", 0ull));
  const std::size_t samples = pick<std::size_t>(f.paths, cfg, "samples", 100000);
  const std::size_t steps = pick<std::size_t>(f.steps, cfg, "steps", 64);
  const std::size_t bins = cfg.contains("bins") ? static_cast<std::size_t>(num(cfg["bins"], "config/bins")) : 40;
  const auto res = mc::bridge_law_test(t, x, y, samples, seed, steps, bins);
  Report r("bridge-test", cfg, seed);
  r.doc["results"] = {{"chi2", res.chi2}, {"dof", res.dof}, {"p_value", res.p_value},
                      {"observed", res.observed}, {"expected", res.expected}};
  r.verdict("chi-square p-value", res.p_value, 0.01, 0.0, res.p_value >= 0.01);
  r.verdict("endpoints pinned", res.endpoints_pinned ? 1.0 : 0.0, 1.0, 0.0, res.endpoints_pinned);
  return finish(r, f);
}

int cmd_selftest(const Flags& f) {
  selftest::Options o;
  o.seed = f.seed.value_or(0);
  o.workers = f.workers;
  o.reduced = f.reduced;
  auto print = [](const selftest::Criterion& c) { std::cout << selftest::verdict_line(c) << std::endl; };
  auto cs = selftest::run_numeric(o, print);
  if (!f.reduced) {
    const auto t0 = std::chrono::steady_clock::now();
    auto rep = selftest::reproducibility(o, std::max(2u, f.workers));
    rep.seconds = selftest::detail::seconds_since(t0);
    print(rep);
    cs.push_back(std::move(rep));
  }
  const json doc = selftest::report(o, cs);
  if (!f.out.empty()) std::ofstream(f.out) << doc.dump(2) << '\n';
  return doc["all_pass"].get<bool>() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dysonctl: iterated operator integrals, JLO cocycles and Feynman-Kac checks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Flags f;
  auto common = [&](CLI::App* s) {
    s->add_option("--config", f.config, "JSON configuration file");
    s->add_option("--out", f.out, "report path (JSON); sweeps also write PATH.csv");
    s->add_option("--seed", f.seed, "64-bit RNG seed");
    s->add_option("--t", f.t, "time");
    s->add_option("--t-grid", f.t_grid, "comma-separated times");
    s->add_option("--paths", f.paths, "Monte Carlo paths")->check(CLI::PositiveNumber);
    s->add_option("--steps", f.steps, "time steps per path")->check(CLI::PositiveNumber);
    s->add_option("--truncation", f.truncation, "Fourier mode cutoff K")->check(CLI::NonNegativeNumber);
    s->add_option("--workers", f.workers, "worker threads")->check(CLI::PositiveNumber);
  };
  auto* phi = app.add_subcommand("phi", "evaluate Phi_t(P_1..P_n)");
  common(phi);
  phi->add_option("--method", f.method, "quadrature|fermionic|ode|all");
  auto* jl = app.add_subcommand("jlo", "evaluate the JLO cocycle on a chain");
  jl->add_subcommand("eval", "evaluate Ch(M_t) on a chain")->fallthrough();
  common(jl);
  auto* pat = app.add_subcommand("patodi", "Patodi vanishing and top identity");
  common(pat);
  auto* ah = app.add_subcommand("ahat", "A-hat form of a curvature matrix");
  common(ah);
  auto* fk = app.add_subcommand("fk", "Feynman-Kac estimate vs spectral oracle");
  common(fk);
  auto* lv = app.add_subcommand("levy-area", "E[exp J] vs A-hat");
  common(lv);
  auto* lo = app.add_subcommand("localize", "stochastic localisation small-time limit");
  common(lo);
  auto* br = app.add_subcommand("bridge-test", "chi-square test of the bridge midpoint law");
  common(br);
  auto* st = app.add_subcommand("selftest", "run the acceptance suite");
  common(st);
  st->add_flag("--reduced", f.reduced, "small sample sizes, no reproducibility rerun");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    if (*phi) return cmd_phi(f);
    if (*jl) return cmd_jlo(f);
    if (*pat) return cmd_patodi(f);
    if (*ah) return cmd_ahat(f);
    if (*fk) return cmd_fk(f);
    if (*lv) return cmd_levy(f);
    if (*lo) return cmd_localize(f);
    if (*br) return cmd_bridge(f);
    if (*st) return cmd_selftest(f);
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
