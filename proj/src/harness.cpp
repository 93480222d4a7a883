#include "varex/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <sstream>
#include <stdexcept>

namespace varex {

namespace {

Region cylinder_region(const Cylinder& c) {
  return [c](const Eigen::VectorXd& x) { return c.contains(x); };
}

DiscreteVarifold merge(DiscreteVarifold base, const DiscreteVarifold& extra) {
  base.reserve(base.size() + extra.size());
  for (const Atom& a : extra.atoms()) base.add(a);
  return base;
}

double atom_mass(const Atom& a) { return a.multiplicity * a.weight; }

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ';';
    out += tokens[i];
  }
  return out;
}

double parse_double(const std::string& text) {
  const char* s = text.c_str();
  char* end = nullptr;
  const double x = std::strtod(s, &end);
  if (end == s) throw std::invalid_argument("bad number: " + text);
  return x;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::string kv_line(const std::string& key, const std::string& value) {
  return key + "=" + value + "\n";
}

std::string summary_text(
    const std::vector<std::pair<std::string, std::string>>& summary) {
  std::string out;
  for (const auto& [k, v] : summary) out += kv_line(k, v);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Plumbing.
// ---------------------------------------------------------------------------

DiscreteVarifold restrict_atoms(const DiscreteVarifold& v,
                                const std::vector<int>& indices) {
  DiscreteVarifold out(v.n(), v.m(), v.mesh_scale());
  out.reserve(indices.size());
  for (int i : indices) {
    if (i < 0 || static_cast<size_t>(i) >= v.size())
      throw std::out_of_range("restrict_atoms: index out of range");
    out.add(v.atoms()[static_cast<size_t>(i)]);
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// ExperimentConfig.
// ---------------------------------------------------------------------------

namespace {

void apply_config_key(ExperimentConfig& c, const std::string& key,
                      double value) {
  if (key == "q") {
    c.q = value;
  } else if (key == "q1") {
    c.q1 = value;
  } else if (key == "q2") {
    c.q2 = value;
  } else if (key == "alpha") {
    c.alpha = value;
  } else if (key == "p") {
    c.p = value;
  } else if (key == "r0") {
    c.r0 = value;
  } else if (key == "levels") {
    c.levels = static_cast<int>(std::lround(value));
  } else if (key == "dx") {
    c.dx = value;
  } else if (key == "eps") {
    c.eps = value;
  } else if (key == "eps1") {
    c.eps1 = value;
  } else if (key == "delta") {
    c.delta = value;
  } else if (key == "M") {
    c.M = value;
  } else if (key == "gamma") {
    c.constants.isoperimetric_gamma = value;
  } else if (key == "besicovitch") {
    c.constants.besicovitch = value;
  } else {
    throw std::invalid_argument("unknown config key: " + key);
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_kv(const std::string& text) {
  ExperimentConfig c;
  c.merge_kv(text);
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  return from_kv(read_text_file(path));
}

void ExperimentConfig::merge_kv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line without '=': " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    apply_config_key(*this, key, parse_double(value));
  }
}

std::string ExperimentConfig::to_kv() const {
  std::string out;
  out += kv_line("q", g17(q));
  out += kv_line("q1", g17(q1));
  out += kv_line("q2", g17(q2));
  out += kv_line("alpha", g17(alpha));
  out += kv_line("p", g17(p));
  out += kv_line("r0", g17(r0));
  out += kv_line("levels", std::to_string(levels));
  out += kv_line("dx", g17(dx));
  out += kv_line("eps", g17(eps));
  out += kv_line("eps1", g17(eps1));
  out += kv_line("delta", g17(delta));
  out += kv_line("M", g17(M));
  out += kv_line("gamma", g17(constants.isoperimetric_gamma));
  out += kv_line("besicovitch", g17(constants.besicovitch));
  return out;
}

void ExperimentConfig::validate(int n, bool limit_mode) const {
  if (!(q >= 1.0)) throw std::invalid_argument("config: q must be >= 1");
  if (!(q1 >= 1.0)) throw std::invalid_argument("config: q1 must be >= 1");
  if (!(q2 >= 1.0)) throw std::invalid_argument("config: q2 must be >= 1");
  if (!(alpha > 0.0) || alpha > 1.0)
    throw std::invalid_argument("config: alpha must lie in (0, 1]");
  if (!(p >= 1.0) || p > n)
    throw std::invalid_argument("config: p must lie in [1, n]");
  if (!(r0 > 0.0)) throw std::invalid_argument("config: r0 must be > 0");
  if (levels < 1) throw std::invalid_argument("config: levels must be >= 1");
  if (!(dx > 0.0)) throw std::invalid_argument("config: dx must be > 0");
  if (!(eps > 0.0)) throw std::invalid_argument("config: eps must be > 0");
  if (!(eps1 > 0.0) || eps1 > eps)
    throw std::invalid_argument("config: need 0 < eps1 <= eps");
  if (!(delta > 0.0) || delta > 1.0)
    throw std::invalid_argument("config: delta must lie in (0, 1]");
  if (!(M >= 1.0)) throw std::invalid_argument("config: M must be >= 1");
  if (limit_mode) {
    double bound = kInf;
    if (q1 < n) bound = std::min(bound, n * q1 / (n - q1));
    if (p < n) bound = std::min(bound, (1.0 / alpha) * n * p / (n - p));
    if (q2 > bound * (1.0 + 1e-12))
      throw std::invalid_argument(
          "config: q2 exceeds min{n q1/(n-q1), (1/alpha) n p/(n-p)}");
  }
}

ExperimentConfig default_config(const Scenario& s) {
  ExperimentConfig c;
  for (const auto& [key, value] : s.config_overrides)
    apply_config_key(c, key, value);
  return c;
}

// ---------------------------------------------------------------------------
// Scenario registry.
// ---------------------------------------------------------------------------

namespace {

Plane horizontal3() { return Plane::coordinate(3, {0, 1}); }

Plane graph_tangent(double gx, double gy) {
  Eigen::MatrixXd cols(3, 2);
  cols.col(0) << 1.0, 0.0, gx;
  cols.col(1) << 0.0, 1.0, gy;
  return Plane::span_of(cols);
}

ProbePoint probe_at(double x, double y, double z, int density,
                    const Plane& tangent) {
  ProbePoint p;
  p.point = Eigen::Vector3d(x, y, z);
  p.density = density;
  p.tangent = tangent;
  return p;
}

std::vector<Scenario> build_registry() {
  std::vector<Scenario> reg;
  const Plane flat = horizontal3();

  {
    Scenario s;
    s.name = "plane";
    s.summary = "unit-multiplicity horizontal plane";
    s.build = [](double mesh) { return gen_plane(2, 1, mesh, 2.5); };
    s.is_stationary = true;
    s.plane_layers = true;
    s.probes = {probe_at(0, 0, 0, 1, flat)};
    s.seed = 101;
    reg.push_back(std::move(s));
  }
  {
    Scenario s;
    s.name = "plane_q2";
    s.summary = "two parallel horizontal planes at heights -0.3 and 0.3";
    s.build = [](double mesh) {
      return gen_parallel_planes(2, 1, mesh, 2.5, {-0.3, 0.3});
    };
    s.is_stationary = true;
    s.plane_layers = true;
    s.probes = {probe_at(0, 0, -0.3, 1, flat), probe_at(0, 0, 0.3, 1, flat)};
    s.seed = 102;
    reg.push_back(std::move(s));
  }
  {
    const double slope = std::tan(0.02);
    Scenario s;
    s.name = "tilted_plane";
    s.summary = "plane tilted by 0.02 radians about the second base axis";
    s.build = [slope](double mesh) {
      return gen_graph(
          2, mesh, 2.5,
          [slope](const Eigen::VectorXd& x) { return slope * x(0); },
          [slope](const Eigen::VectorXd& x) {
            (void)x;
            return Eigen::Vector2d(slope, 0.0);
          },
          [](const Eigen::VectorXd& x) {
            (void)x;
            return Eigen::MatrixXd::Zero(2, 2).eval();
          });
    };
    s.is_stationary = true;
    s.plane_layers = true;
    s.probes = {probe_at(0, 0, 0, 1, graph_tangent(slope, 0.0))};
    s.seed = 103;
    reg.push_back(std::move(s));
  }
  {
    const double amp = 0.02, freq = 2.0;
    Scenario s;
    s.name = "sine_graph";
    s.summary = "small sine wave graph over the horizontal plane";
    s.build = [amp, freq](double mesh) {
      return gen_graph(
          2, mesh, 2.5,
          [amp, freq](const Eigen::VectorXd& x) {
            return amp * std::sin(freq * x(0));
          },
          [amp, freq](const Eigen::VectorXd& x) {
            return Eigen::Vector2d(amp * freq * std::cos(freq * x(0)), 0.0);
          },
          [amp, freq](const Eigen::VectorXd& x) {
            Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2, 2);
            h(0, 0) = -amp * freq * freq * std::sin(freq * x(0));
            return h;
          });
    };
    s.is_stationary = false;
    s.probes = {probe_at(0, 0, 0, 1, graph_tangent(amp * freq, 0.0))};
    s.seed = 104;
    reg.push_back(std::move(s));
  }
  {
    // Like sine_graph but with curvature mass small enough that the
    // first-variation budget eps * r^(n-1) genuinely holds: integrating
    // |u''| ~ amp over the disc of radius 3 r0 gives about 0.023 against
    // the default budget 0.08.
    const double amp = 0.002, phase = 0.7;
    Scenario s;
    s.name = "sine_gentle";
    s.summary = "very low sine wave inside every smallness budget";
    s.build = [amp, phase](double mesh) {
      return gen_graph(
          2, mesh, 2.5,
          [amp, phase](const Eigen::VectorXd& x) {
            return amp * std::sin(x(0) + phase);
          },
          [amp, phase](const Eigen::VectorXd& x) {
            return Eigen::Vector2d(amp * std::cos(x(0) + phase), 0.0);
          },
          [amp, phase](const Eigen::VectorXd& x) {
            Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2, 2);
            h(0, 0) = -amp * std::sin(x(0) + phase);
            return h;
          });
    };
    s.is_stationary = false;
    s.probes = {probe_at(0, 0, amp * std::sin(phase), 1,
                         graph_tangent(amp * std::cos(phase), 0.0))};
    s.seed = 111;
    reg.push_back(std::move(s));
  }
  {
    // The wobble must be gentle enough that the averaged tilt over the
    // enlarged cylinder stays below the default smallness budget eps = 0.1.
    const double base = 0.25, amp = 0.008;
    Scenario s;
    s.name = "qgraph_wavy";
    s.summary = "two gently waving sheets around heights -0.25 and 0.25";
    s.build = [base, amp](double mesh) {
      GridSpec grid(2, mesh, 2.5, Eigen::VectorXd::Zero(2),
                    0.5 * mesh * Eigen::VectorXd::Ones(2));
      auto wave = [base, amp](double sign) {
        return [base, amp, sign](const Eigen::VectorXd& x) {
          Eigen::VectorXd v(1);
          v(0) = sign * (base + amp * std::sin(2.0 * x(0) + 1.0) *
                                    std::cos(x(1)));
          return v;
        };
      };
      const QField field =
          qfield_from_branches(grid, 1, {wave(-1.0), wave(1.0)});
      return gen_qgraph(field);
    };
    s.is_stationary = true;  // the samples carry zero curvature data
    const double gx = 2.0 * amp * std::cos(1.0);
    s.probes = {probe_at(0, 0, base + amp * std::sin(1.0), 1,
                         graph_tangent(gx, 0.0))};
    s.seed = 105;
    reg.push_back(std::move(s));
  }
  {
    const double c2 = 0.1;
    Scenario s;
    s.name = "c2_graph";
    s.summary = "quadratic bowl graph 0.1 |x|^2";
    s.build = [c2](double mesh) {
      return gen_graph(
          2, mesh, 1.0,
          [c2](const Eigen::VectorXd& x) { return c2 * x.squaredNorm(); },
          [c2](const Eigen::VectorXd& x) {
            return (2.0 * c2 * x).eval();
          },
          [c2](const Eigen::VectorXd& x) {
            (void)x;
            return (2.0 * c2 * Eigen::MatrixXd::Identity(2, 2)).eval();
          });
    };
    s.is_stationary = false;
    s.probes = {probe_at(0, 0, 0, 1, flat)};
    s.seed = 106;
    s.config_overrides = {{"r0", 0.5}, {"dx", 0.5 / 128.0}, {"levels", 5}};
    reg.push_back(std::move(s));
  }
  {
    const double slope = std::tan(0.3);
    Scenario s;
    s.name = "crossing_planes";
    s.summary = "horizontal plane plus a plane tilted by 0.3 radians";
    s.build = [slope](double mesh) {
      DiscreteVarifold v = gen_plane(2, 1, mesh, 1.1);
      return merge(std::move(v),
                   gen_graph(
                       2, mesh, 1.1,
                       [slope](const Eigen::VectorXd& x) {
                         return slope * x(0);
                       },
                       [slope](const Eigen::VectorXd& x) {
                         (void)x;
                         return Eigen::Vector2d(slope, 0.0);
                       },
                       [](const Eigen::VectorXd& x) {
                         (void)x;
                         return Eigen::MatrixXd::Zero(2, 2).eval();
                       }));
    };
    s.is_stationary = true;
    // The probe sits on the crossing line; the recorded plane is the
    // horizontal reference the decay functionals are measured against.
    s.probes = {probe_at(0, 0, 0, 2, flat)};
    s.seed = 107;
    s.config_overrides = {{"r0", 1.0}, {"dx", 0.02}, {"levels", 3}};
    reg.push_back(std::move(s));
  }
  {
    Scenario s;
    s.name = "sphere";
    s.summary = "unit sphere about the origin";
    s.build = [](double mesh) { return gen_sphere(1.0, mesh); };
    s.is_stationary = false;
    s.center = Eigen::Vector3d(1, 0, 0);
    s.axis = Plane::coordinate(3, {1, 2});
    s.probes = {probe_at(1, 0, 0, 1, Plane::coordinate(3, {1, 2}))};
    s.seed = 108;
    s.config_overrides = {{"r0", 0.4}};
    reg.push_back(std::move(s));
  }
  {
    Scenario s;
    s.name = "catenoid";
    s.summary = "catenoid sampled by arclength, truncated at |s| = 2";
    s.build = [](double mesh) { return gen_catenoid(mesh, 2.0); };
    s.is_stationary = true;
    s.center = Eigen::Vector3d(1, 0, 0);
    s.axis = Plane::coordinate(3, {1, 2});
    s.probes = {probe_at(1, 0, 0, 1, Plane::coordinate(3, {1, 2}))};
    s.seed = 109;
    s.config_overrides = {{"r0", 0.4}};
    reg.push_back(std::move(s));
  }
  {
    Scenario s;
    s.name = "plane_union_catenoid";
    s.summary =
        "horizontal plane at height 0.5 together with the catenoid through "
        "the unit waist circle";
    s.build = [](double mesh) {
      return gen_plane_union_catenoid(mesh, 3.3);
    };
    s.is_stationary = true;
    s.fixed_scale_Q = 1;
    s.emit_inner_tilt_row = true;
    s.probes = {probe_at(0, 0, 0.5, 1, flat)};
    s.seed = 110;
    s.config_overrides = {{"r0", 1.01}, {"dx", 0.04}, {"delta", 0.25},
                          {"M", 32.0}};
    reg.push_back(std::move(s));
  }
  return reg;
}

}  // namespace

const std::vector<Scenario>& scenario_registry() {
  static const std::vector<Scenario> reg = build_registry();
  return reg;
}

const Scenario& find_scenario(const std::string& name) {
  for (const Scenario& s : scenario_registry())
    if (s.name == name) return s;
  std::string known;
  for (const Scenario& s : scenario_registry()) {
    if (!known.empty()) known += ", ";
    known += s.name;
  }
  throw std::invalid_argument("unknown scenario '" + name +
                              "'; known: " + known);
}

// ---------------------------------------------------------------------------
// Fixed-scale experiment.
// ---------------------------------------------------------------------------

namespace {

double ratio_of(double lhs, double rhs) {
  if (rhs > 0.0) return lhs / rhs;
  return lhs == 0.0 ? 0.0 : kInf;
}

// (r^-n mass)^(1/q) with the sup-form convention for infinite q: the term
// degenerates to the indicator of positive mass.
double mass_power_term(double mass, double r, int n, double q) {
  if (mass <= 0.0) return 0.0;
  const double scaled = mass / std::pow(r, n);
  if (std::isinf(q)) return scaled > 0.0 ? 1.0 : 0.0;
  return std::pow(scaled, 1.0 / q);
}

}  // namespace

FixedScaleReport run_fixed_scale(const Scenario& s,
                                 const ExperimentConfig& cfg) {
  cfg.validate(s.n, false);
  const int n = s.n;
  const double r = cfg.r0;
  const double h = r;
  const double omega = Constants::unit_ball_volume(n);
  const double rn = std::pow(r, n);

  const DiscreteVarifold v = s.build(cfg.dx);
  const Cylinder inner(s.center, r, h, s.axis);
  // With h = r the enlarged cylinder of the main row (radius 3r,
  // half-height h + 2r) coincides with the curvature row's (3r, 3r) one.
  const Cylinder outer(s.center, 3.0 * r, h + 2.0 * r, s.axis);

  const double mu_c = measure(v, cylinder_region(inner));
  const int Q = s.fixed_scale_Q > 0
                    ? s.fixed_scale_Q
                    : std::max(1, static_cast<int>(std::lround(
                                      mu_c / (omega * rn))));

  // Hypothesis checks: recorded, never enforced.
  std::vector<std::string> fails;
  const double mass_lo = (Q - 1 + cfg.delta) * omega * rn;
  const double mass_hi = (Q + 1 - cfg.delta) * omega * rn;
  if (!(mass_lo <= mu_c && mu_c <= mass_hi)) fails.push_back("mass_window");
  const Cylinder slab_outer(s.center, r, h + cfg.delta * r, s.axis);
  const Cylinder slab_inner(s.center, r, h - cfg.delta * r, s.axis);
  const double slab_mass = measure(v, cylinder_region(slab_outer)) -
                           measure(v, cylinder_region(slab_inner));
  if (!(slab_mass <= (1.0 - cfg.delta) * omega * rn + 1e-12))
    fails.push_back("slab_mass");
  const double mu_outer = measure(v, cylinder_region(outer));
  if (!(mu_outer <= cfg.M * omega * rn)) fails.push_back("mass_budget");
  const double fv_outer = first_variation_norm(v, cylinder_region(outer));
  if (!(fv_outer <= cfg.eps * std::pow(r, n - 1)))
    fails.push_back("first_variation");
  const double t1_outer = t_q(v, outer, 1.0);
  if (!(t1_outer <= cfg.eps)) fails.push_back("tilt_smallness");

  ApproxParams params = ApproxParams::defaults(n, r, cfg.constants);
  params.eps = cfg.eps;
  params.eps1 = std::min(cfg.eps1, cfg.eps);
  params.M = cfg.M;
  const auto [g_idx, a_idx] = good_sets_G_A(v, inner, params, cfg.constants);
  // Accumulate exactly like measure() so that a full good set cancels the
  // cylinder mass to the last bit.
  auto index_mass = [&](const std::vector<int>& idx) {
    std::vector<double> masses;
    masses.reserve(idx.size());
    for (int i : idx)
      masses.push_back(atom_mass(v.atoms()[static_cast<size_t>(i)]));
    return pairwise_sum(masses);
  };
  const double mass_a = index_mass(a_idx);
  const double mass_g = index_mass(g_idx);
  const double bad_mass = std::max(0.0, mu_c - mass_a);

  const double q_star = cfg.q < n ? n * cfg.q / (n - cfg.q) : kInf;
  const DiscreteVarifold mu_g = restrict_atoms(v, g_idx);
  const HeightReport lhs_good = h_q_best(mu_g, inner, Q, q_star, cfg.dx);
  const HeightReport lhs_full = h_q_best(v, inner, Q, q_star, cfg.dx);

  const double tq_outer = t_q(v, outer, cfg.q);
  const double bad_term = mass_power_term(bad_mass, r, n, cfg.q);

  const std::string hyp_token = fails.empty() ? "ok" : "hyp:" + [&] {
    std::string t;
    for (size_t i = 0; i < fails.size(); ++i) {
      if (i) t += '|';
      t += fails[i];
    }
    return t;
  }();
  const std::string common = "mesh=" + g17(cfg.dx) + ";Q=" + std::to_string(Q);

  FixedScaleReport report;
  report.flagged = !fails.empty();

  {
    FixedScaleRow row;
    row.scenario = s.name;
    row.r = r;
    row.q = cfg.q;
    row.lhs = lhs_good.total;
    row.t_q = tq_outer;
    row.bad_mass_term = bad_term;
    row.ratio = ratio_of(row.lhs, row.t_q + row.bad_mass_term);
    row.flags = join_tokens({"form=main", common, hyp_token});
    report.rows.push_back(std::move(row));
  }

  // Curvature alternative: the full measure's height against the tilt plus
  // the scaled curvature mass of the enlarged cylinder.
  const double psi = cfg.p == 1.0
                         ? fv_outer
                         : hp_integrand_norm(v, cylinder_region(outer), cfg.p);
  double psi_term = 0.0;
  std::vector<std::string> psi_extra;
  if (cfg.p < n && cfg.q < n) {
    const double exponent = (n - cfg.q) / (cfg.q * (n - cfg.p));
    const double scaled = std::pow(r, cfg.p - n) * psi;
    psi_term = scaled > 0.0 ? std::pow(scaled, exponent) : 0.0;
  } else {
    // Integrability at the top exponent: the curvature term disappears but
    // the inequality needs the curvature mass itself to be small.
    if (!(psi <= std::pow(cfg.eps, n))) psi_extra.push_back("psi_large");
  }
  {
    FixedScaleRow row;
    row.scenario = s.name;
    row.r = r;
    row.q = cfg.q;
    row.lhs = lhs_full.total;
    row.t_q = tq_outer;
    row.bad_mass_term = psi_term;
    row.ratio = ratio_of(row.lhs, row.t_q + row.bad_mass_term);
    std::vector<std::string> tokens{"form=curvature", common, hyp_token};
    tokens.insert(tokens.end(), psi_extra.begin(), psi_extra.end());
    row.flags = join_tokens(tokens);
    report.rows.push_back(std::move(row));
  }

  double tq_inner = 0.0;
  if (s.emit_inner_tilt_row) {
    tq_inner = t_q(v, inner, cfg.q);
    FixedScaleRow row;
    row.scenario = s.name;
    row.r = r;
    row.q = cfg.q;
    row.lhs = lhs_good.total;
    row.t_q = tq_inner;
    row.bad_mass_term = bad_term;
    row.ratio = ratio_of(row.lhs, row.t_q + row.bad_mass_term);
    row.flags = join_tokens({"form=inner_tilt", common, hyp_token});
    report.rows.push_back(std::move(row));
  }

  auto& sm = report.summary;
  sm.emplace_back("experiment", "fixed_scale");
  sm.emplace_back("scenario", s.name);
  sm.emplace_back("seed", std::to_string(s.seed));
  sm.emplace_back("stationary", s.is_stationary ? "1" : "0");
  sm.emplace_back("n", std::to_string(s.n));
  sm.emplace_back("m", std::to_string(s.m));
  sm.emplace_back("mesh", g17(cfg.dx));
  sm.emplace_back("r", g17(r));
  sm.emplace_back("h", g17(h));
  sm.emplace_back("Q", std::to_string(Q));
  sm.emplace_back("q", g17(cfg.q));
  sm.emplace_back("q_star", g17(q_star));
  sm.emplace_back("atoms", std::to_string(v.size()));
  sm.emplace_back("mu_cylinder", g17(mu_c));
  sm.emplace_back("mass_window_lo", g17(mass_lo));
  sm.emplace_back("mass_window_hi", g17(mass_hi));
  sm.emplace_back("slab_mass", g17(slab_mass));
  sm.emplace_back("slab_budget", g17((1.0 - cfg.delta) * omega * rn));
  sm.emplace_back("mu_enlarged", g17(mu_outer));
  sm.emplace_back("mass_budget", g17(cfg.M * omega * rn));
  sm.emplace_back("first_variation_enlarged", g17(fv_outer));
  sm.emplace_back("first_variation_budget",
                  g17(cfg.eps * std::pow(r, n - 1)));
  sm.emplace_back("t1_enlarged", g17(t1_outer));
  sm.emplace_back("eps", g17(cfg.eps));
  sm.emplace_back("good_atoms", std::to_string(g_idx.size()));
  sm.emplace_back("small_atoms", std::to_string(a_idx.size()));
  sm.emplace_back("mass_good", g17(mass_g));
  sm.emplace_back("mass_small", g17(mass_a));
  sm.emplace_back("bad_mass", g17(bad_mass));
  sm.emplace_back("lhs_good_total", g17(lhs_good.total));
  sm.emplace_back("lhs_good_term_dist", g17(lhs_good.term_dist));
  sm.emplace_back("lhs_good_term_g", g17(lhs_good.term_g));
  sm.emplace_back("lhs_good_term_area", g17(lhs_good.term_area));
  sm.emplace_back("lhs_full_total", g17(lhs_full.total));
  {
    std::string offs;
    for (int i = 0; i < lhs_good.plane.offsets().q(); ++i) {
      if (i) offs += '|';
      const Eigen::VectorXd& o = lhs_good.plane.offsets().points()[i];
      for (int j = 0; j < o.size(); ++j) {
        if (j) offs += '~';
        offs += g17(o(j));
      }
    }
    sm.emplace_back("lhs_good_offsets", offs);
  }
  sm.emplace_back("t_q_enlarged", g17(tq_outer));
  if (s.emit_inner_tilt_row) sm.emplace_back("t_q_inner", g17(tq_inner));
  sm.emplace_back("bad_mass_term", g17(bad_term));
  sm.emplace_back("psi", g17(psi));
  sm.emplace_back("psi_term", g17(psi_term));
  sm.emplace_back("ratio_main", g17(report.rows[0].ratio));
  sm.emplace_back("ratio_curvature", g17(report.rows[1].ratio));
  sm.emplace_back("flagged", report.flagged ? "1" : "0");
  sm.emplace_back("flags", fails.empty() ? "ok" : hyp_token);
  return report;
}

std::string FixedScaleReport::csv() const {
  std::string out = "scenario,r,q,lhs,t_q,bad_mass_term,ratio,flags\n";
  for (const FixedScaleRow& row : rows) {
    out += row.scenario + ',' + g17(row.r) + ',' + g17(row.q) + ',' +
           g17(row.lhs) + ',' + g17(row.t_q) + ',' + g17(row.bad_mass_term) +
           ',' + g17(row.ratio) + ',' + row.flags + '\n';
  }
  return out;
}

std::string FixedScaleReport::summary_kv() const {
  return summary_text(summary);
}

std::vector<FixedScaleRow> parse_fixed_scale_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) ||
      trim(line) != "scenario,r,q,lhs,t_q,bad_mass_term,ratio,flags")
    throw std::invalid_argument("fixed-scale CSV: bad header");
  std::vector<FixedScaleRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto parts = split(trim(line), ',');
    if (parts.size() != 8)
      throw std::invalid_argument("fixed-scale CSV: bad row: " + line);
    FixedScaleRow row;
    row.scenario = parts[0];
    row.r = parse_double(parts[1]);
    row.q = parse_double(parts[2]);
    row.lhs = parse_double(parts[3]);
    row.t_q = parse_double(parts[4]);
    row.bad_mass_term = parse_double(parts[5]);
    row.ratio = parse_double(parts[6]);
    row.flags = parts[7];
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Decay experiment.
// ---------------------------------------------------------------------------

DecayReport run_decay(const Scenario& s, const ExperimentConfig& cfg) {
  cfg.validate(s.n, true);
  const int n = s.n;
  const DiscreteVarifold v = s.build(cfg.dx);

  std::vector<double> radii(static_cast<size_t>(cfg.levels));
  for (int k = 0; k < cfg.levels; ++k)
    radii[static_cast<size_t>(k)] = cfg.r0 * std::pow(2.0, -k);

  DecayReport report;
  for (size_t pi = 0; pi < s.probes.size(); ++pi) {
    const ProbePoint& probe = s.probes[pi];
    if (!probe.tangent)
      throw std::invalid_argument(
          "run_decay: probe without a known tangent plane");
    const Plane& t = *probe.tangent;
    const Eigen::VectorXd a = probe.point;

    // Parallel map over radii; collection stays ordered by index.
    std::vector<std::future<std::pair<double, double>>> futures;
    futures.reserve(radii.size());
    for (double r : radii) {
      futures.push_back(std::async(std::launch::async, [&, r]() {
        LqAccumulator height(cfg.q2);
        LqAccumulator tilt(cfg.q1);
        for (const Atom& atom : v.atoms()) {
          if (!((atom.position - a).norm() < r)) continue;  // open ball
          const double mass = atom_mass(atom);
          height.add(mass, t.dist(atom.position - a));
          tilt.add(mass, grassmann_dist(atom.tangent, t));
        }
        const double lhs_pref = std::isinf(cfg.q2)
                                    ? std::pow(r, -cfg.alpha - 1.0)
                                    : std::pow(r, -cfg.alpha - 1.0 - n / cfg.q2);
        const double rhs_pref = std::isinf(cfg.q1)
                                    ? std::pow(r, -cfg.alpha)
                                    : std::pow(r, -cfg.alpha - n / cfg.q1);
        return std::make_pair(lhs_pref * height.value(),
                              rhs_pref * tilt.value());
      }));
    }

    std::vector<size_t> usable_rows;
    for (size_t k = 0; k < radii.size(); ++k) {
      const auto [lhs, rhs] = futures[k].get();
      DecayRow row;
      row.scenario = s.name;
      row.probe = static_cast<int>(pi);
      row.r = radii[k];
      row.lhs = lhs;
      row.rhs = rhs;
      row.usable = radii[k] + 1e-12 >= 8.0 * cfg.dx;
      if (row.usable)
        usable_rows.push_back(report.rows.size());
      else
        report.truncated = true;
      report.rows.push_back(std::move(row));
    }

    DecayProbeEstimate est;
    const size_t window =
        std::min<size_t>(3, usable_rows.size());  // the smallest radii last
    for (size_t j = 0; j < usable_rows.size(); ++j) {
      const DecayRow& row = report.rows[usable_rows[j]];
      est.lhs_sup = std::max(est.lhs_sup, row.lhs);
      est.rhs_sup = std::max(est.rhs_sup, row.rhs);
      if (j + window >= usable_rows.size()) {
        est.lhs_limsup = std::max(est.lhs_limsup, row.lhs);
        est.rhs_limsup = std::max(est.rhs_limsup, row.rhs);
      }
    }
    est.both_zero = est.lhs_limsup == 0.0 && est.rhs_limsup == 0.0;
    est.ratio = ratio_of(est.lhs_limsup, est.rhs_limsup);
    report.estimates.push_back(est);
  }

  auto& sm = report.summary;
  sm.emplace_back("experiment", "decay");
  sm.emplace_back("scenario", s.name);
  sm.emplace_back("seed", std::to_string(s.seed));
  sm.emplace_back("mesh", g17(cfg.dx));
  sm.emplace_back("alpha", g17(cfg.alpha));
  sm.emplace_back("q1", g17(cfg.q1));
  sm.emplace_back("q2", g17(cfg.q2));
  sm.emplace_back("r0", g17(cfg.r0));
  sm.emplace_back("levels", std::to_string(cfg.levels));
  sm.emplace_back("resolution_cut", g17(8.0 * cfg.dx));
  sm.emplace_back("truncated", report.truncated ? "1" : "0");
  for (size_t pi = 0; pi < report.estimates.size(); ++pi) {
    const DecayProbeEstimate& est = report.estimates[pi];
    const std::string p = "probe" + std::to_string(pi) + "_";
    sm.emplace_back(p + "lhs_limsup", g17(est.lhs_limsup));
    sm.emplace_back(p + "rhs_limsup", g17(est.rhs_limsup));
    sm.emplace_back(p + "lhs_sup", g17(est.lhs_sup));
    sm.emplace_back(p + "rhs_sup", g17(est.rhs_sup));
    sm.emplace_back(p + "ratio", g17(est.ratio));
    sm.emplace_back(p + "both_zero", est.both_zero ? "1" : "0");
  }
  // Finitely many probes cannot represent an exceptional null set of
  // bad points; the report says so explicitly.
  sm.emplace_back("coverage_note",
                  "probes are analytically chosen points; almost-everywhere "
                  "statements are sampled, not exhausted");
  return report;
}

std::string DecayReport::csv() const {
  std::string out = "scenario,probe,r,lhs,rhs,usable\n";
  for (const DecayRow& row : rows) {
    out += row.scenario + ',' + std::to_string(row.probe) + ',' + g17(row.r) +
           ',' + g17(row.lhs) + ',' + g17(row.rhs) + ',' +
           (row.usable ? "1" : "0") + '\n';
  }
  return out;
}

std::string DecayReport::summary_kv() const { return summary_text(summary); }

std::vector<DecayRow> parse_decay_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) ||
      trim(line) != "scenario,probe,r,lhs,rhs,usable")
    throw std::invalid_argument("decay CSV: bad header");
  std::vector<DecayRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto parts = split(trim(line), ',');
    if (parts.size() != 6)
      throw std::invalid_argument("decay CSV: bad row: " + line);
    DecayRow row;
    row.scenario = parts[0];
    row.probe = static_cast<int>(std::lround(parse_double(parts[1])));
    row.r = parse_double(parts[2]);
    row.lhs = parse_double(parts[3]);
    row.rhs = parse_double(parts[4]);
    row.usable = parts[5] == "1";
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Monotonicity experiment.
// ---------------------------------------------------------------------------

MonoReport run_monotonicity(const Scenario& s, const ExperimentConfig& cfg) {
  cfg.validate(s.n, false);
  const int n = s.n;
  const double omega = Constants::unit_ball_volume(n);
  const DiscreteVarifold v = s.build(cfg.dx);

  MonoReport report;
  auto push = [&](const std::string& check, double rho, double value,
                  double threshold, double margin, bool pass) {
    MonoRow row;
    row.scenario = s.name;
    row.check = check;
    row.rho = rho;
    row.value = value;
    row.threshold = threshold;
    row.margin = margin;
    row.pass = pass;
    if (!pass) report.all_pass = false;
    report.rows.push_back(std::move(row));
  };

  int density_sum = 0;
  for (const ProbePoint& p : s.probes) density_sum += p.density;

  bool truncated = false;
  for (int j = 0; j < cfg.levels; ++j) {
    const double rho = cfg.r0 * std::pow(2.0, -j);
    if (rho + 1e-12 < 8.0 * cfg.dx) {  // below quadrature resolution
      truncated = true;
      continue;
    }
    const double ball_volume = omega * std::pow(rho, n);

    // Coverage of the union of closed balls around the probe stack.
    double union_mass = 0.0;
    for (const Atom& atom : v.atoms()) {
      for (const ProbePoint& p : s.probes) {
        if ((atom.position - p.point).norm() <= rho) {
          union_mass += atom_mass(atom);
          break;
        }
      }
    }
    const double coverage = union_mass / ball_volume;
    const double cov_threshold = density_sum - cfg.delta;
    push("multilayer_coverage", rho, coverage, cov_threshold,
         coverage - cov_threshold, coverage >= cov_threshold);

    // Mass ratio bound at the primary probe.
    const Eigen::VectorXd& a = s.probes.front().point;
    const double ball_mass = measure(v, closed_ball(a, rho));
    const double ratio = ball_mass / ball_volume;
    push("quasi_monotonicity", rho, ratio, cfg.M, cfg.M - ratio,
         ratio <= cfg.M);
  }

  if (s.plane_layers) {
    // Layered fixtures: the fiber over a probe's base point sees every sheet
    // of the stack, so its distinct-height count must equal the total
    // stacked density.
    for (size_t pi = 0; pi < s.probes.size(); ++pi) {
      const ProbePoint& p = s.probes[pi];
      std::vector<Eigen::VectorXd> heights;
      // Fiber radius dx: half-offset lattices keep their nearest base points
      // at distance dx/sqrt(2) from cell corners, so dx/2 could miss them.
      for (const Atom& atom : v.atoms()) {
        const Eigen::VectorXd d = atom.position - p.point;
        if (s.axis.project(d).norm() <= cfg.dx)
          heights.push_back(s.axis.perp_basis().transpose() * atom.position);
      }
      std::sort(heights.begin(), heights.end(),
                [](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
                  for (int i = 0; i < x.size(); ++i) {
                    if (x(i) < y(i)) return true;
                    if (x(i) > y(i)) return false;
                  }
                  return false;
                });
      int clusters = heights.empty() ? 0 : 1;
      for (size_t i = 1; i < heights.size(); ++i)
        if ((heights[i] - heights[i - 1]).norm() > 0.25 * cfg.dx) ++clusters;
      push("layer_discreteness", cfg.dx, clusters, density_sum,
           clusters - density_sum, clusters == density_sum);
    }
  }

  auto& sm = report.summary;
  sm.emplace_back("experiment", "monotonicity");
  sm.emplace_back("scenario", s.name);
  sm.emplace_back("seed", std::to_string(s.seed));
  sm.emplace_back("mesh", g17(cfg.dx));
  sm.emplace_back("r0", g17(cfg.r0));
  sm.emplace_back("levels", std::to_string(cfg.levels));
  sm.emplace_back("delta", g17(cfg.delta));
  sm.emplace_back("M", g17(cfg.M));
  sm.emplace_back("density_sum", std::to_string(density_sum));
  sm.emplace_back("truncated", truncated ? "1" : "0");
  sm.emplace_back("all_pass", report.all_pass ? "1" : "0");
  sm.emplace_back("note",
                  "empirical predicate checks of compactness-proved bounds, "
                  "not proofs");
  return report;
}

std::string MonoReport::csv() const {
  std::string out = "scenario,check,rho,value,threshold,margin,pass\n";
  for (const MonoRow& row : rows) {
    out += row.scenario + ',' + row.check + ',' + g17(row.rho) + ',' +
           g17(row.value) + ',' + g17(row.threshold) + ',' + g17(row.margin) +
           ',' + (row.pass ? "1" : "0") + '\n';
  }
  return out;
}

std::string MonoReport::summary_kv() const { return summary_text(summary); }

}  // namespace varex
