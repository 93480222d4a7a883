#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "varex/approx.hpp"
#include "varex/excess.hpp"
#include "varex/generators.hpp"
#include "varex/varifold.hpp"

namespace varex {

// ---------------------------------------------------------------------------
// Scenarios: named, reproducible fixtures.  A scenario couples a sample-cloud
// builder (parametrized only by the mesh width) with the analytic facts the
// experiment drivers consume: stationarity of the underlying surface, the
// reference plane, and probe points with their known density and tangent.
// ---------------------------------------------------------------------------

struct ProbePoint {
  Eigen::VectorXd point;
  int density = 1;                // surface multiplicity at the point
  std::optional<Plane> tangent;   // tangent plane there, when unique
};

struct Scenario {
  std::string name;
  std::string summary;  // one-line description for listings
  int n = 2;
  int m = 1;
  std::function<DiscreteVarifold(double mesh)> build;
  // True when the fixture's curvature data vanishes identically, so every
  // first-variation quantity derived from it is exactly zero.
  bool is_stationary = false;
  // Cylinder center for the fixed-scale runs (need not lie on the support).
  Eigen::VectorXd center = Eigen::VectorXd::Zero(3);
  // Reference plane for cylinders and tilts.
  Plane axis = Plane::coordinate(3, {0, 1});
  // Layer count for the fixed-scale height functional; 0 means infer it
  // from the measured mass ratio of the cylinder.
  int fixed_scale_Q = 0;
  // True when fibers over a base point are finite height stacks whose
  // cardinality the layer-discreteness check can compare against the probe
  // densities.
  bool plane_layers = false;
  // Emit the additional fixed-scale row whose tilt term is evaluated on the
  // inner cylinder (radius r) instead of the enlarged one (radius 3r).
  bool emit_inner_tilt_row = false;
  std::vector<ProbePoint> probes;  // probes[0] is the default probe
  uint64_t seed = 0;               // recorded in every output
  // Config entries (key -> value) that tune the default ExperimentConfig
  // for this scenario; same keys as the key=value config files.
  std::vector<std::pair<std::string, double>> config_overrides;
};

// The built-in fixtures.  Deterministic: every build call with the same mesh
// yields the identical atom list.
const std::vector<Scenario>& scenario_registry();
// Lookup by name; throws std::invalid_argument listing the known names.
const Scenario& find_scenario(const std::string& name);

// ---------------------------------------------------------------------------
// Experiment configuration, shared by the three drivers.  Serializes to a
// flat key=value text block (one pair per line, '#' starts a comment).
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  double q = 1.0;    // integrand exponent of the fixed-scale inequality
  double q1 = 2.0;   // tilt exponent of the decay experiment
  double q2 = 2.0;   // height exponent of the decay experiment (may be inf)
  double alpha = 1.0;  // decay rate exponent, in (0, 1]
  double p = 1.0;      // curvature integrability backing the psi term
  double r0 = 0.8;     // base radius
  int levels = 5;      // dyadic radii r0 * 2^-k, k = 0 .. levels-1
  double dx = 0.05;    // sample mesh width
  double eps = 0.1;    // good-set smallness threshold
  double eps1 = 0.1;   // bad-set threshold (<= eps)
  double delta = 0.5;  // mass-window slack, in (0, 1]
  // Neighborhood mass budget: Q stacked sheets fill the enlarged cylinder
  // with about 9 Q omega_n r^n of mass, so the default leaves room for two
  // layers plus curvature overhead.
  double M = 24.0;
  Constants constants;

  // Parse / merge key=value text.  Unknown keys throw.
  static ExperimentConfig from_kv(const std::string& text);
  static ExperimentConfig load(const std::string& path);
  void merge_kv(const std::string& text);
  std::string to_kv() const;

  // Range checks; with limit_mode also the decay-exponent compatibility
  // q2 <= min{ n q1 / (n - q1), (1/alpha) n p / (n - p) }.
  void validate(int n, bool limit_mode) const;
};

// Default config for a scenario: library defaults with the scenario's
// overrides applied.
ExperimentConfig default_config(const Scenario& s);

// ---------------------------------------------------------------------------
// Fixed-scale inequality experiment.
//
// At the scenario's center a with reference plane T and radius r = r0, the
// driver measures, over the cylinder C(a, r, r, T),
//   lhs  = best-layer height of the good-part restriction,
//          H_{q*}(mu restricted to G, a, r, r, Q, T),
//          with q* = n q / (n - q) for q < n and the sup form otherwise,
//   t_q  = tilt of the full measure over the enlarged cylinder C(a, 3r, 3r, T),
//   bad  = (r^-n mu(C \ A))^{1/q},
// and reports ratio = lhs / (t_q + bad).  A second row prices the curvature
// alternative: the same lhs on the full measure against
//   t_q + (r^{p-n} psi(C(a, 3r, 3r, T)))^{(n-q)/(q(n-p))}
// with psi the first-variation mass for p = 1 and the |H|^p integral for
// p > 1.  Scenarios with emit_inner_tilt_row add a third row whose tilt term
// uses the inner cylinder C(a, r, r, T) — the configuration showing why the
// enlarged cylinder is needed.
//
// Hypothesis checks (mass window, slab mass, neighborhood budget, first
// variation and tilt smallness) warn through the flags column; they never
// abort the run.
// ---------------------------------------------------------------------------

struct FixedScaleRow {
  std::string scenario;
  double r = 0.0;
  double q = 0.0;  // the driving integrand exponent of the run
  double lhs = 0.0;
  double t_q = 0.0;
  double bad_mass_term = 0.0;
  double ratio = 0.0;
  std::string flags;  // ';'-joined tokens, e.g. "form=main;mesh=0.05;ok"
};

struct FixedScaleReport {
  std::vector<FixedScaleRow> rows;
  std::vector<std::pair<std::string, std::string>> summary;
  bool flagged = false;  // some hypothesis failed

  std::string csv() const;  // columns: scenario,r,q,lhs,t_q,bad_mass_term,ratio,flags
  std::string summary_kv() const;
};

FixedScaleReport run_fixed_scale(const Scenario& s, const ExperimentConfig& cfg);

// Bit-exact inverse of FixedScaleReport::csv (rows only; summary and flag
// state are not part of the CSV).
std::vector<FixedScaleRow> parse_fixed_scale_csv(const std::string& text);

// ---------------------------------------------------------------------------
// Decay experiment.  At every probe point a with known tangent T, and every
// dyadic radius r = r0 * 2^-k, the driver measures over the open ball B(a, r)
//   lhs(r) = r^{-alpha-1-n/q2} || dist(. - a, T) ||_{L^q2}
//   rhs(r) = r^{-alpha-n/q1}   || P_tangent - P_T ||_{L^q1}
// (sup forms for infinite exponents, dropping the n/q prefactor share).
// Radii below 8 * dx are unresolvable: their rows are kept but marked
// unusable and excluded from the estimates.  Two estimates are reported per
// side: `limsup`, the max over the three smallest usable radii, and `sup`,
// the max over all usable radii (monotone under schedule extension).
// ---------------------------------------------------------------------------

struct DecayRow {
  std::string scenario;
  int probe = 0;
  double r = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  bool usable = true;
};

struct DecayProbeEstimate {
  double lhs_limsup = 0.0;
  double rhs_limsup = 0.0;
  double lhs_sup = 0.0;
  double rhs_sup = 0.0;
  double ratio = 0.0;  // lhs_limsup / rhs_limsup; 0 when both vanish
  bool both_zero = false;
};

struct DecayReport {
  std::vector<DecayRow> rows;
  std::vector<DecayProbeEstimate> estimates;  // one per probe
  std::vector<std::pair<std::string, std::string>> summary;
  bool truncated = false;  // some radii fell below resolution

  std::string csv() const;  // columns: scenario,probe,r,lhs,rhs,usable
  std::string summary_kv() const;
};

DecayReport run_decay(const Scenario& s, const ExperimentConfig& cfg);

std::vector<DecayRow> parse_decay_csv(const std::string& text);

// ---------------------------------------------------------------------------
// Monotonicity experiment: empirical predicate checks over a radius sweep.
//   multilayer_coverage  mu(union of closed balls around the probes) against
//                        (sum of probe densities - delta) * omega_n rho^n;
//   quasi_monotonicity   mu(closed ball at probes[0]) against M omega_n rho^n;
//   layer_discreteness   (plane_layers scenarios) distinct fiber heights over
//                        each probe's base point against the total stacked
//                        density of the probes.
// ---------------------------------------------------------------------------

struct MonoRow {
  std::string scenario;
  std::string check;
  double rho = 0.0;
  double value = 0.0;
  double threshold = 0.0;
  double margin = 0.0;  // signed distance to the passing side
  bool pass = true;
};

struct MonoReport {
  std::vector<MonoRow> rows;
  std::vector<std::pair<std::string, std::string>> summary;
  bool all_pass = true;

  std::string csv() const;  // columns: scenario,check,rho,value,threshold,margin,pass
  std::string summary_kv() const;
};

MonoReport run_monotonicity(const Scenario& s, const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Shared plumbing.
// ---------------------------------------------------------------------------

// Sub-varifold with the listed atom indices (order preserved, metadata kept).
DiscreteVarifold restrict_atoms(const DiscreteVarifold& v,
                                const std::vector<int>& indices);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace varex
