#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "varex/excess.hpp"
#include "varex/geometry.hpp"
#include "varex/qvalued.hpp"
#include "varex/varifold.hpp"

namespace varex {

// Tuning knobs of the graphical-decomposition construction: the sample is
// split into a bad set (where first variation or tilt concentrates at some
// scale), a preliminary graphical part, and per-cell height layers, from
// which a Q-valued height field is extracted.
struct ApproxParams {
  double eps = 0.1;               // smallness threshold for the graphical part
  double eps1 = 0.1;              // bad-set threshold, must satisfy eps1 <= eps
  std::array<double, 5> delta{0.5, 0.5, 0.5, 0.25, 0.0};  // delta[4] set below
  double L = 0.5;  // Lipschitz budget for the height field
  // Enlarged-neighborhood mass budget.  The 2r-neighborhood of the cylinder
  // reaches base radius 3r, so a two-sheet sample filling it carries about
  // 2 * 9 * w_n r^n of mass; 24 leaves headroom on top of that.
  double M = 24.0;
  std::vector<double> radii_schedule;  // decreasing test radii in (0, 2r)

  // Largest admissible delta[4] (the density constant): (2 gamma n)^-n / w_n.
  static double delta5_max(int n, const Constants& k = Constants{});

  // Sensible defaults for a cylinder of base radius r in dimension n; sets
  // delta[4] to its maximum and fills the radii schedule.
  static ApproxParams defaults(int n, double r, const Constants& k = Constants{});

  // Throws invalid_argument when a field is out of range.
  void validate(int n, const Constants& k = Constants{}) const;
};

// Geometric radii schedule: count radii descending from 2r/ratio by the
// given ratio, all inside (0, 2r).
std::vector<double> make_radii_schedule(double r, int count = 24,
                                        double ratio = 1.3);

// Atoms inside the cylinder at which, for SOME schedule radius rho, the
// closed-ball first-variation mass exceeds eps1 * mass^(1-1/n) or the
// closed-ball tilt integral exceeds eps1 * mass.  Larger eps1 shrinks the
// set; refining the schedule can only grow it.
std::vector<int> bad_set(const DiscreteVarifold& v, const Cylinder& c,
                         const ApproxParams& params);

// Atoms inside the cylinder satisfying the two smallness conditions on the
// OPEN ball of radius 2r (thresholded by eps) together with the density
// lower bound mass(closed ball rho) >= delta[4] * w_n * rho^n for EVERY
// schedule radius.
std::vector<int> preliminary_graphical_part(const DiscreteVarifold& v,
                                            const Cylinder& c,
                                            const ApproxParams& params);

// The two nested "controlled first variation at every scale" sets: G uses
// the threshold 1/(2 gamma_n), A uses eps; A is a subset of G whenever
// eps <= 1/(2 gamma_n).  Returned as (G, A), ascending atom indices.
std::pair<std::vector<int>, std::vector<int>> good_sets_G_A(
    const DiscreteVarifold& v, const Cylinder& c, const ApproxParams& params,
    const Constants& k = Constants{});

// Output of the graphical decomposition.  Atom index sets are ascending;
// cell index sets are lexicographic.  Cells live on the same base grid as
// the fiber decomposition: cell k spans prod [k_j dx, (k_j+1) dx) in base
// coordinates relative to the cylinder center, and a cell belongs to the
// base disc when its center does.  Heights are absolute perpendicular
// coordinates, matching the height functionals.
struct ApproxResult {
  Cylinder cyl;
  ApproxParams params;
  int Q = 0;       // inferred sheet count: nearest integer to mass/(w_n r^n)
  double dx = 0.0;  // cell width (the sample's mesh scale)

  std::vector<int> B;  // bad atoms
  std::vector<int> A;  // in-cylinder atoms minus B
  std::vector<int> H;  // preliminary graphical part
  std::vector<int> G;  // controlled-first-variation set

  std::vector<Eigen::VectorXi> Y;      // disc cells with layer count == Q
  std::vector<Eigen::VectorXi> Z;      // disc cells with layer count < Q
  std::vector<Eigen::VectorXi> N_set;  // disc cells with layer count > Q
  int disc_cells = 0;

  QField f;  // Q-valued height field over the Y cell centers

  // Diagnostics.
  double lip_measured = 0.0;  // measured Lipschitz constant of f
  bool lip_ok = true;         // lip_measured <= L
  double mu_C = 0.0;          // in-cylinder mass
  double mu_B = 0.0;          // bad-set mass
  double mu_U = 0.0;          // mass of the 2r-neighborhood of the cylinder
  double ln_Cprime = 0.0;     // area of the uncovered base region
  double mu_D = 0.0;          // mass above the uncovered base region
  double ratio3 = 0.0;        // (ln_Cprime + mu_D) / mu_B
  bool ratio3_vacuous = false;  // mu_B == 0: covering estimate is 0 <= 0
  double gamma3 = 0.0;  // max{3 + 2Q + (12Q+6) 5^n, 4(Q+2)/delta[0]}
  double lambda4 = 0.0;  // largest grid fraction with one-sided pairing
  long pairs4_checked = 0;
  long a_outside_h = 0;      // A-atoms missing from H (expected 0)
  double coarea_defect = 0.0;  // max(0, (1 - n eps^2) mu(A cells) - nu(A cells))
  bool coarea_cells_ok = false;  // cell-aggregated coarea inequality
  double coarea_cells_margin = 0.0;
  bool z_bound_ok = false;  // area(Z) <= (4/delta[0]) area(Y)
  double ratio6 = 0.0;      // default height-estimate ratio (q = 1)
  bool hypotheses_ok = true;
  std::vector<std::string> warnings;

  ApproxResult(Cylinder cyl_, ApproxParams params_, QField f_);

  std::string diagnostics_kv() const;
};

// Runs the full decomposition: bad set, graphical part, per-cell layers,
// height field, and all diagnostics.  Mass hypotheses (sheet-count window,
// slab bound, neighborhood bound) are checked and reported as warnings,
// never enforced.
ApproxResult build_approximation(const DiscreteVarifold& v, const Cylinder& c,
                                 const ApproxParams& params);

// Two-sided height comparison over the graphical part: the L^q distance of
// the H-atoms from the sheets of p against the per-cell mismatch norm plus
// the uncovered-area term, with the explicit factor 12^(n+1) Q.  Applicable
// only when the uncovered area is at most (1/2) w_n (lambda4 r / 6)^n.
struct Conclusion6Report {
  bool applicable = false;
  double q = 0.0;
  double lhs = 0.0;        // L^q norm of dist(., sheets) over the H-atoms
  double g_norm = 0.0;     // L^q norm of the cell mismatch over Y
  double area_term = 0.0;  // uncovered area^(1/q + 1/n)
  double factor = 0.0;     // 12^(n+1) Q
  double gamma6_empirical = 0.0;  // smallest area coefficient making it hold
  bool holds_with_gamma1 = false;
  double sup_lhs = 0.0;  // sup-norm variant (always reported)
  double sup_rhs = 0.0;  // sup mismatch + 2 (uncovered area / w_n)^(1/n)
  bool sup_holds = false;

  std::string to_kv() const;
};

Conclusion6Report conclusion6_check(const DiscreteVarifold& v,
                                    const ApproxResult& res, const QPlane& p,
                                    double q);

// Directory serialization: atom sets and cell sets as CSVs, the field in the
// grid CSV format, diagnostics as key=value text.
void save_approx(const ApproxResult& res, const std::string& dir);

}  // namespace varex
