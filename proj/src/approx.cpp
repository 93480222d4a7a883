#include "varex/approx.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "varex/numeric.hpp"
#include "varex/tolerances.hpp"

namespace varex {

namespace {

double unit_ball(int n) { return Constants::unit_ball_volume(n); }

// Distance from a point to the closed cylinder.
double cylinder_dist(const Cylinder& c, const Eigen::VectorXd& x) {
  const double base = std::max(0.0, c.base_coords(x).norm() - c.r);
  const double fib =
      std::isinf(c.h) ? 0.0 : std::max(0.0, c.fiber_coords(x).norm() - c.h);
  return std::hypot(base, fib);
}

// Schedule radii usable inside (0, 2r), ascending.
std::vector<double> usable_radii(const ApproxParams& p, double r) {
  std::vector<double> rho;
  for (double x : p.radii_schedule)
    if (x > 0.0 && x < 2.0 * r) rho.push_back(x);
  std::sort(rho.begin(), rho.end());
  if (rho.empty())
    throw std::invalid_argument("approx: no usable radii in the schedule");
  return rho;
}

// Frobenius tilt of every atom against the reference plane, computed once.
std::vector<double> atom_tilts(const DiscreteVarifold& v, const Plane& t) {
  std::vector<double> out;
  out.reserve(v.size());
  for (const Atom& a : v.atoms()) out.push_back(grassmann_dist(a.tangent, t));
  return out;
}

// Closed-ball cumulative sums of (mass, first-variation mass, tilt) around
// one center, one entry per ascending schedule radius, plus the open-ball
// sums at radius 2r.
struct BallScan {
  std::vector<double> mass, fv, tilt;
  double mass2r = 0.0, fv2r = 0.0, tilt2r = 0.0;
};

BallScan scan_balls(const DiscreteVarifold& v, const Eigen::VectorXd& center,
                    const std::vector<double>& rho, double two_r,
                    const std::vector<double>& tilts) {
  const size_t nr = rho.size();
  BallScan s;
  s.mass.assign(nr, 0.0);
  s.fv.assign(nr, 0.0);
  s.tilt.assign(nr, 0.0);
  for (size_t j = 0; j < v.size(); ++j) {
    const Atom& b = v.atoms()[j];
    const double d = (b.position - center).norm();
    const double w = b.multiplicity * b.weight;
    const double hw = w * b.mean_curvature.norm();
    const double tw = w * tilts[j];
    if (d < two_r) {
      s.mass2r += w;
      s.fv2r += hw;
      s.tilt2r += tw;
    }
    const auto it = std::lower_bound(rho.begin(), rho.end(), d);
    if (it == rho.end()) continue;
    const size_t k = static_cast<size_t>(it - rho.begin());
    s.mass[k] += w;
    s.fv[k] += hw;
    s.tilt[k] += tw;
  }
  for (size_t k = 1; k < nr; ++k) {
    s.mass[k] += s.mass[k - 1];
    s.fv[k] += s.fv[k - 1];
    s.tilt[k] += s.tilt[k - 1];
  }
  return s;
}

struct Classified {
  std::vector<int> in_C, B, H, G, A_eps;
};

// One pass of ball scans classifying every in-cylinder atom.
Classified classify(const DiscreteVarifold& v, const Cylinder& c,
                    const ApproxParams& params, const Constants& kc) {
  const int n = v.n();
  const double en = 1.0 - 1.0 / n;
  const double wn = unit_ball(n);
  const double g_threshold = 1.0 / (2.0 * kc.isoperimetric_gamma);
  const std::vector<double> rho = usable_radii(params, c.r);
  const std::vector<double> tilts = atom_tilts(v, c.axis);

  Classified out;
  for (size_t i = 0; i < v.size(); ++i) {
    const Atom& a = v.atoms()[i];
    if (!c.contains(a.position)) continue;
    out.in_C.push_back(static_cast<int>(i));
    const BallScan s = scan_balls(v, a.position, rho, 2.0 * c.r, tilts);

    bool bad = false;
    bool dense = true;
    bool g_ok = true;
    bool a_ok = true;
    for (size_t k = 0; k < rho.size(); ++k) {
      const double mp = std::pow(s.mass[k], en);
      if (s.fv[k] > params.eps1 * mp || s.tilt[k] > params.eps1 * s.mass[k])
        bad = true;
      if (s.mass[k] < params.delta[4] * wn * std::pow(rho[k], n))
        dense = false;
      if (s.fv[k] > g_threshold * mp) g_ok = false;
      if (s.fv[k] > params.eps * mp) a_ok = false;
    }
    if (bad) out.B.push_back(static_cast<int>(i));
    const double mp2 = std::pow(s.mass2r, en);
    if (dense && s.fv2r <= params.eps * mp2 &&
        s.tilt2r <= params.eps * s.mass2r)
      out.H.push_back(static_cast<int>(i));
    if (g_ok) out.G.push_back(static_cast<int>(i));
    if (a_ok) out.A_eps.push_back(static_cast<int>(i));
  }
  return out;
}

std::string kv(const std::string& key, double value) {
  return key + "=" + g17(value) + "\n";
}
std::string kv(const std::string& key, long value) {
  return key + "=" + std::to_string(value) + "\n";
}
std::string kv(const std::string& key, int value) {
  return key + "=" + std::to_string(value) + "\n";
}
std::string kv(const std::string& key, bool value) {
  return key + "=" + (value ? "1" : "0") + "\n";
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("approx: cannot write " + path);
  out << text;
}

void write_atom_set(const std::string& path, const std::vector<int>& idx) {
  std::ostringstream out;
  out << "# atom_index\n";
  for (int i : idx) out << i << "\n";
  write_text(path, out.str());
}

void write_cell_set(const std::string& path,
                    const std::vector<Eigen::VectorXi>& cells) {
  std::ostringstream out;
  out << "# cell_index\n";
  for (const Eigen::VectorXi& k : cells) {
    for (int j = 0; j < k.size(); ++j) out << (j ? "," : "") << k(j);
    out << "\n";
  }
  write_text(path, out.str());
}

}  // namespace

double ApproxParams::delta5_max(int n, const Constants& k) {
  return std::pow(2.0 * k.isoperimetric_gamma * n, -n) / unit_ball(n);
}

ApproxParams ApproxParams::defaults(int n, double r, const Constants& k) {
  ApproxParams p;
  p.delta[4] = delta5_max(n, k);
  p.radii_schedule = make_radii_schedule(r);
  return p;
}

void ApproxParams::validate(int n, const Constants& k) const {
  if (!(eps > 0.0)) throw std::invalid_argument("approx: eps must be > 0");
  if (!(eps1 > 0.0) || eps1 > eps)
    throw std::invalid_argument("approx: need 0 < eps1 <= eps");
  for (int i = 0; i < 5; ++i)
    if (!(delta[i] > 0.0) || delta[i] > 1.0)
      throw std::invalid_argument("approx: delta out of (0, 1]");
  if (delta[4] > delta5_max(n, k) * (1.0 + 1e-12))
    throw std::invalid_argument("approx: delta5 above its admissible maximum");
  if (!(L > 0.0)) throw std::invalid_argument("approx: L must be > 0");
  if (!(M >= 1.0)) throw std::invalid_argument("approx: M must be >= 1");
  if (radii_schedule.empty())
    throw std::invalid_argument("approx: empty radii schedule");
  for (size_t i = 0; i < radii_schedule.size(); ++i) {
    if (!(radii_schedule[i] > 0.0))
      throw std::invalid_argument("approx: radii must be positive");
    if (i > 0 && radii_schedule[i] >= radii_schedule[i - 1])
      throw std::invalid_argument("approx: radii must be decreasing");
  }
}

std::vector<double> make_radii_schedule(double r, int count, double ratio) {
  if (!(r > 0.0) || count < 1 || !(ratio > 1.0))
    throw std::invalid_argument("make_radii_schedule: bad arguments");
  std::vector<double> out;
  double rho = 2.0 * r;
  for (int i = 0; i < count; ++i) {
    rho /= ratio;
    out.push_back(rho);
  }
  return out;
}

std::vector<int> bad_set(const DiscreteVarifold& v, const Cylinder& c,
                         const ApproxParams& params) {
  params.validate(v.n());
  return classify(v, c, params, Constants{}).B;
}

std::vector<int> preliminary_graphical_part(const DiscreteVarifold& v,
                                            const Cylinder& c,
                                            const ApproxParams& params) {
  params.validate(v.n());
  return classify(v, c, params, Constants{}).H;
}

std::pair<std::vector<int>, std::vector<int>> good_sets_G_A(
    const DiscreteVarifold& v, const Cylinder& c, const ApproxParams& params,
    const Constants& k) {
  params.validate(v.n(), k);
  Classified cl = classify(v, c, params, k);
  return {std::move(cl.G), std::move(cl.A_eps)};
}

ApproxResult::ApproxResult(Cylinder cyl_, ApproxParams params_, QField f_)
    : cyl(std::move(cyl_)), params(std::move(params_)), f(std::move(f_)) {}

ApproxResult build_approximation(const DiscreteVarifold& v, const Cylinder& c,
                                 const ApproxParams& params) {
  const int n = v.n();
  const int m = v.m();
  if (c.axis.dim() != n || c.axis.ambient() != v.ambient())
    throw std::invalid_argument("build_approximation: cylinder mismatch");
  params.validate(n);

  const double r = c.r;
  const double wn = unit_ball(n);
  const Constants kc{};
  const Classified cl = classify(v, c, params, kc);

  // Masses and the inferred sheet count.
  std::vector<double> masses;
  for (int i : cl.in_C) {
    const Atom& a = v.atoms()[i];
    masses.push_back(a.multiplicity * a.weight);
  }
  const double mu_C = pairwise_sum(masses);
  const int Q =
      std::max(1, static_cast<int>(std::lround(mu_C / (wn * std::pow(r, n)))));

  const double dx = v.mesh_scale();
  GridSpec grid(n, dx, r, Eigen::VectorXd::Zero(n),
                Eigen::VectorXd::Constant(n, dx / 2.0));
  ApproxResult res(c, params, QField(grid, Q, m));
  res.Q = Q;
  res.dx = dx;
  res.mu_C = mu_C;
  res.B = cl.B;
  res.H = cl.H;
  res.G = cl.G;
  std::set_difference(cl.in_C.begin(), cl.in_C.end(), cl.B.begin(),
                      cl.B.end(), std::back_inserter(res.A));

  // Hypothesis checks: reported, never enforced.
  auto warn = [&](const std::string& msg) {
    res.warnings.push_back(msg);
    res.hypotheses_ok = false;
  };
  const double lower = (Q - 1 + params.delta[0]) * wn * std::pow(r, n);
  const double upper = (Q + 1 - params.delta[1]) * wn * std::pow(r, n);
  if (mu_C < lower || mu_C > upper)
    warn("cylinder mass outside the sheet-count window");
  if (std::isinf(c.h)) {
    warn("cylinder height is infinite; slab hypothesis skipped");
  } else {
    if (!(c.h > 2.0 * params.delta[3] * r))
      warn("cylinder height fails h > 2 delta4 r");
    const Cylinder outer(c.center, r, c.h + params.delta[3] * r, c.axis);
    const Cylinder inner(c.center, r,
                         std::max(0.0, c.h - 2.0 * params.delta[3] * r),
                         c.axis);
    std::vector<double> slab;
    for (const Atom& a : v.atoms())
      if (outer.contains(a.position) && !inner.contains(a.position))
        slab.push_back(a.multiplicity * a.weight);
    if (pairwise_sum(slab) > (1.0 - params.delta[2]) * wn * std::pow(r, n))
      warn("slab mass above (1 - delta3) w_n r^n");
  }
  std::vector<double> umass;
  for (const Atom& a : v.atoms())
    if (cylinder_dist(c, a.position) < 2.0 * r)
      umass.push_back(a.multiplicity * a.weight);
  res.mu_U = pairwise_sum(umass);
  if (res.mu_U > params.M * wn * std::pow(r, n))
    warn("neighborhood mass above M w_n r^n");

  // Per-cell aggregation of the in-cylinder atoms.
  struct Cell {
    std::vector<int> a_atoms;  // indices into v.atoms()
    int a_mult = 0;
    bool has_b = false;
    double mass_in_c = 0.0;
    double mass_b = 0.0;
    bool disc = false;
  };
  std::map<std::vector<int>, Cell> cells;
  std::vector<char> is_b(v.size(), 0), is_a(v.size(), 0), is_h(v.size(), 0);
  for (int i : res.B) is_b[i] = 1;
  for (int i : res.A) is_a[i] = 1;
  for (int i : res.H) is_h[i] = 1;
  for (int i : cl.in_C) {
    const Atom& a = v.atoms()[i];
    const Eigen::VectorXd y = c.base_coords(a.position);
    std::vector<int> key(n);
    for (int j = 0; j < n; ++j)
      key[j] = static_cast<int>(std::floor(y(j) / dx));
    Cell& cell = cells[key];
    const double w = a.multiplicity * a.weight;
    cell.mass_in_c += w;
    if (is_b[i]) {
      cell.has_b = true;
      cell.mass_b += w;
    } else {
      cell.a_atoms.push_back(i);
      cell.a_mult += a.multiplicity;
    }
  }
  // Disc cells: same enumeration as the fiber decomposition.
  {
    const int k_lo = static_cast<int>(std::ceil(-r / dx - 0.5 - 1e-9));
    const int k_hi = static_cast<int>(std::floor(r / dx - 0.5 + 1e-9));
    std::vector<int> k(n, k_lo);
    if (k_lo <= k_hi) {
      while (true) {
        double norm2 = 0.0;
        for (int j = 0; j < n; ++j) {
          const double t = (k[j] + 0.5) * dx;
          norm2 += t * t;
        }
        if (norm2 <= r * r * (1.0 + 1e-12)) cells[k].disc = true;
        int axis = n - 1;
        while (axis >= 0) {
          if (++k[axis] <= k_hi) break;
          k[axis] = k_lo;
          --axis;
        }
        if (axis < 0) break;
      }
    }
  }

  // Layer classification and the height field over the Q-covered cells.
  const Eigen::MatrixXd nt = c.axis.perp_basis().transpose();
  for (const auto& [key, cell] : cells) {
    if (!cell.disc) continue;
    ++res.disc_cells;
    const Eigen::VectorXi kvec =
        Eigen::Map<const Eigen::VectorXi>(key.data(), n);
    if (cell.a_mult == Q) {
      res.Y.push_back(kvec);
      std::vector<Eigen::VectorXd> pts;
      for (int i : cell.a_atoms) {
        const Atom& a = v.atoms()[i];
        const Eigen::VectorXd z = nt * a.position;
        for (int rep = 0; rep < a.multiplicity; ++rep) pts.push_back(z);
      }
      if (res.f.in_domain(kvec))
        res.f.set(kvec, QValue(m, std::move(pts)));
      else
        warn("covered cell outside the field domain");
    } else if (cell.a_mult < Q) {
      res.Z.push_back(kvec);
    } else {
      res.N_set.push_back(kvec);
    }
  }
  if (res.Y.empty()) warn("no fully covered cells: height field is empty");

  res.lip_measured = res.f.masked_count() >= 2 ? res.f.measured_lip() : 0.0;
  res.lip_ok = res.lip_measured <= params.L * (1.0 + 1e-12);
  if (!res.lip_ok)
    res.warnings.push_back("measured Lipschitz constant exceeds L");

  // Covering estimate: uncovered base area plus the mass above it, against
  // the bad mass.
  const double dxn = std::pow(dx, n);
  res.gamma3 = std::max(3.0 + 2.0 * Q + (12.0 * Q + 6.0) * std::pow(5.0, n),
                        4.0 * (Q + 2) / params.delta[0]);
  {
    std::vector<double> bmass, dmass;
    for (int i : res.B) {
      const Atom& a = v.atoms()[i];
      bmass.push_back(a.multiplicity * a.weight);
    }
    res.mu_B = pairwise_sum(bmass);
    long uncovered = 0;
    for (const auto& [key, cell] : cells) {
      // Covered cells are the fully layered ones untouched by bad atoms;
      // everything else above the disc (including atoms binned outside the
      // disc cells) belongs to the uncovered region.
      const bool covered = cell.disc && cell.a_mult == Q && !cell.has_b;
      if (covered) continue;
      if (cell.disc) ++uncovered;
      dmass.push_back(cell.mass_in_c);
    }
    res.ln_Cprime = uncovered * dxn;
    res.mu_D = pairwise_sum(dmass);
    res.ratio3_vacuous = res.mu_B == 0.0;
    res.ratio3 =
        res.ratio3_vacuous ? 0.0 : (res.ln_Cprime + res.mu_D) / res.mu_B;
  }

  // Empirical pairing radius: the largest grid fraction lambda such that
  // every graphical atom pairs with every covered cell within lambda r
  // through the one-sided Lipschitz cone.
  {
    std::vector<Eigen::VectorXd> y_centers;
    std::vector<const std::vector<int>*> y_atoms;
    for (const Eigen::VectorXi& kvec : res.Y) {
      Eigen::VectorXd center(n);
      for (int j = 0; j < n; ++j) center(j) = (kvec(j) + 0.5) * dx;
      y_centers.push_back(center);
      std::vector<int> key(kvec.data(), kvec.data() + n);
      y_atoms.push_back(&cells.at(key).a_atoms);
    }
    long a_missing = 0;
    for (int i : res.A)
      if (!is_h[i]) ++a_missing;
    res.a_outside_h = a_missing;

    const Eigen::MatrixXd bt = c.axis.basis().transpose();
    for (int grid_step = 20; grid_step >= 1; --grid_step) {
      const double lambda = 0.05 * grid_step;
      bool ok = true;
      long pairs = 0;
      for (size_t hi = 0; hi < res.H.size() && ok; ++hi) {
        const Atom& x1 = v.atoms()[res.H[hi]];
        const Eigen::VectorXd base1 = c.base_coords(x1.position);
        for (size_t yi = 0; yi < y_centers.size() && ok; ++yi) {
          if ((y_centers[yi] - base1).norm() > lambda * r) continue;
          ++pairs;
          bool paired = false;
          for (int j : *y_atoms[yi]) {
            const Atom& x2 = v.atoms()[j];
            const Eigen::VectorXd d = x2.position - x1.position;
            if ((nt * d).norm() <=
                params.L * (bt * d).norm() + 1e-12) {
              paired = true;
              break;
            }
          }
          if (!paired) ok = false;
        }
      }
      if (ok) {
        res.lambda4 = lambda;
        res.pairs4_checked = pairs;
        break;
      }
    }
  }

  // Coarea accounting over the disc cells.
  {
    const double shrink = 1.0 - n * params.eps * params.eps;
    std::vector<double> a_mass, a_nu, c_mass, b_mass;
    for (const auto& [key, cell] : cells) {
      if (!cell.disc) continue;
      c_mass.push_back(cell.mass_in_c);
      b_mass.push_back(cell.mass_b);
      for (int i : cell.a_atoms) {
        const Atom& a = v.atoms()[i];
        const double w = a.multiplicity * a.weight;
        a_mass.push_back(w);
        a_nu.push_back(w * jacobian_lambda(a.tangent, c.axis));
      }
    }
    res.coarea_defect =
        std::max(0.0, shrink * pairwise_sum(a_mass) - pairwise_sum(a_nu));
    const double lhs = shrink * pairwise_sum(c_mass);
    const double rhs =
        pairwise_sum(b_mass) +
        (static_cast<double>(Q) * res.Y.size() +
         static_cast<double>(Q - 1) * res.Z.size()) *
            dxn;
    res.coarea_cells_margin = rhs - lhs;
    res.coarea_cells_ok =
        res.coarea_cells_margin >= -1e-12 * (1.0 + std::abs(rhs));
  }

  res.z_bound_ok = static_cast<double>(res.Z.size()) * dxn <=
                   (4.0 / params.delta[0]) *
                           static_cast<double>(res.Y.size()) * dxn +
                       1e-12;

  // Default height-estimate diagnostic at q = 1 around the best-fitting
  // sheet tuple of the field.
  if (!res.Y.empty()) {
    const auto [s, height] = q_height_best(res.f, 2.0, 8);
    (void)height;
    const Conclusion6Report c6 =
        conclusion6_check(v, res, QPlane(c.axis, s), 1.0);
    if (c6.applicable) {
      const double rhs = c6.factor * (c6.g_norm + c6.area_term);
      res.ratio6 = rhs > 0.0 ? c6.lhs / rhs : 0.0;
    }
  }

  return res;
}

Conclusion6Report conclusion6_check(const DiscreteVarifold& v,
                                    const ApproxResult& res, const QPlane& p,
                                    double q) {
  if (!(q >= 1.0) && !std::isinf(q))
    throw std::invalid_argument("conclusion6_check: need q >= 1 or inf");
  if ((p.axis().projection() - res.cyl.axis.projection()).norm() >
      kStructuralTol)
    throw std::invalid_argument("conclusion6_check: plane axis mismatch");
  if (p.q() != res.Q)
    throw std::invalid_argument("conclusion6_check: sheet count mismatch");

  const int n = v.n();
  const double wn = unit_ball(n);
  const double dxn = std::pow(res.dx, n);
  const double uncovered =
      (res.disc_cells - static_cast<double>(res.Y.size())) * dxn;

  Conclusion6Report rep;
  rep.q = q;
  rep.applicable =
      uncovered <=
      0.5 * wn * std::pow(res.lambda4 * res.cyl.r / 6.0, n) + 1e-15;

  // L^q distance of the graphical atoms from the sheets.
  const Eigen::MatrixXd nt = res.cyl.axis.perp_basis().transpose();
  LqAccumulator dist_acc(q);
  double dist_sup = 0.0;
  for (int i : res.H) {
    const Atom& a = v.atoms()[i];
    const double d = p.dist_to_sheets(nt * a.position);
    dist_acc.add(a.multiplicity * a.weight, d);
    dist_sup = std::max(dist_sup, d);
  }
  rep.sup_lhs = dist_sup;

  // Per-cell mismatch over the covered cells (Lebesgue weights).
  LqAccumulator g_acc(q);
  double g_sup = 0.0;
  for (const Eigen::VectorXi& k : res.Y) {
    const double g = metric_g(res.f.value(k), p.offsets());
    g_acc.add(dxn, g);
    g_sup = std::max(g_sup, g);
  }
  rep.sup_rhs = g_sup + 2.0 * std::pow(uncovered / wn, 1.0 / n);
  rep.sup_holds = rep.sup_lhs <= rep.sup_rhs + 1e-12 * (1.0 + rep.sup_rhs);

  if (std::isinf(q)) {
    // The sup-norm variant is the whole statement at q = inf.
    rep.factor = 1.0;
    rep.lhs = dist_sup;
    rep.g_norm = g_sup;
    rep.area_term = 2.0 * std::pow(uncovered / wn, 1.0 / n);
    rep.holds_with_gamma1 = rep.sup_holds;
    rep.gamma6_empirical =
        rep.area_term > 0.0
            ? std::max(0.0, (rep.lhs - rep.g_norm) / rep.area_term)
            : 0.0;
    return rep;
  }

  rep.factor = std::pow(12.0, n + 1) * res.Q;
  rep.lhs = dist_acc.value();
  rep.g_norm = g_acc.value();
  rep.area_term = std::pow(uncovered, 1.0 / q + 1.0 / n);
  const double rhs = rep.factor * (rep.g_norm + rep.area_term);
  rep.holds_with_gamma1 = rep.lhs <= rhs + 1e-12 * (1.0 + rhs);
  rep.gamma6_empirical =
      rep.area_term > 0.0
          ? std::max(0.0, (rep.lhs / rep.factor - rep.g_norm) / rep.area_term)
          : 0.0;
  return rep;
}

std::string Conclusion6Report::to_kv() const {
  std::ostringstream out;
  out << kv("applicable", applicable) << kv("q", q) << kv("lhs", lhs)
      << kv("g_norm", g_norm) << kv("area_term", area_term)
      << kv("factor", factor) << kv("gamma6_empirical", gamma6_empirical)
      << kv("holds_with_gamma1", holds_with_gamma1) << kv("sup_lhs", sup_lhs)
      << kv("sup_rhs", sup_rhs) << kv("sup_holds", sup_holds);
  return out.str();
}

std::string ApproxResult::diagnostics_kv() const {
  std::ostringstream out;
  out << kv("n", cyl.axis.dim()) << kv("Q", Q) << kv("dx", dx)
      << kv("r", cyl.r) << kv("h", cyl.h) << kv("eps", params.eps)
      << kv("eps1", params.eps1);
  for (int i = 0; i < 5; ++i)
    out << kv("delta" + std::to_string(i + 1), params.delta[i]);
  out << kv("L", params.L) << kv("M", params.M)
      << kv("schedule_size", static_cast<long>(params.radii_schedule.size()))
      << kv("atoms_B", static_cast<long>(B.size()))
      << kv("atoms_A", static_cast<long>(A.size()))
      << kv("atoms_H", static_cast<long>(H.size()))
      << kv("atoms_G", static_cast<long>(G.size()))
      << kv("cells_Y", static_cast<long>(Y.size()))
      << kv("cells_Z", static_cast<long>(Z.size()))
      << kv("cells_N", static_cast<long>(N_set.size()))
      << kv("disc_cells", disc_cells) << kv("lip_measured", lip_measured)
      << kv("lip_ok", lip_ok) << kv("mu_C", mu_C) << kv("mu_B", mu_B)
      << kv("mu_U", mu_U) << kv("ln_Cprime", ln_Cprime) << kv("mu_D", mu_D)
      << kv("ratio3", ratio3) << kv("ratio3_vacuous", ratio3_vacuous)
      << kv("gamma3", gamma3) << kv("lambda4", lambda4)
      << kv("pairs4_checked", pairs4_checked)
      << kv("a_outside_h", a_outside_h)
      << kv("coarea_defect", coarea_defect)
      << kv("coarea_cells_ok", coarea_cells_ok)
      << kv("coarea_cells_margin", coarea_cells_margin)
      << kv("z_bound_ok", z_bound_ok) << kv("ratio6", ratio6)
      << kv("hypotheses_ok", hypotheses_ok);
  for (size_t i = 0; i < warnings.size(); ++i)
    out << "warning_" << (i + 1) << "=" << warnings[i] << "\n";
  return out.str();
}

void save_approx(const ApproxResult& res, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_text(dir + "/diagnostics.txt", res.diagnostics_kv());
  write_atom_set(dir + "/atoms_B.csv", res.B);
  write_atom_set(dir + "/atoms_A.csv", res.A);
  write_atom_set(dir + "/atoms_H.csv", res.H);
  write_atom_set(dir + "/atoms_G.csv", res.G);
  write_cell_set(dir + "/cells_Y.csv", res.Y);
  write_cell_set(dir + "/cells_Z.csv", res.Z);
  write_cell_set(dir + "/cells_N.csv", res.N_set);
  save_csv(res.f, dir + "/field.csv");
}

}  // namespace varex
