#include "varex/excess.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include "varex/numeric.hpp"
#include "varex/tolerances.hpp"

namespace varex {

namespace {

void require_exponent(double q, const char* who) {
  if (!(q >= 1.0))
    throw std::invalid_argument(std::string(who) +
                                ": exponent must be >= 1 (or infinity)");
}

double inv_exponent(double q) { return std::isinf(q) ? 0.0 : 1.0 / q; }

bool lex_less_points(const QValue& a, const QValue& b) {
  for (int i = 0; i < std::min(a.q(), b.q()); ++i) {
    const auto& pa = a.point(i);
    const auto& pb = b.point(i);
    for (int j = 0; j < pa.size(); ++j) {
      if (pa(j) < pb(j)) return true;
      if (pa(j) > pb(j)) return false;
    }
  }
  return a.q() < b.q();
}

// Expand a cell's (height, multiplicity) list into a flat Q-point tuple.
QValue expand_heights(const FiberCell& cell, int m) {
  std::vector<Eigen::VectorXd> pts;
  pts.reserve(cell.total_multiplicity);
  for (const auto& [z, mult] : cell.heights)
    for (int i = 0; i < mult; ++i) pts.push_back(z);
  return QValue(m, std::move(pts));
}

}  // namespace

QPlane::QPlane(Plane axis_plane, QValue offsets)
    : axis_(std::move(axis_plane)), offsets_(std::move(offsets)) {
  const int m = axis_.ambient() - axis_.dim();
  if (offsets_.m() != m)
    throw std::invalid_argument(
        "QPlane: offsets must live in the perp coordinates of the axis");
  // Offsets re-embedded in ambient space must be orthogonal to the axis.
  for (const auto& s : offsets_.points()) {
    const Eigen::VectorXd ambient = axis_.perp_basis() * s;
    if (axis_.project(ambient).norm() > kStructuralTol)
      throw std::invalid_argument("QPlane: offset not orthogonal to axis");
  }
}

double QPlane::dist_to_sheets(const Eigen::VectorXd& z_perp) const {
  double best = kInf;
  for (const auto& s : offsets_.points())
    best = std::min(best, (z_perp - s).norm());
  return best;
}

double qplane_metric(const QPlane& p1, const QPlane& p2) {
  if (grassmann_dist(p1.axis(), p2.axis()) > kStructuralTol)
    throw std::invalid_argument("qplane_metric: axis planes differ");
  return metric_g(p1.offsets(), p2.offsets());
}

FiberLayers fiber_layers(const DiscreteVarifold& v, const Cylinder& c,
                         double dx) {
  if (!(dx > 0)) throw std::invalid_argument("fiber_layers: dx must be > 0");
  if (c.axis.dim() != v.n() || c.axis.ambient() != v.ambient())
    throw std::invalid_argument("fiber_layers: cylinder does not match v");
  const int n = v.n();
  const Eigen::MatrixXd nt = c.axis.perp_basis().transpose();

  struct CellData {
    std::vector<std::pair<Eigen::VectorXd, int>> heights;
    int total = 0;
    double mass = 0.0;
  };
  std::map<std::vector<int>, CellData> table;

  for (const Atom& a : v.atoms()) {
    if (!c.contains(a.position)) continue;
    const Eigen::VectorXd y = c.base_coords(a.position);
    std::vector<int> key(n);
    for (int j = 0; j < n; ++j)
      key[j] = static_cast<int>(std::floor(y(j) / dx));
    CellData& cell = table[key];
    cell.heights.emplace_back(nt * a.position, a.multiplicity);
    cell.total += a.multiplicity;
    cell.mass += a.multiplicity * a.weight;
  }

  // Ensure every cell whose center lies in the base disc is present.
  const int k_lo = static_cast<int>(std::ceil(-c.r / dx - 0.5 - 1e-9));
  const int k_hi = static_cast<int>(std::floor(c.r / dx - 0.5 + 1e-9));
  std::vector<int> k(n, k_lo);
  if (k_hi >= k_lo) {
    while (true) {
      double norm2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double t = (k[j] + 0.5) * dx;
        norm2 += t * t;
      }
      if (norm2 <= c.r * c.r * (1.0 + 1e-12)) table[k];  // insert if missing
      int axis = n - 1;
      while (axis >= 0) {
        if (++k[axis] <= k_hi) break;
        k[axis] = k_lo;
        --axis;
      }
      if (axis < 0) break;
    }
  }

  FiberLayers out(c.center, c.axis, c.r, c.h, dx);
  out.cells.reserve(table.size());
  for (auto& [key, data] : table) {
    FiberCell cell;
    cell.index = Eigen::Map<const Eigen::VectorXi>(key.data(), n);
    // Merge bit-identical heights, keeping the list sorted.
    std::sort(data.heights.begin(), data.heights.end(),
              [](const auto& a, const auto& b) {
                for (int j = 0; j < a.first.size(); ++j) {
                  if (a.first(j) < b.first(j)) return true;
                  if (a.first(j) > b.first(j)) return false;
                }
                return false;
              });
    for (const auto& [z, mult] : data.heights) {
      if (!cell.heights.empty() && cell.heights.back().first == z)
        cell.heights.back().second += mult;
      else
        cell.heights.emplace_back(z, mult);
    }
    cell.total_multiplicity = data.total;
    cell.mass = data.mass;
    double norm2 = 0.0;
    for (int j = 0; j < n; ++j) {
      const double t = (key[j] + 0.5) * dx;
      norm2 += t * t;
    }
    cell.center_in_disc = norm2 <= c.r * c.r * (1.0 + 1e-12);
    if (cell.center_in_disc) ++out.disc_cell_count;
    out.cells.push_back(std::move(cell));
  }
  return out;
}

double t_q(const DiscreteVarifold& v, const Cylinder& c, double q) {
  require_exponent(q, "t_q");
  if (c.axis.dim() != v.n() || c.axis.ambient() != v.ambient())
    throw std::invalid_argument("t_q: cylinder does not match v");
  LqAccumulator acc(q);
  for (const Atom& a : v.atoms()) {
    if (!c.contains(a.position)) continue;
    acc.add(a.multiplicity * a.weight, grassmann_dist(a.tangent, c.axis));
  }
  return std::pow(c.r, -static_cast<double>(v.n()) * inv_exponent(q)) *
         acc.value();
}

HeightReport h_q_plane(const DiscreteVarifold& v, const Cylinder& c,
                       const QPlane& p, double q, double cell_dx,
                       bool validate_scan) {
  require_exponent(q, "h_q_plane");
  if (grassmann_dist(p.axis(), c.axis) > kStructuralTol)
    throw std::invalid_argument("h_q_plane: plane not parallel to cylinder");
  if (c.axis.dim() != v.n() || c.axis.ambient() != v.ambient())
    throw std::invalid_argument("h_q_plane: cylinder does not match v");
  const int n = v.n();
  const int m = v.m();
  const int Q = p.q();
  const double dx = cell_dx > 0 ? cell_dx : v.mesh_scale();
  const double invq = inv_exponent(q);
  const double prefactor = std::pow(c.r, -1.0 - n * invq);
  const double area_exp = invq + 1.0 / n;
  const double cell_vol = std::pow(dx, n);

  HeightReport rep(p);
  rep.cell_dx = dx;

  // First summand: L^q distance of the samples to the nearest sheet.
  const Eigen::MatrixXd nt = c.axis.perp_basis().transpose();
  LqAccumulator dist_acc(q);
  for (const Atom& a : v.atoms()) {
    if (!c.contains(a.position)) continue;
    dist_acc.add(a.multiplicity * a.weight,
                 p.dist_to_sheets(nt * a.position));
  }
  rep.term_dist = prefactor * dist_acc.value();

  // Plane-side fiber: sheets whose height lies within the cylinder.
  const Eigen::VectorXd a_perp = nt * c.center;
  std::vector<Eigen::VectorXd> sheets;
  for (const auto& s : p.offsets().points())
    if (std::isinf(c.h) || (s - a_perp).norm() <= c.h) sheets.push_back(s);
  const bool plane_complete = static_cast<int>(sheets.size()) == Q;

  // Per-cell mismatch g over the disc cells; non-Q fibers get g = +inf.
  const FiberLayers layers = fiber_layers(v, c, dx);
  rep.disc_cells = layers.disc_cell_count;
  std::vector<double> finite_g;
  for (const FiberCell& cell : layers.cells) {
    if (!cell.center_in_disc) continue;
    if (!plane_complete || cell.total_multiplicity != Q) continue;
    finite_g.push_back(
        metric_g(expand_heights(cell, m), QValue(m, sheets)));
  }
  std::sort(finite_g.begin(), finite_g.end());
  rep.candidate_cells = static_cast<int>(finite_g.size());

  const double disc_area = layers.disc_cell_count * cell_vol;
  const auto area_of = [&](int y_count) {
    return std::max(0.0, disc_area - y_count * cell_vol);
  };

  // Threshold scan: Y = the k cells of smallest g, k = 0..N.
  double best_g_term = 0.0;
  double best_area_term = std::pow(area_of(0), area_exp);
  double best_value = best_g_term + best_area_term;
  int best_k = 0;
  double running_pow_sum = 0.0;
  for (int k = 1; k <= static_cast<int>(finite_g.size()); ++k) {
    const double g = finite_g[k - 1];
    double g_term;
    if (std::isinf(q)) {
      g_term = g;
    } else {
      running_pow_sum += cell_vol * std::pow(g, q);
      g_term = std::pow(running_pow_sum, invq);
    }
    const double area_term = std::pow(area_of(k), area_exp);
    const double value = g_term + area_term;
    if (value < best_value) {
      best_value = value;
      best_g_term = g_term;
      best_area_term = area_term;
      best_k = k;
    }
  }

  // Optional exhaustive cross-check on small instances.
  if (validate_scan && finite_g.size() <= 20) {
    rep.scan_validated = true;
    const int nn = static_cast<int>(finite_g.size());
    double brute = kInf, brute_g = 0.0, brute_area = 0.0;
    unsigned brute_mask = 0;
    for (unsigned mask = 0; mask < (1u << nn); ++mask) {
      double pow_sum = 0.0, sup = 0.0;
      int count = 0;
      for (int i = 0; i < nn; ++i) {
        if (!(mask & (1u << i))) continue;
        ++count;
        if (std::isinf(q))
          sup = std::max(sup, finite_g[i]);
        else
          pow_sum += cell_vol * std::pow(finite_g[i], q);
      }
      const double g_term =
          std::isinf(q) ? sup : std::pow(pow_sum, invq);
      const double area_term = std::pow(area_of(count), area_exp);
      if (g_term + area_term < brute) {
        brute = g_term + area_term;
        brute_g = g_term;
        brute_area = area_term;
        brute_mask = mask;
      }
    }
    if (brute < best_value - 1e-12 * (1.0 + std::abs(best_value))) {
      rep.scan_matched = false;
      best_value = brute;
      best_g_term = brute_g;
      best_area_term = brute_area;
      best_k = 0;
      double thr = -1.0;
      for (int i = 0; i < nn; ++i)
        if (brute_mask & (1u << i)) {
          ++best_k;
          thr = std::max(thr, finite_g[i]);
        }
      rep.y_threshold = thr;
    }
  }

  rep.term_g = prefactor * best_g_term;
  rep.term_area = prefactor * best_area_term;
  rep.y_cells = best_k;
  if (rep.scan_matched)
    rep.y_threshold = best_k > 0 ? finite_g[best_k - 1] : -1.0;
  rep.total = rep.term_dist + rep.term_g + rep.term_area;
  return rep;
}

HeightReport h_q_best(const DiscreteVarifold& v, const Cylinder& c, int Q,
                      double q, double cell_dx) {
  require_exponent(q, "h_q_best");
  if (Q < 1) throw std::invalid_argument("h_q_best: Q must be >= 1");
  const int n = v.n();
  const int m = v.m();
  const double dx = cell_dx > 0 ? cell_dx : v.mesh_scale();

  // Collect the Q-point fiber cells as a field over the base disc.
  const FiberLayers layers = fiber_layers(v, c, dx);
  GridSpec grid(n, dx, c.r, Eigen::VectorXd::Zero(n),
                Eigen::VectorXd::Constant(n, dx / 2.0));
  QField field(grid, Q, m);
  std::vector<QValue> cell_tuples;
  for (const FiberCell& cell : layers.cells) {
    if (!cell.center_in_disc || cell.total_multiplicity != Q) continue;
    QValue tuple = expand_heights(cell, m);
    if (field.in_domain(cell.index)) field.set(cell.index, tuple);
    cell_tuples.push_back(std::move(tuple));
  }

  std::vector<QValue> candidates;
  if (field.masked_count() > 0)
    candidates.push_back(q_height_best(field, q).first);
  std::mt19937_64 rng(0xa5a5a5a5ull);
  std::vector<size_t> order(cell_tuples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  for (size_t i = 0; i < std::min<size_t>(order.size(), 20); ++i)
    candidates.push_back(cell_tuples[order[i]]);
  candidates.push_back(QValue::constant(Q, Eigen::VectorXd::Zero(m)));

  std::optional<HeightReport> best;
  for (const QValue& cand : candidates) {
    HeightReport rep = h_q_plane(v, c, QPlane(c.axis, cand), q, dx);
    if (!best || rep.total < best->total - 1e-15 * (1.0 + best->total) ||
        (rep.total <= best->total + 1e-15 * (1.0 + best->total) &&
         lex_less_points(rep.plane.offsets(), best->plane.offsets())))
      best = std::move(rep);
  }
  return *best;  // the zero-offset candidate guarantees one report
}

std::string HeightReport::to_kv() const {
  std::ostringstream out;
  out << "term_dist=" << g17(term_dist) << '\n';
  out << "term_g=" << g17(term_g) << '\n';
  out << "term_area=" << g17(term_area) << '\n';
  out << "y_threshold=" << g17(y_threshold) << '\n';
  out << "total=" << g17(total) << '\n';
  out << "cell_dx=" << g17(cell_dx) << '\n';
  out << "y_cells=" << y_cells << '\n';
  out << "candidate_cells=" << candidate_cells << '\n';
  out << "disc_cells=" << disc_cells << '\n';
  out << "scan_validated=" << (scan_validated ? 1 : 0) << '\n';
  out << "scan_matched=" << (scan_matched ? 1 : 0) << '\n';
  out << "plane_q=" << plane.q() << '\n';
  for (int i = 0; i < plane.q(); ++i)
    for (int j = 0; j < plane.offsets().m(); ++j)
      out << "offset_" << (i + 1) << '_' << (j + 1) << '='
          << g17(plane.offsets().point(i)(j)) << '\n';
  return out.str();
}

}  // namespace varex
