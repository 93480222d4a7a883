#include "varex/qvalued.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace varex {

namespace {

bool lex_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (int i = 0; i < a.size(); ++i) {
    if (a(i) < b(i)) return true;
    if (a(i) > b(i)) return false;
  }
  return false;
}

// Square-matrix Hungarian algorithm with potentials, O(Q^3).
// Returns the minimal total cost; if row_to_col is non-null, also the
// minimizing assignment found by the algorithm (deterministic, but not
// necessarily the lexicographically smallest optimum).
double hungarian(const std::vector<std::vector<double>>& cost,
                 std::vector<int>* row_to_col = nullptr) {
  const int n = static_cast<int>(cost.size());
  if (n == 0) return 0.0;
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  double total = 0.0;
  if (row_to_col) row_to_col->assign(n, -1);
  for (int j = 1; j <= n; ++j) {
    total += cost[p[j] - 1][j - 1];
    if (row_to_col) (*row_to_col)[p[j] - 1] = j - 1;
  }
  return total;
}

std::vector<std::vector<double>> squared_cost(const QValue& a,
                                              const QValue& b) {
  const int q = a.q();
  std::vector<std::vector<double>> c(q, std::vector<double>(q));
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j)
      c[i][j] = (a.point(i) - b.point(j)).squaredNorm();
  return c;
}

void check_compatible(const QValue& a, const QValue& b, const char* who) {
  if (a.q() != b.q() || a.m() != b.m())
    throw std::invalid_argument(std::string(who) +
                                ": Q-tuples must share q and m");
  if (a.q() == 0)
    throw std::invalid_argument(std::string(who) + ": empty Q-tuple");
}

// Kuhn augmenting-path matcher on an explicit bipartite adjacency.
bool kuhn_try(int row, const std::vector<std::vector<int>>& adj,
              std::vector<char>& seen, std::vector<int>& col_owner) {
  for (int col : adj[row]) {
    if (seen[col]) continue;
    seen[col] = 1;
    if (col_owner[col] < 0 ||
        kuhn_try(col_owner[col], adj, seen, col_owner)) {
      col_owner[col] = row;
      return true;
    }
  }
  return false;
}

bool has_perfect_matching(const std::vector<std::vector<int>>& adj, int cols) {
  std::vector<int> col_owner(cols, -1);
  for (size_t r = 0; r < adj.size(); ++r) {
    std::vector<char> seen(cols, 0);
    if (!kuhn_try(static_cast<int>(r), adj, seen, col_owner)) return false;
  }
  return true;
}

}  // namespace

QValue::QValue(int m, std::vector<Eigen::VectorXd> points)
    : m_(m), points_(std::move(points)) {
  if (m < 1) throw std::invalid_argument("QValue: m must be >= 1");
  for (const auto& p : points_)
    if (p.size() != m)
      throw std::invalid_argument("QValue: point dimension mismatch");
  std::sort(points_.begin(), points_.end(), lex_less);
}

QValue QValue::constant(int q, const Eigen::VectorXd& point) {
  if (q < 1) throw std::invalid_argument("QValue::constant: q must be >= 1");
  return QValue(static_cast<int>(point.size()),
                std::vector<Eigen::VectorXd>(q, point));
}

QValue QValue::translated(const Eigen::VectorXd& shift) const {
  if (shift.size() != m_)
    throw std::invalid_argument("QValue::translated: shift dimension mismatch");
  std::vector<Eigen::VectorXd> pts = points_;
  for (auto& p : pts) p += shift;
  return QValue(m_, std::move(pts));
}

Assignment optimal_assignment(const QValue& a, const QValue& b) {
  check_compatible(a, b, "optimal_assignment");
  const int q = a.q();
  const auto cost = squared_cost(a, b);
  const double best = hungarian(cost);
  const double tol = 1e-12 * (1.0 + best);

  // Greedy lexicographic extraction: fix rows in order to the smallest
  // column that still admits an optimal completion.
  std::vector<int> perm(q, -1);
  std::vector<char> used(q, 0);
  double fixed = 0.0;
  for (int i = 0; i < q; ++i) {
    bool placed = false;
    for (int j = 0; j < q && !placed; ++j) {
      if (used[j]) continue;
      // Optimal completion over rows > i and the remaining columns.
      std::vector<int> cols;
      for (int jj = 0; jj < q; ++jj)
        if (!used[jj] && jj != j) cols.push_back(jj);
      std::vector<std::vector<double>> sub(q - i - 1,
                                           std::vector<double>(cols.size()));
      for (int r = i + 1; r < q; ++r)
        for (size_t cidx = 0; cidx < cols.size(); ++cidx)
          sub[r - i - 1][cidx] = cost[r][cols[cidx]];
      const double rest = hungarian(sub);
      if (fixed + cost[i][j] + rest <= best + tol) {
        perm[i] = j;
        used[j] = 1;
        fixed += cost[i][j];
        placed = true;
      }
    }
    if (!placed)
      throw std::logic_error("optimal_assignment: completion search failed");
  }
  return Assignment{best, std::move(perm)};
}

double metric_g(const QValue& a, const QValue& b) {
  check_compatible(a, b, "metric_g");
  return std::sqrt(std::max(0.0, hungarian(squared_cost(a, b))));
}

std::optional<std::vector<int>> bounded_matching(const QValue& a,
                                                 const QValue& b, double d) {
  check_compatible(a, b, "bounded_matching");
  if (!(d >= 0))
    throw std::invalid_argument("bounded_matching: d must be >= 0");
  const int q = a.q();
  std::vector<std::vector<int>> adj(q);
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j)
      if ((a.point(i) - b.point(j)).norm() < d) adj[i].push_back(j);
  if (!has_perfect_matching(adj, q)) return std::nullopt;

  // Lexicographically smallest feasible permutation: fix rows in order to
  // the smallest column leaving the rest matchable (Hall check by matching).
  std::vector<int> perm(q, -1);
  std::vector<char> used(q, 0);
  for (int i = 0; i < q; ++i) {
    bool placed = false;
    for (int j : adj[i]) {
      if (used[j]) continue;
      std::vector<std::vector<int>> rest;
      for (int r = i + 1; r < q; ++r) {
        std::vector<int> row;
        for (int c : adj[r])
          if (!used[c] && c != j) row.push_back(c);
        rest.push_back(std::move(row));
      }
      if (has_perfect_matching(rest, q)) {
        perm[i] = j;
        used[j] = 1;
        placed = true;
        break;
      }
    }
    if (!placed)
      throw std::logic_error("bounded_matching: completion search failed");
  }
  return perm;
}

GridSpec::GridSpec(int n_, double dx_, double radius_)
    : GridSpec(n_, dx_, radius_, Eigen::VectorXd::Zero(n_),
               Eigen::VectorXd::Zero(n_)) {}

GridSpec::GridSpec(int n_, double dx_, double radius_,
                   Eigen::VectorXd ball_center_, Eigen::VectorXd origin_)
    : n(n_),
      dx(dx_),
      radius(radius_),
      ball_center(std::move(ball_center_)),
      origin(std::move(origin_)) {
  if (n < 1) throw std::invalid_argument("GridSpec: n must be >= 1");
  if (!(dx > 0)) throw std::invalid_argument("GridSpec: dx must be > 0");
  if (!(radius > 0)) throw std::invalid_argument("GridSpec: radius must be > 0");
  if (ball_center.size() != n || origin.size() != n)
    throw std::invalid_argument("GridSpec: center/origin dimension mismatch");
}

Eigen::VectorXd GridSpec::node(const Eigen::VectorXi& k) const {
  return origin + dx * k.cast<double>();
}

bool GridSpec::in_ball(const Eigen::VectorXi& k) const {
  return (node(k) - ball_center).squaredNorm() <=
         radius * radius * (1.0 + 1e-12);
}

QField::QField(GridSpec grid, int q, int m)
    : grid_(std::move(grid)), q_(q), m_(m) {
  if (q < 1 || m < 1) throw std::invalid_argument("QField: need q,m >= 1");
  const int n = grid_.n;
  kmin_.resize(n);
  kmax_.resize(n);
  for (int j = 0; j < n; ++j) {
    const double lo =
        (grid_.ball_center(j) - grid_.radius - grid_.origin(j)) / grid_.dx;
    const double hi =
        (grid_.ball_center(j) + grid_.radius - grid_.origin(j)) / grid_.dx;
    kmin_(j) = static_cast<int>(std::ceil(lo - 1e-9));
    kmax_(j) = static_cast<int>(std::floor(hi + 1e-9));
  }
  strides_.assign(n, 1);
  long total = 1;
  for (int j = n - 1; j >= 0; --j) {
    strides_[j] = total;
    total *= (kmax_(j) - kmin_(j) + 1);
  }
  in_ball_.assign(total, 0);
  mask_.assign(total, 0);
  values_.assign(total, QValue());

  // Lexicographic sweep of the bounding box.
  Eigen::VectorXi k = kmin_;
  while (true) {
    if (grid_.in_ball(k)) {
      in_ball_[flat(k)] = 1;
      domain_nodes_.push_back(k);
    }
    int axis = n - 1;
    while (axis >= 0) {
      if (++k(axis) <= kmax_(axis)) break;
      k(axis) = kmin_(axis);
      --axis;
    }
    if (axis < 0) break;
  }
}

long QField::flat(const Eigen::VectorXi& k) const {
  long id = 0;
  for (int j = 0; j < grid_.n; ++j) {
    if (k(j) < kmin_(j) || k(j) > kmax_(j)) return -1;
    id += (k(j) - kmin_(j)) * strides_[j];
  }
  return id;
}

bool QField::in_domain(const Eigen::VectorXi& k) const {
  const long id = flat(k);
  return id >= 0 && in_ball_[id];
}

bool QField::masked(const Eigen::VectorXi& k) const {
  const long id = flat(k);
  return id >= 0 && mask_[id];
}

const QValue& QField::value(const Eigen::VectorXi& k) const {
  const long id = flat(k);
  if (id < 0 || !mask_[id])
    throw std::out_of_range("QField::value: node not in the masked domain");
  return values_[id];
}

void QField::set(const Eigen::VectorXi& k, QValue v) {
  const long id = flat(k);
  if (id < 0 || !in_ball_[id])
    throw std::out_of_range("QField::set: node outside the ball");
  if (v.q() != q_ || v.m() != m_)
    throw std::invalid_argument("QField::set: value has wrong q or m");
  if (!mask_[id]) ++masked_count_;
  mask_[id] = 1;
  values_[id] = std::move(v);
}

void QField::clear(const Eigen::VectorXi& k) {
  const long id = flat(k);
  if (id < 0) return;
  if (mask_[id]) --masked_count_;
  mask_[id] = 0;
  values_[id] = QValue();
}

Eigen::VectorXd QField::coords(const Eigen::VectorXi& k) const {
  return grid_.node(k);
}

long QField::linear_id(const Eigen::VectorXi& k) const {
  const long id = flat(k);
  if (id < 0) throw std::out_of_range("QField::linear_id: outside grid box");
  return id;
}

const std::vector<Eigen::VectorXi>& QField::domain_nodes() const {
  return domain_nodes_;
}

std::vector<Eigen::VectorXi> QField::masked_nodes() const {
  std::vector<Eigen::VectorXi> out;
  out.reserve(masked_count_);
  for (const auto& k : domain_nodes_)
    if (mask_[flat(k)]) out.push_back(k);
  return out;
}

std::vector<Eigen::VectorXi> QField::neighbors(const Eigen::VectorXi& k) const {
  std::vector<Eigen::VectorXi> out;
  for (int j = 0; j < grid_.n; ++j) {
    for (int step : {-1, 1}) {
      Eigen::VectorXi kk = k;
      kk(j) += step;
      if (in_domain(kk)) out.push_back(kk);
    }
  }
  return out;
}

double QField::measured_lip() const {
  double lip = 0.0;
  for (const auto& k : masked_nodes()) {
    for (int j = 0; j < grid_.n; ++j) {
      Eigen::VectorXi kk = k;
      kk(j) += 1;  // each unordered pair once
      if (!masked(kk)) continue;
      lip = std::max(lip, metric_g(value(k), value(kk)) / grid_.dx);
    }
  }
  return lip;
}

BranchSet branch_decompose(const QField& f, double lip_bound) {
  if (!(lip_bound >= 0))
    throw std::invalid_argument("branch_decompose: lip_bound must be >= 0");
  const double dx = f.grid().dx;
  const int q = f.q();
  const auto nodes = f.masked_nodes();

  std::map<long, int> idx_of;
  for (size_t i = 0; i < nodes.size(); ++i)
    idx_of[f.linear_id(nodes[i])] = static_cast<int>(i);

  double scale = 0.0;
  for (const auto& k : nodes)
    for (const auto& p : f.value(k).points())
      scale = std::max(scale, p.lpNorm<Eigen::Infinity>());

  const double tol_branch = 4.0 * dx * lip_bound;
  const double d = (lip_bound + tol_branch) * dx + 1e-12 * (1.0 + scale);

  // Glue layers across each grid edge by the bounded matching at slack d.
  struct HalfEdge {
    int to;
    std::vector<int> sigma;  // layer i here -> layer sigma[i] there
  };
  std::vector<std::vector<HalfEdge>> edges(nodes.size());
  for (size_t ui = 0; ui < nodes.size(); ++ui) {
    const auto& k = nodes[ui];
    for (int j = 0; j < f.grid().n; ++j) {
      Eigen::VectorXi kk = k;
      kk(j) += 1;
      if (!f.masked(kk)) continue;
      const int vi = idx_of.at(f.linear_id(kk));
      const double lip_here = metric_g(f.value(k), f.value(kk)) / dx;
      if (lip_here > lip_bound * (1.0 + 1e-9) + 1e-15)
        throw std::invalid_argument(
            "branch_decompose: lip_bound violated between nodes with "
            "linear ids " +
            std::to_string(f.linear_id(k)) + " and " +
            std::to_string(f.linear_id(kk)) + " (measured " + g17(lip_here) +
            ")");
      const auto sigma = bounded_matching(f.value(k), f.value(kk), d);
      if (!sigma)
        throw std::logic_error(
            "branch_decompose: no bounded matching at the gluing slack");
      std::vector<int> inverse(q, -1);
      for (int i = 0; i < q; ++i) inverse[(*sigma)[i]] = i;
      edges[ui].push_back(HalfEdge{vi, *sigma});
      edges[vi].push_back(HalfEdge{static_cast<int>(ui), std::move(inverse)});
    }
  }

  // Peel single-valued branches in deterministic slot order.  A branch may
  // hold at most one layer per node; competing layers start new branches.
  BranchSet out;
  out.lip_bound = lip_bound;
  out.tol_branch = tol_branch;
  std::vector<int> branch_of(nodes.size() * q, -1);
  for (size_t start = 0; start < nodes.size() * static_cast<size_t>(q);
       ++start) {
    if (branch_of[start] != -1) continue;
    const int bid = static_cast<int>(out.branches.size());
    out.branches.emplace_back();
    Branch& branch = out.branches.back();
    std::map<int, int> layer_at;  // node index -> layer
    std::queue<size_t> todo;
    branch_of[start] = bid;
    layer_at[static_cast<int>(start / q)] = static_cast<int>(start % q);
    todo.push(start);
    while (!todo.empty()) {
      const size_t slot = todo.front();
      todo.pop();
      const int u = static_cast<int>(slot / q);
      const int layer = static_cast<int>(slot % q);
      for (const HalfEdge& e : edges[u]) {
        const int partner_layer = e.sigma[layer];
        const size_t pslot = static_cast<size_t>(e.to) * q + partner_layer;
        if (branch_of[pslot] != -1) continue;
        if (layer_at.count(e.to)) continue;  // branch already covers that node
        branch_of[pslot] = bid;
        layer_at[e.to] = partner_layer;
        todo.push(pslot);
      }
    }
    for (const auto& [node_idx, layer] : layer_at)
      branch.layer_of[f.linear_id(nodes[node_idx])] = layer;
    // Lipschitz estimate over the glued edges inside this branch.
    double lip_est = 0.0;
    for (const auto& [node_idx, layer] : layer_at) {
      for (const HalfEdge& e : edges[node_idx]) {
        auto it = layer_at.find(e.to);
        if (it == layer_at.end() || it->second != e.sigma[layer]) continue;
        const double diff = (f.value(nodes[node_idx]).point(layer) -
                             f.value(nodes[e.to]).point(it->second))
                                .norm();
        lip_est = std::max(lip_est, diff / dx);
      }
    }
    branch.lip_estimate = lip_est;
  }
  return out;
}

Eigen::VectorXd branch_value(const QField& f, const Branch& b,
                             const Eigen::VectorXi& k) {
  const auto it = b.layer_of.find(f.linear_id(k));
  if (it == b.layer_of.end())
    throw std::out_of_range("branch_value: node not in branch domain");
  return f.value(k).point(it->second);
}

bool branch_contains(const Branch& b, long node_id) {
  return b.layer_of.count(node_id) > 0;
}

Eigen::MatrixXd branch_gradient(const QField& f, const Branch& b,
                                const Eigen::VectorXi& k) {
  const int n = f.grid().n;
  const double dx = f.grid().dx;
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(f.m(), n);
  const Eigen::VectorXd here = branch_value(f, b, k);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXi kp = k, km = k;
    kp(j) += 1;
    km(j) -= 1;
    const bool has_p = f.in_domain(kp) && f.masked(kp) &&
                       branch_contains(b, f.linear_id(kp));
    const bool has_m = f.in_domain(km) && f.masked(km) &&
                       branch_contains(b, f.linear_id(km));
    if (has_p && has_m) {
      grad.col(j) =
          (branch_value(f, b, kp) - branch_value(f, b, km)) / (2.0 * dx);
    } else if (has_p) {
      grad.col(j) = (branch_value(f, b, kp) - here) / dx;
    } else if (has_m) {
      grad.col(j) = (here - branch_value(f, b, km)) / dx;
    }
  }
  return grad;
}

double q_height(const QField& f, const QValue& s, double q) {
  if (s.q() != f.q() || s.m() != f.m())
    throw std::invalid_argument("q_height: tuple has wrong q or m");
  LqAccumulator acc(q);
  const double w = std::pow(f.grid().dx, f.grid().n);
  for (const auto& k : f.masked_nodes()) acc.add(w, metric_g(f.value(k), s));
  return acc.value();
}

namespace {

Eigen::VectorXd power_mean(const std::vector<Eigen::VectorXd>& points,
                           const std::vector<double>& weights, double q) {
  const int m = static_cast<int>(points.front().size());
  if (std::isinf(q)) {
    // 1-center (minimum enclosing ball) by the standard core-set iteration.
    Eigen::VectorXd z = points.front();
    for (int k = 1; k <= 300; ++k) {
      size_t far = 0;
      double best = -1.0;
      for (size_t i = 0; i < points.size(); ++i) {
        const double d = (points[i] - z).norm();
        if (d > best) {
          best = d;
          far = i;
        }
      }
      z += (points[far] - z) / (k + 1.0);
    }
    return z;
  }
  Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
  double wsum = 0.0;
  for (size_t i = 0; i < points.size(); ++i) {
    z += weights[i] * points[i];
    wsum += weights[i];
  }
  z /= wsum;
  if (q == 2.0) return z;
  double scale = 1e-15;
  for (const auto& p : points) scale = std::max(scale, p.norm());
  for (int iter = 0; iter < 60; ++iter) {
    Eigen::VectorXd num = Eigen::VectorXd::Zero(m);
    double den = 0.0;
    for (size_t i = 0; i < points.size(); ++i) {
      const double r = std::max((points[i] - z).norm(), 1e-14 * scale);
      const double w = weights[i] * std::pow(r, q - 2.0);
      num += w * points[i];
      den += w;
    }
    if (den <= 0) break;
    const Eigen::VectorXd znew = num / den;
    // Damp for q > 2 where the plain fixed point can overshoot.
    const Eigen::VectorXd step = (q > 2.0) ? (0.5 * (znew + z)).eval() : znew;
    if ((step - z).norm() < 1e-14 * (1.0 + z.norm())) {
      z = step;
      break;
    }
    z = step;
  }
  return z;
}

}  // namespace

std::pair<QValue, double> q_height_best(const QField& f, double q,
                                        int restarts) {
  const auto nodes = f.masked_nodes();
  if (nodes.empty())
    throw std::invalid_argument("q_height_best: empty masked domain");
  const int Q = f.q();
  const double w = std::pow(f.grid().dx, f.grid().n);

  std::vector<size_t> order(nodes.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(0x9e3779b97f4a7c15ULL);
  std::shuffle(order.begin(), order.end(), rng);

  QValue best_s = f.value(nodes[order[0]]);
  double best_val = q_height(f, best_s, q);

  const int starts = std::min<int>(restarts, static_cast<int>(nodes.size()));
  for (int r = 0; r < starts; ++r) {
    QValue s = f.value(nodes[order[r]]);
    double prev = q_height(f, s, q);
    if (prev < best_val) {
      best_val = prev;
      best_s = s;
    }
    for (int iter = 0; iter < 60; ++iter) {
      std::vector<std::vector<Eigen::VectorXd>> bucket(Q);
      std::vector<std::vector<double>> bw(Q);
      for (const auto& k : nodes) {
        const Assignment asg = optimal_assignment(f.value(k), s);
        for (int i = 0; i < Q; ++i) {
          bucket[asg.perm[i]].push_back(f.value(k).point(i));
          bw[asg.perm[i]].push_back(w);
        }
      }
      std::vector<Eigen::VectorXd> pts(Q);
      for (int j = 0; j < Q; ++j) pts[j] = power_mean(bucket[j], bw[j], q);
      s = QValue(f.m(), std::move(pts));
      const double val = q_height(f, s, q);
      if (val < best_val) {
        best_val = val;
        best_s = s;
      }
      if (std::abs(prev - val) < 1e-14 * (1.0 + val)) break;
      prev = val;
    }
  }
  return {best_s, best_val};
}

double q_tilt(const QField& f, double q) {
  if (f.masked_count() == 0) return 0.0;
  const BranchSet bs = branch_decompose(f, f.measured_lip());
  LqAccumulator acc(q);
  const double w = std::pow(f.grid().dx, f.grid().n);
  for (const auto& k : f.masked_nodes()) {
    const long id = f.linear_id(k);
    double sq = 0.0;
    for (const Branch& b : bs.branches) {
      if (!branch_contains(b, id)) continue;
      sq += branch_gradient(f, b, k).squaredNorm();
    }
    acc.add(w, std::sqrt(sq));
  }
  return acc.value();
}

QField lipschitz_extend(const QField& f,
                        const std::vector<Eigen::VectorXi>& target_nodes,
                        std::optional<double> clip_radius) {
  const auto sources = f.masked_nodes();
  if (sources.empty())
    throw std::invalid_argument("lipschitz_extend: empty masked domain");
  QField out(f.grid(), f.q(), f.m());

  auto clipped = [&](QValue v) {
    if (!clip_radius) return v;
    const double rr = *clip_radius;
    std::vector<Eigen::VectorXd> pts = v.points();
    for (auto& p : pts) {
      const double norm = p.norm();
      if (norm > rr) p *= rr / norm;
    }
    return QValue(v.m(), std::move(pts));
  };

  for (const auto& k : sources) out.set(k, clipped(f.value(k)));
  for (const auto& k : target_nodes) {
    if (!f.in_domain(k))
      throw std::invalid_argument("lipschitz_extend: target outside the ball");
    if (f.masked(k)) continue;
    const Eigen::VectorXd x = f.coords(k);
    size_t best = 0;
    double best_d = kInf;
    for (size_t i = 0; i < sources.size(); ++i) {
      const double d = (f.coords(sources[i]) - x).norm();
      if (d < best_d) {  // strict: lexicographic scan order breaks ties
        best_d = d;
        best = i;
      }
    }
    out.set(k, clipped(f.value(sources[best])));
  }
  return out;
}

PoincareReport sobolev_poincare_check(const QField& f, double q) {
  const int n = f.grid().n;
  if (!(q >= 1))
    throw std::invalid_argument("sobolev_poincare_check: q must be >= 1");
  if (q == static_cast<double>(n))
    throw std::invalid_argument(
        "sobolev_poincare_check: the borderline exponent q == n is excluded");
  double qs;
  if (q < n) {
    qs = n * q / (n - q);
  } else {
    qs = kInf;
  }
  PoincareReport rep;
  rep.tilt = q_tilt(f, q);
  auto [s, h] = q_height_best(f, qs);
  rep.center = s;
  rep.height = h;
  rep.exact_zero = (rep.tilt == 0.0);
  rep.ratio = rep.exact_zero ? 0.0 : rep.height / rep.tilt;
  return rep;
}

QField qfield_from_branches(
    const GridSpec& grid, int m,
    const std::vector<std::function<Eigen::VectorXd(const Eigen::VectorXd&)>>&
        branches) {
  if (branches.empty())
    throw std::invalid_argument("qfield_from_branches: need >= 1 branch");
  QField f(grid, static_cast<int>(branches.size()), m);
  for (const auto& k : f.domain_nodes()) {
    const Eigen::VectorXd x = f.coords(k);
    std::vector<Eigen::VectorXd> pts;
    pts.reserve(branches.size());
    for (const auto& u : branches) pts.push_back(u(x));
    f.set(k, QValue(m, std::move(pts)));
  }
  return f;
}

std::string to_csv(const QField& f) {
  std::ostringstream out;
  const int n = f.grid().n;
  out << "# qfield\n";
  out << "n,m,q,dx,radius\n";
  out << n << ',' << f.m() << ',' << f.q() << ',' << g17(f.grid().dx) << ','
      << g17(f.grid().radius) << '\n';
  out << "ball_center";
  for (int j = 0; j < n; ++j) out << ',' << g17(f.grid().ball_center(j));
  out << "\norigin";
  for (int j = 0; j < n; ++j) out << ',' << g17(f.grid().origin(j));
  out << '\n';
  for (int j = 0; j < n; ++j) out << 'k' << (j + 1) << ',';
  out << "mask";
  for (int i = 0; i < f.q(); ++i)
    for (int j = 0; j < f.m(); ++j) out << ",p" << (i + 1) << '_' << (j + 1);
  out << '\n';
  for (const auto& k : f.domain_nodes()) {
    if (!f.masked(k)) continue;
    for (int j = 0; j < n; ++j) out << k(j) << ',';
    out << 1;
    const QValue& v = f.value(k);
    for (int i = 0; i < f.q(); ++i)
      for (int j = 0; j < f.m(); ++j) out << ',' << g17(v.point(i)(j));
    out << '\n';
  }
  return out.str();
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

QField qfield_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "# qfield")
    throw std::invalid_argument("qfield csv: missing '# qfield' header");
  if (!std::getline(in, line))
    throw std::invalid_argument("qfield csv: truncated header");
  if (!std::getline(in, line))
    throw std::invalid_argument("qfield csv: truncated header");
  auto meta = split_line(line);
  if (meta.size() != 5)
    throw std::invalid_argument("qfield csv: malformed meta row");
  const int n = std::stoi(meta[0]);
  const int m = std::stoi(meta[1]);
  const int q = std::stoi(meta[2]);
  const double dx = std::stod(meta[3]);
  const double radius = std::stod(meta[4]);

  auto read_vec = [&](const char* tag) {
    if (!std::getline(in, line))
      throw std::invalid_argument("qfield csv: truncated header");
    auto f = split_line(line);
    if (f.size() != static_cast<size_t>(n + 1) || f[0] != tag)
      throw std::invalid_argument(std::string("qfield csv: expected ") + tag);
    Eigen::VectorXd v(n);
    for (int j = 0; j < n; ++j) v(j) = std::stod(f[j + 1]);
    return v;
  };
  const Eigen::VectorXd bc = read_vec("ball_center");
  const Eigen::VectorXd origin = read_vec("origin");
  if (!std::getline(in, line))
    throw std::invalid_argument("qfield csv: missing column header");

  QField f(GridSpec(n, dx, radius, bc, origin), q, m);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_line(line);
    if (fields.size() != static_cast<size_t>(n + 1 + q * m))
      throw std::invalid_argument("qfield csv: bad row width");
    Eigen::VectorXi k(n);
    for (int j = 0; j < n; ++j) k(j) = std::stoi(fields[j]);
    size_t idx = n + 1;
    std::vector<Eigen::VectorXd> pts(q, Eigen::VectorXd(m));
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < m; ++j) pts[i](j) = std::stod(fields[idx++]);
    f.set(k, QValue(m, std::move(pts)));
  }
  return f;
}

void save_csv(const QField& f, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_csv: cannot open " + path);
  out << to_csv(f);
}

QField load_qfield_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_qfield_csv: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return qfield_from_csv(buf.str());
}

}  // namespace varex
