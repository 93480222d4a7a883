#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "varex/numeric.hpp"
#include "varex/tolerances.hpp"

namespace varex {

// An unordered Q-tuple of points in R^m (repetition = multiplicity), stored
// in canonical lexicographic order so equal multisets are equal elementwise.
class QValue {
 public:
  QValue() = default;
  QValue(int m, std::vector<Eigen::VectorXd> points);
  static QValue constant(int q, const Eigen::VectorXd& point);

  int q() const { return static_cast<int>(points_.size()); }
  int m() const { return m_; }
  const Eigen::VectorXd& point(int i) const { return points_[i]; }
  const std::vector<Eigen::VectorXd>& points() const { return points_; }
  QValue translated(const Eigen::VectorXd& shift) const;

 private:
  int m_ = 0;
  std::vector<Eigen::VectorXd> points_;  // canonical order
};

// Minimum of sum_i |a_i - b_perm(i)|^2 over permutations, with the
// lexicographically smallest optimal permutation (ties broken when the cost
// agrees to within 1e-12 relative).
struct Assignment {
  double cost = 0.0;  // sum of squared distances
  std::vector<int> perm;
};
Assignment optimal_assignment(const QValue& a, const QValue& b);

// The Q-tuple metric: square root of the optimal squared-cost assignment.
double metric_g(const QValue& a, const QValue& b);

// A permutation with max_i |a_i - b_perm(i)| < d (strictly), if one exists;
// lexicographically smallest such permutation.
std::optional<std::vector<int>> bounded_matching(const QValue& a,
                                                 const QValue& b, double d);

// Regular lattice over a closed ball: node(k) = origin + dx * k for integer
// multi-indices k, restricted to |node(k) - ball_center| <= radius.
struct GridSpec {
  int n = 0;
  double dx = 0.0;
  double radius = 0.0;
  Eigen::VectorXd ball_center;
  Eigen::VectorXd origin;

  GridSpec(int n_, double dx_, double radius_);
  GridSpec(int n_, double dx_, double radius_, Eigen::VectorXd ball_center_,
           Eigen::VectorXd origin_);

  Eigen::VectorXd node(const Eigen::VectorXi& k) const;
  bool in_ball(const Eigen::VectorXi& k) const;
};

// Grid sampling of a Q-valued function over (a masked subset of) the ball.
class QField {
 public:
  QField(GridSpec grid, int q, int m);

  const GridSpec& grid() const { return grid_; }
  int q() const { return q_; }
  int m() const { return m_; }

  bool in_domain(const Eigen::VectorXi& k) const;
  bool masked(const Eigen::VectorXi& k) const;
  const QValue& value(const Eigen::VectorXi& k) const;
  void set(const Eigen::VectorXi& k, QValue v);
  void clear(const Eigen::VectorXi& k);

  Eigen::VectorXd coords(const Eigen::VectorXi& k) const;
  long linear_id(const Eigen::VectorXi& k) const;  // unique, order-preserving

  // Lexicographic enumeration of the in-ball lattice / its masked subset.
  const std::vector<Eigen::VectorXi>& domain_nodes() const;
  std::vector<Eigen::VectorXi> masked_nodes() const;
  size_t masked_count() const { return masked_count_; }

  // Axis neighbors k +/- e_j that lie in the ball.
  std::vector<Eigen::VectorXi> neighbors(const Eigen::VectorXi& k) const;

  // max over adjacent masked pairs of metric_g(f(x), f(y)) / dx.
  double measured_lip() const;

 private:
  long flat(const Eigen::VectorXi& k) const;
  GridSpec grid_;
  int q_;
  int m_;
  Eigen::VectorXi kmin_, kmax_;  // bounding box of the ball
  std::vector<long> strides_;
  std::vector<uint8_t> in_ball_;
  std::vector<uint8_t> mask_;
  std::vector<QValue> values_;
  std::vector<Eigen::VectorXi> domain_nodes_;
  size_t masked_count_ = 0;
};

// One single-valued selection of the field: at most one layer per node.
struct Branch {
  std::map<long, int> layer_of;  // node linear id -> layer in canonical order
  double lip_estimate = 0.0;     // measured over glued edges
};

struct BranchSet {
  std::vector<Branch> branches;
  double lip_bound = 0.0;
  double tol_branch = 0.0;  // gluing slack: 4 * dx * lip_bound
};

// Splits the field into single-valued branches by gluing layers at adjacent
// nodes through bounded matchings at threshold (lip_bound + tol_branch) * dx.
// Rejects fields whose measured Lipschitz constant exceeds lip_bound.
// The branches partition the layers: at every masked node, each layer of the
// canonical Q-tuple belongs to exactly one branch (the counting identity).
BranchSet branch_decompose(const QField& f, double lip_bound);

Eigen::VectorXd branch_value(const QField& f, const Branch& b,
                             const Eigen::VectorXi& k);
bool branch_contains(const Branch& b, long node_id);

// Finite-difference gradient of a branch at a node (m x n): central where
// both axis neighbors carry the branch, one-sided otherwise, zero columns
// when the branch is isolated along an axis.
Eigen::MatrixXd branch_gradient(const QField& f, const Branch& b,
                                const Eigen::VectorXi& k);

// L^q distance of the field from a fixed Q-tuple:
// ( sum_x metric_g(f(x), s)^q dx^n )^(1/q), sup for q = inf.
double q_height(const QField& f, const QValue& s, double q);

// Best-fitting Q-tuple: alternating assignment / per-slot L^q power-mean
// updates from `restarts` seeded starts; returns the tuple and its height.
std::pair<QValue, double> q_height_best(const QField& f, double q,
                                        int restarts = 20);

// L^q norm of the full differential: at each node, |Af|^2 sums the squared
// Frobenius norms of all branch gradients.
double q_tilt(const QField& f, double q);

// Nearest-masked-node extension to the requested nodes, optionally followed
// by the 1-Lipschitz retraction of every point into the closed ball of
// radius clip_radius (centered at the origin of R^m).
QField lipschitz_extend(const QField& f,
                        const std::vector<Eigen::VectorXi>& target_nodes,
                        std::optional<double> clip_radius = std::nullopt);

struct PoincareReport {
  double height = 0.0;    // best q*-height (q* = nq/(n-q) below n, inf above)
  double tilt = 0.0;      // q-tilt
  double ratio = 0.0;     // height / tilt, 0 for the exact-zero case
  bool exact_zero = false;
  QValue center;
};

// Height-tilt comparison at the Sobolev exponent; q == n is rejected.
PoincareReport sobolev_poincare_check(const QField& f, double q);

// Convenience: sample analytic branches u_b : R^n -> R^m over the grid.
QField qfield_from_branches(
    const GridSpec& grid, int m,
    const std::vector<std::function<Eigen::VectorXd(const Eigen::VectorXd&)>>&
        branches);

// CSV serialization (17 significant digits, bit-exact round trip).
std::string to_csv(const QField& f);
QField qfield_from_csv(const std::string& text);
void save_csv(const QField& f, const std::string& path);
QField load_qfield_csv(const std::string& path);

}  // namespace varex
