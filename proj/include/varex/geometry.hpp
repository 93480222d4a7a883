#pragma once

#include <Eigen/Dense>
#include <initializer_list>
#include <optional>
#include <vector>

#include "varex/numeric.hpp"
#include "varex/tolerances.hpp"

namespace varex {

// A linear subspace of R^d stored as its orthogonal projection matrix.
// The projection is the source of truth; orthonormal bases of the plane and
// of its complement are derived on demand (eigenvectors with eigenvalue
// above/below 1/2) and cached, so serialization round-trips are stable.
class Plane {
 public:
  // Validates symmetry, idempotence and trace == dim (all to kStructuralTol).
  static Plane from_projection(const Eigen::MatrixXd& projection, int dim);

  // Columns must be orthonormal (checked); the matrix they span is cached as
  // the plane's basis.
  static Plane from_basis(const Eigen::MatrixXd& orthonormal_columns);

  // Orthonormalizes arbitrary independent columns first (thin QR).
  static Plane span_of(const Eigen::MatrixXd& columns);

  // Plane spanned by the listed coordinate axes of R^ambient.
  static Plane coordinate(int ambient, std::initializer_list<int> axes);
  static Plane coordinate(int ambient, const std::vector<int>& axes);

  int ambient() const { return static_cast<int>(projection_.rows()); }
  int dim() const { return dim_; }
  const Eigen::MatrixXd& projection() const { return projection_; }

  // ambient x dim matrix with orthonormal columns spanning the plane.
  const Eigen::MatrixXd& basis() const;
  // ambient x (ambient - dim) orthonormal columns spanning the complement.
  const Eigen::MatrixXd& perp_basis() const;
  Plane orthogonal_complement() const;

  Eigen::VectorXd project(const Eigen::VectorXd& v) const;
  Eigen::VectorXd perp_project(const Eigen::VectorXd& v) const;
  double dist(const Eigen::VectorXd& v) const;  // |v - project(v)|

 private:
  Plane(Eigen::MatrixXd projection, int dim);
  Eigen::MatrixXd projection_;
  int dim_;
  mutable std::optional<Eigen::MatrixXd> basis_cache_;
  mutable std::optional<Eigen::MatrixXd> perp_cache_;
};

// Frobenius distance between projection matrices; the metric used for every
// tilt quantity in the library.
double grassmann_dist(const Plane& s, const Plane& t);

// Norm of the top exterior power of the projection onto t restricted to s:
// sqrt(det(A^T A)) with A = P_t * basis(s).  Requires dim s == dim t.
// Always in [0, 1]; satisfies 1 - lambda^2 <= dim * grassmann_dist^2.
double jacobian_lambda(const Plane& s, const Plane& t);

// Membership in X(a, r, V, s) = { x : s^{-1} dist(x-a, V) < |x-a| < r }.
// s == 0 degenerates to the punctured ball { 0 < |x-a| < r } (the distance
// factor is only required to be finite, but the strict chain still forces
// |x-a| > 0).
bool in_cone_complement(const Eigen::VectorXd& a, double r, const Plane& v,
                        double s, const Eigen::VectorXd& x);

// Closed cylinder around `axis` (a plane of dimension n in R^{n+m}):
// |p_axis(x - center)| <= r and |p_axis^perp(x - center)| <= h.
// h may be +inf, in which case the height constraint is vacuous.
struct Cylinder {
  Eigen::VectorXd center;
  double r = 0;
  double h = 0;
  Plane axis;

  Cylinder(Eigen::VectorXd center_, double r_, double h_, Plane axis_);

  bool contains(const Eigen::VectorXd& x) const;
  // Coordinates of x relative to the cylinder frame.
  Eigen::VectorXd base_coords(const Eigen::VectorXd& x) const;  // dim n
  Eigen::VectorXd fiber_coords(const Eigen::VectorXd& x) const;  // dim m
  Cylinder scaled(double r_factor, double h_new) const;
};

}  // namespace varex
