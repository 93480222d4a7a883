#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "varex/geometry.hpp"

namespace varex {

// One weighted sample of an n-dimensional measure in R^{n+m}: a position,
// the approximate tangent plane there, an integer sheet multiplicity, the
// quadrature weight carried by the sample, and the (analytic) mean-curvature
// vector.  The mass the atom contributes is multiplicity * weight.
struct Atom {
  Eigen::VectorXd position;
  Plane tangent;
  int multiplicity = 1;
  double weight = 0.0;
  Eigen::VectorXd mean_curvature;

  Atom(Eigen::VectorXd position_, Plane tangent_, int multiplicity_,
       double weight_, Eigen::VectorXd mean_curvature_);
  Atom(Eigen::VectorXd position_, Plane tangent_, int multiplicity_,
       double weight_);
};

// Atomic (quadrature) representation of an n-varifold in R^{n+m}.
class DiscreteVarifold {
 public:
  DiscreteVarifold(int n, int m, double mesh_scale);

  void add(Atom atom);  // validates dimensions, multiplicity, weight
  void reserve(size_t count) { atoms_.reserve(count); }

  int n() const { return n_; }
  int m() const { return m_; }
  int ambient() const { return n_ + m_; }
  double mesh_scale() const { return mesh_scale_; }
  const std::vector<Atom>& atoms() const { return atoms_; }
  size_t size() const { return atoms_.size(); }

  double total_mass() const;

  DiscreteVarifold restrict_to(
      const std::function<bool(const Atom&)>& keep) const;

 private:
  int n_;
  int m_;
  double mesh_scale_;
  std::vector<Atom> atoms_;
};

// Dimension-dependent constants.  The isoperimetric and covering constants
// are configuration placeholders (reported as such by the experiment
// drivers); the unit-ball volume is exact.
struct Constants {
  double isoperimetric_gamma = 1.0;
  double besicovitch = 1.0;
  static double unit_ball_volume(int n);
};

// Ambient test vector field: value and Jacobian (row i, column j holding
// d eta_i / d x_j) at any point.
struct VectorField {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> value;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
};

using Region = std::function<bool(const Eigen::VectorXd&)>;

Region open_ball(const Eigen::VectorXd& center, double rho);
Region closed_ball(const Eigen::VectorXd& center, double rho);
Region everywhere();

// mu(region) = sum of multiplicity * weight over atoms inside.
double measure(const DiscreteVarifold& v, const Region& region);

// mu(B(a, rho)) / (omega_n rho^n), open ball.
double density_ratio(const DiscreteVarifold& v, const Eigen::VectorXd& a,
                     double rho);

// First variation tested against a field: integral of the tangential
// divergence trace(D eta * P_tangent) d mu.
double first_variation_field(const DiscreteVarifold& v, const VectorField& eta);

// Total-variation mass of the first variation over a region in the
// absolutely-continuous regime: integral of |H| d mu.
double first_variation_norm(const DiscreteVarifold& v, const Region& region);

// Curvature integrand for exponent p: integral of |H| d mu when p == 1,
// integral of |H|^p d mu when p > 1.
double hp_integrand_norm(const DiscreteVarifold& v, const Region& region,
                         double p);

// rho^-n * integral over the open ball B(x, rho) of |P_tangent - P_t|^2 d mu.
double tilt_excess(const DiscreteVarifold& v, const Eigen::VectorXd& x,
                   double rho, const Plane& t);

// rho^-(n+2) * integral over B(x, rho) of dist(xi - x, t)^2 d mu(xi).
double height_excess(const DiscreteVarifold& v, const Eigen::VectorXd& x,
                     double rho, const Plane& t);

// CSV serialization: 17-significant-digit decimals, bit-exact round trip.
std::string to_csv(const DiscreteVarifold& v);
DiscreteVarifold from_csv(const std::string& text);
void save_csv(const DiscreteVarifold& v, const std::string& path);
DiscreteVarifold load_csv(const std::string& path);

}  // namespace varex
