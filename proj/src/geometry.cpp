#include "varex/geometry.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace varex {

double pairwise_sum(std::span<const double> xs) {
  const size_t n = xs.size();
  if (n <= 16) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const size_t half = n / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

LqAccumulator::LqAccumulator(double q) : q_(q) {
  if (!(q >= 1.0)) throw std::invalid_argument("LqAccumulator: q must be >= 1");
}

void LqAccumulator::add(double weight, double magnitude) {
  if (weight < 0) throw std::invalid_argument("LqAccumulator: negative weight");
  if (weight == 0) return;
  if (std::isinf(q_)) {
    sup_ = std::max(sup_, std::abs(magnitude));
  } else {
    terms_.push_back(weight * std::pow(std::abs(magnitude), q_));
  }
}

double LqAccumulator::value() const {
  if (std::isinf(q_)) return sup_;
  const double s = pairwise_sum(terms_);
  return s > 0 ? std::pow(s, 1.0 / q_) : 0.0;
}

std::string g17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

// Deterministic sign convention: the largest-magnitude entry of each basis
// column is nonnegative.
void canonicalize_columns(Eigen::MatrixXd& b) {
  for (Eigen::Index j = 0; j < b.cols(); ++j) {
    Eigen::Index imax = 0;
    b.col(j).cwiseAbs().maxCoeff(&imax);
    if (b(imax, j) < 0) b.col(j) = -b.col(j);
  }
}

void check_orthonormal(const Eigen::MatrixXd& b) {
  const Eigen::MatrixXd gram = b.transpose() * b;
  const double defect =
      (gram - Eigen::MatrixXd::Identity(b.cols(), b.cols())).norm();
  if (defect > kStructuralTol)
    throw std::invalid_argument("Plane: basis columns not orthonormal (defect " +
                                g17(defect) + ")");
}

}  // namespace

Plane::Plane(Eigen::MatrixXd projection, int dim)
    : projection_(std::move(projection)), dim_(dim) {}

Plane Plane::from_projection(const Eigen::MatrixXd& projection, int dim) {
  if (projection.rows() != projection.cols())
    throw std::invalid_argument("Plane: projection must be square");
  if (dim < 0 || dim > projection.rows())
    throw std::invalid_argument("Plane: dim out of range");
  const double sym = (projection - projection.transpose()).norm();
  if (sym > kStructuralTol)
    throw std::invalid_argument("Plane: projection not symmetric (defect " +
                                g17(sym) + ")");
  const double idem = (projection * projection - projection).norm();
  if (idem > kStructuralTol)
    throw std::invalid_argument("Plane: projection not idempotent (defect " +
                                g17(idem) + ")");
  const double tr = projection.trace();
  if (std::abs(tr - dim) > kStructuralTol)
    throw std::invalid_argument("Plane: trace " + g17(tr) +
                                " does not match dim");
  return Plane(projection, dim);
}

Plane Plane::from_basis(const Eigen::MatrixXd& orthonormal_columns) {
  check_orthonormal(orthonormal_columns);
  Plane p(orthonormal_columns * orthonormal_columns.transpose(),
          static_cast<int>(orthonormal_columns.cols()));
  p.basis_cache_ = orthonormal_columns;
  return p;
}

Plane Plane::span_of(const Eigen::MatrixXd& columns) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(columns);
  Eigen::MatrixXd q = qr.householderQ() *
                      Eigen::MatrixXd::Identity(columns.rows(), columns.cols());
  // Guard against rank deficiency: R must have no tiny diagonal.
  const Eigen::MatrixXd r =
      qr.matrixQR().topLeftCorner(columns.cols(), columns.cols());
  for (Eigen::Index i = 0; i < columns.cols(); ++i)
    if (std::abs(r(i, i)) < 1e-12 * (1.0 + columns.norm()))
      throw std::invalid_argument("Plane::span_of: columns not independent");
  canonicalize_columns(q);
  return from_basis(q);
}

Plane Plane::coordinate(int ambient, std::initializer_list<int> axes) {
  return coordinate(ambient, std::vector<int>(axes));
}

Plane Plane::coordinate(int ambient, const std::vector<int>& axes) {
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(ambient, axes.size());
  int j = 0;
  for (int axis : axes) {
    if (axis < 0 || axis >= ambient)
      throw std::invalid_argument("Plane::coordinate: axis out of range");
    b(axis, j++) = 1.0;
  }
  return from_basis(b);
}

const Eigen::MatrixXd& Plane::basis() const {
  if (!basis_cache_) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(projection_);
    // Eigenvalues ascend; the plane's directions carry eigenvalue ~1.
    Eigen::MatrixXd b = es.eigenvectors().rightCols(dim_);
    canonicalize_columns(b);
    basis_cache_ = std::move(b);
  }
  return *basis_cache_;
}

const Eigen::MatrixXd& Plane::perp_basis() const {
  if (!perp_cache_) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(projection_);
    Eigen::MatrixXd b = es.eigenvectors().leftCols(ambient() - dim_);
    canonicalize_columns(b);
    perp_cache_ = std::move(b);
  }
  return *perp_cache_;
}

Plane Plane::orthogonal_complement() const {
  return from_basis(perp_basis());
}

Eigen::VectorXd Plane::project(const Eigen::VectorXd& v) const {
  if (v.size() != projection_.rows())
    throw std::invalid_argument("Plane::project: dimension mismatch");
  return projection_ * v;
}

Eigen::VectorXd Plane::perp_project(const Eigen::VectorXd& v) const {
  if (v.size() != projection_.rows())
    throw std::invalid_argument("Plane::perp_project: dimension mismatch");
  return v - projection_ * v;
}

double Plane::dist(const Eigen::VectorXd& v) const {
  return perp_project(v).norm();
}

double grassmann_dist(const Plane& s, const Plane& t) {
  if (s.ambient() != t.ambient())
    throw std::invalid_argument("grassmann_dist: ambient mismatch");
  return (s.projection() - t.projection()).norm();
}

double jacobian_lambda(const Plane& s, const Plane& t) {
  if (s.ambient() != t.ambient() || s.dim() != t.dim())
    throw std::invalid_argument("jacobian_lambda: planes must share dimensions");
  if (s.dim() == 0) return 1.0;
  const Eigen::MatrixXd a = t.projection() * s.basis();
  const double det = (a.transpose() * a).determinant();
  return std::min(1.0, std::sqrt(std::max(det, 0.0)));
}

bool in_cone_complement(const Eigen::VectorXd& a, double r, const Plane& v,
                        double s, const Eigen::VectorXd& x) {
  if (!(r > 0)) throw std::invalid_argument("in_cone_complement: r must be > 0");
  if (!(s >= 0 && s < 1))
    throw std::invalid_argument("in_cone_complement: need 0 <= s < 1");
  if (a.size() != x.size() || a.size() != v.ambient())
    throw std::invalid_argument("in_cone_complement: dimension mismatch");
  const Eigen::VectorXd d = x - a;
  const double rho = d.norm();
  if (!(rho < r)) return false;
  if (s == 0.0) return rho > 0.0;  // see header: punctured-ball degeneration
  return v.perp_project(d).norm() < s * rho;
}

Cylinder::Cylinder(Eigen::VectorXd center_, double r_, double h_, Plane axis_)
    : center(std::move(center_)), r(r_), h(h_), axis(std::move(axis_)) {
  if (!(r > 0)) throw std::invalid_argument("Cylinder: r must be > 0");
  if (!(h > 0))  // +inf passes
    throw std::invalid_argument("Cylinder: h must be > 0 (or +inf)");
  if (center.size() != axis.ambient())
    throw std::invalid_argument("Cylinder: center/axis dimension mismatch");
}

bool Cylinder::contains(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd d = x - center;
  if (axis.project(d).norm() > r) return false;
  if (std::isinf(h)) return true;
  return axis.perp_project(d).norm() <= h;
}

Eigen::VectorXd Cylinder::base_coords(const Eigen::VectorXd& x) const {
  return axis.basis().transpose() * (x - center);
}

Eigen::VectorXd Cylinder::fiber_coords(const Eigen::VectorXd& x) const {
  return axis.perp_basis().transpose() * (x - center);
}

Cylinder Cylinder::scaled(double r_factor, double h_new) const {
  return Cylinder(center, r * r_factor, h_new, axis);
}

}  // namespace varex
