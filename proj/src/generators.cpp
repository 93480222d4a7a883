#include "varex/generators.hpp"

#include <cmath>
#include <stdexcept>

namespace varex {

void for_each_lattice_point(
    int n, double mesh, double extent,
    const std::function<void(const Eigen::VectorXd&)>& fn) {
  if (n < 1) throw std::invalid_argument("lattice: n must be >= 1");
  if (!(mesh > 0)) throw std::invalid_argument("lattice: mesh must be > 0");
  if (!(extent > 0)) throw std::invalid_argument("lattice: extent must be > 0");
  const int k_lo = static_cast<int>(std::ceil(-extent / mesh - 0.5 - 1e-12));
  const int k_hi = static_cast<int>(std::floor(extent / mesh - 0.5 + 1e-12));
  if (k_hi < k_lo) return;
  Eigen::VectorXi k = Eigen::VectorXi::Constant(n, k_lo);
  Eigen::VectorXd t(n);
  while (true) {
    for (int j = 0; j < n; ++j) t(j) = (k(j) + 0.5) * mesh;
    fn(t);
    int axis = n - 1;
    while (axis >= 0) {
      if (++k(axis) <= k_hi) break;
      k(axis) = k_lo;
      --axis;
    }
    if (axis < 0) break;
  }
}

DiscreteVarifold gen_plane(int n, int m, double mesh, double extent,
                           int multiplicity) {
  DiscreteVarifold mu(n, m, mesh);
  Eigen::MatrixXd span = Eigen::MatrixXd::Zero(n + m, n);
  span.topRows(n).setIdentity();
  const Plane tangent = Plane::from_basis(span);
  const double w = std::pow(mesh, n);
  for_each_lattice_point(n, mesh, extent, [&](const Eigen::VectorXd& t) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n + m);
    x.head(n) = t;
    mu.add(Atom(std::move(x), tangent, multiplicity, w));
  });
  return mu;
}

DiscreteVarifold gen_parallel_planes(int n, int m, double mesh, double extent,
                                     const std::vector<double>& heights) {
  if (heights.empty())
    throw std::invalid_argument("gen_parallel_planes: need >= 1 height");
  DiscreteVarifold mu(n, m, mesh);
  Eigen::MatrixXd span = Eigen::MatrixXd::Zero(n + m, n);
  span.topRows(n).setIdentity();
  const Plane tangent = Plane::from_basis(span);
  const double w = std::pow(mesh, n);
  for_each_lattice_point(n, mesh, extent, [&](const Eigen::VectorXd& t) {
    for (double h : heights) {
      Eigen::VectorXd x = Eigen::VectorXd::Zero(n + m);
      x.head(n) = t;
      x(n) = h;
      mu.add(Atom(std::move(x), tangent, 1, w));
    }
  });
  return mu;
}

DiscreteVarifold gen_graph(int n, double mesh, double extent,
                           const ScalarField& u, const GradField& grad_u,
                           const HessField& hess_u) {
  DiscreteVarifold mu(n, /*m=*/1, mesh);
  const double cell = std::pow(mesh, n);
  for_each_lattice_point(n, mesh, extent, [&](const Eigen::VectorXd& t) {
    const double z = u(t);
    const Eigen::VectorXd g = grad_u(t);
    const Eigen::MatrixXd hess = hess_u(t);
    if (g.size() != n || hess.rows() != n || hess.cols() != n)
      throw std::invalid_argument("gen_graph: callback dimension mismatch");
    const double w2 = 1.0 + g.squaredNorm();
    const double big_w = std::sqrt(w2);

    Eigen::VectorXd x(n + 1);
    x.head(n) = t;
    x(n) = z;

    Eigen::MatrixXd span = Eigen::MatrixXd::Zero(n + 1, n);
    span.topRows(n).setIdentity();
    span.row(n) = g.transpose();

    // Scalar mean curvature h = div(grad u / W) times the upward unit normal.
    const double h_sc = hess.trace() / big_w -
                        (g.transpose() * hess * g).value() / (w2 * big_w);
    Eigen::VectorXd normal(n + 1);
    normal.head(n) = -g;
    normal(n) = 1.0;
    normal /= big_w;

    mu.add(Atom(std::move(x), Plane::span_of(span), 1, cell * big_w,
                h_sc * normal));
  });
  return mu;
}

DiscreteVarifold gen_qgraph(const QField& field) {
  const int n = field.grid().n;
  const int m = field.m();
  const double dx = field.grid().dx;
  DiscreteVarifold mu(n, m, dx);
  const BranchSet bs = branch_decompose(field, field.measured_lip());
  const double cell = std::pow(dx, n);
  for (const auto& k : field.masked_nodes()) {
    const long id = field.linear_id(k);
    for (const Branch& b : bs.branches) {
      if (!branch_contains(b, id)) continue;
      const Eigen::MatrixXd grad = branch_gradient(field, b, k);  // m x n
      Eigen::VectorXd x(n + m);
      x.head(n) = field.coords(k);
      x.tail(m) = branch_value(field, b, k);

      Eigen::MatrixXd span = Eigen::MatrixXd::Zero(n + m, n);
      span.topRows(n).setIdentity();
      span.bottomRows(m) = grad;

      const double area =
          std::sqrt((Eigen::MatrixXd::Identity(n, n) +
                     grad.transpose() * grad)
                        .determinant());
      mu.add(Atom(std::move(x), Plane::span_of(span), 1, cell * area));
    }
  }
  return mu;
}

DiscreteVarifold gen_sphere(double radius, double mesh) {
  if (!(radius > 0) || !(mesh > 0))
    throw std::invalid_argument("gen_sphere: radius and mesh must be > 0");
  DiscreteVarifold mu(2, 1, mesh);
  const double pi = std::acos(-1.0);
  const int n_theta =
      std::max(4, static_cast<int>(std::lround(pi * radius / mesh)));
  const int n_phi =
      std::max(8, static_cast<int>(std::lround(2.0 * pi * radius / mesh)));
  const double dtheta = pi / n_theta;
  const double dphi = 2.0 * pi / n_phi;
  for (int i = 0; i < n_theta; ++i) {
    const double theta = (i + 0.5) * dtheta;
    const double st = std::sin(theta), ct = std::cos(theta);
    for (int j = 0; j < n_phi; ++j) {
      const double phi = (j + 0.5) * dphi;
      const double cp = std::cos(phi), sp = std::sin(phi);
      Eigen::Vector3d x(radius * st * cp, radius * st * sp, radius * ct);
      Eigen::MatrixXd basis(3, 2);
      basis.col(0) << ct * cp, ct * sp, -st;  // latitude direction
      basis.col(1) << -sp, cp, 0.0;           // longitude direction
      const double w = radius * radius * st * dtheta * dphi;
      mu.add(Atom(x, Plane::from_basis(basis), 1, w,
                  -(2.0 / (radius * radius)) * x));
    }
  }
  return mu;
}

DiscreteVarifold gen_catenoid(double mesh, double s_max) {
  if (!(mesh > 0) || !(s_max > 0))
    throw std::invalid_argument("gen_catenoid: mesh and s_max must be > 0");
  DiscreteVarifold mu(2, 1, mesh);
  const double pi = std::acos(-1.0);
  const double rim = std::sqrt(1.0 + s_max * s_max);
  const int n_s =
      std::max(8, static_cast<int>(std::lround(2.0 * s_max / mesh)));
  const int n_phi =
      std::max(8, static_cast<int>(std::ceil(2.0 * pi * rim / mesh)));
  const double ds = 2.0 * s_max / n_s;
  const double dphi = 2.0 * pi / n_phi;
  for (int i = 0; i < n_s; ++i) {
    const double s = -s_max + (i + 0.5) * ds;
    const double rho = std::sqrt(1.0 + s * s);
    for (int j = 0; j < n_phi; ++j) {
      const double phi = (j + 0.5) * dphi;
      const double cp = std::cos(phi), sp = std::sin(phi);
      Eigen::Vector3d x(rho * cp, rho * sp, std::asinh(s));
      Eigen::MatrixXd basis(3, 2);
      basis.col(0) << (s / rho) * cp, (s / rho) * sp, 1.0 / rho;  // arclength
      basis.col(1) << -sp, cp, 0.0;                               // azimuth
      mu.add(Atom(x, Plane::from_basis(basis), 1, rho * ds * dphi));
    }
  }
  return mu;
}

DiscreteVarifold gen_plane_union_catenoid(double mesh, double reach) {
  if (!(reach > 1.0))
    throw std::invalid_argument(
        "gen_plane_union_catenoid: reach must exceed the waist radius 1");
  DiscreteVarifold mu(2, 1, mesh);
  Eigen::MatrixXd span = Eigen::MatrixXd::Zero(3, 2);
  span.topRows(2).setIdentity();
  const Plane horizontal = Plane::from_basis(span);
  const double w = mesh * mesh;
  for_each_lattice_point(2, mesh, reach, [&](const Eigen::VectorXd& t) {
    if (t.norm() > reach) return;  // trim the box to a disc
    mu.add(Atom(Eigen::Vector3d(t(0), t(1), 0.5), horizontal, 1, w));
  });
  const double s_max = std::sqrt(reach * reach - 1.0);
  const DiscreteVarifold cat = gen_catenoid(mesh, s_max);
  for (const Atom& a : cat.atoms()) mu.add(a);
  return mu;
}

}  // namespace varex
