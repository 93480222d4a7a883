#pragma once

#include <functional>
#include <vector>

#include "varex/qvalued.hpp"
#include "varex/varifold.hpp"

namespace varex {

// Synthetic sample-cloud builders for the measures the toolkit studies.
//
// Lattice convention: every graph-type generator places its base points at
// half-offset lattice sites (k + 1/2) * mesh.  Axis-aligned cells of width
// `mesh` anchored at integer multiples then contain exactly one base point,
// so a Q-sheeted graph meets each cell in exactly Q samples (counted with
// multiplicity), which the fiber-layer machinery relies on.

using ScalarField = std::function<double(const Eigen::VectorXd&)>;
using GradField = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using HessField = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

// Visit every half-offset lattice point t = (k + 1/2) * mesh with
// |t_j| <= extent for all coordinates.  Lexicographic order.
void for_each_lattice_point(
    int n, double mesh, double extent,
    const std::function<void(const Eigen::VectorXd&)>& fn);

// Flat n-plane span{e_1..e_n} in R^{n+m} through the origin, sampled over
// the box |t_j| <= extent, with constant integer multiplicity.
DiscreteVarifold gen_plane(int n, int m, double mesh, double extent,
                           int multiplicity = 1);

// Union of parallel translates of that plane, offset along e_{n+1} by the
// given heights (one unit-multiplicity sheet per height; heights may repeat).
DiscreteVarifold gen_parallel_planes(int n, int m, double mesh, double extent,
                                     const std::vector<double>& heights);

// Graph of a scalar C^2 function u over the box |x_j| <= extent in R^{n+1}.
// Weights carry the area element sqrt(1 + |grad u|^2); the mean-curvature
// vector is computed from grad and Hessian callbacks.
DiscreteVarifold gen_graph(int n, double mesh, double extent,
                           const ScalarField& u, const GradField& grad_u,
                           const HessField& hess_u);

// Graph of a Q-valued field: one atom per branch slot, tangent and area
// weight from the branch finite-difference gradient, zero mean curvature.
DiscreteVarifold gen_qgraph(const QField& field);

// Round sphere of the given radius about the origin in R^3 (n = 2, m = 1),
// sampled on a half-offset latitude/longitude grid.  Mean curvature
// -(2/radius^2) * position is attached to every atom.
DiscreteVarifold gen_sphere(double radius, double mesh);

// Catenoid x_1^2 + x_2^2 = cosh^2(x_3), sampled by arclength s = sinh(x_3)
// over |s| <= s_max.  A minimal surface: zero mean curvature.
DiscreteVarifold gen_catenoid(double mesh, double s_max);

// Disjoint union of the horizontal plane {x_3 = 1/2} (disc of the given
// radial reach) and the catenoid truncated at the same radial reach.
DiscreteVarifold gen_plane_union_catenoid(double mesh, double reach);

}  // namespace varex
