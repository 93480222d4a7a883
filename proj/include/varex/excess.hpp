#pragma once

#include <string>
#include <utility>
#include <vector>

#include "varex/geometry.hpp"
#include "varex/qvalued.hpp"
#include "varex/varifold.hpp"

namespace varex {

// A Q-valued plane: Q parallel translates of an axis plane T, encoded by
// the translation heights in T-perp coordinates (columns of
// axis().perp_basis()); heights are absolute, i.e. a sheet is the locus
// { x : perp_basis^T x = offset }.  Offsets are stored canonically sorted.
class QPlane {
 public:
  QPlane(Plane axis_plane, QValue offsets);

  const Plane& axis() const { return axis_; }
  const QValue& offsets() const { return offsets_; }
  int q() const { return offsets_.q(); }

  // Distance from a point with the given absolute perp coordinates to the
  // nearest sheet.
  double dist_to_sheets(const Eigen::VectorXd& z_perp) const;

 private:
  Plane axis_;
  QValue offsets_;
};

// Metric between Q-planes sharing the same axis: the assignment metric of
// their offset tuples.  Throws if the axes differ.
double qplane_metric(const QPlane& p1, const QPlane& p2);

// One fiber cell: an axis-aligned cube of width dx in base (axis-plane)
// coordinates relative to the cylinder center, holding the multiset of
// sample heights observed over it.
struct FiberCell {
  Eigen::VectorXi index;  // base-coordinate cell = prod [index_j dx, (index_j+1) dx)
  // (absolute perp coordinates, multiplicity); bit-identical heights merged,
  // sorted lexicographically.
  std::vector<std::pair<Eigen::VectorXd, int>> heights;
  int total_multiplicity = 0;
  double mass = 0.0;  // sum of multiplicity * weight over contributing atoms
  bool center_in_disc = false;  // cell center within the base disc of radius r
};

// Discrete fiber structure of a varifold restricted to a cylinder: grid
// cells over the base disc plus any out-of-disc cells that received atoms.
struct FiberLayers {
  Eigen::VectorXd center;
  Plane axis;
  double r = 0.0;
  double h = 0.0;
  double dx = 0.0;
  std::vector<FiberCell> cells;  // lexicographic in cell index
  int disc_cell_count = 0;       // cells whose center lies in the disc

  FiberLayers(Eigen::VectorXd center_, Plane axis_, double r_, double h_,
              double dx_)
      : center(std::move(center_)),
        axis(std::move(axis_)),
        r(r_),
        h(h_),
        dx(dx_) {}
};

// Bin the atoms of v inside c into fiber cells of width dx.  Every in-disc
// cell appears (possibly with no atoms); atoms landing outside the disc's
// cells are kept in extra cells so that total mass is conserved.
FiberLayers fiber_layers(const DiscreteVarifold& v, const Cylinder& c,
                         double dx);

// Result of a height evaluation: the two summands of the height functional
// (sample-distance term, fiber-mismatch term plus uncovered-area term), the
// chosen sublevel threshold, and the plane it was measured against.
struct HeightReport {
  explicit HeightReport(QPlane plane_) : plane(std::move(plane_)) {}

  double term_dist = 0.0;
  double term_g = 0.0;
  double term_area = 0.0;
  double y_threshold = -1.0;  // g-level of the chosen set Y; -1 means Y empty
  double total = 0.0;
  QPlane plane;
  double cell_dx = 0.0;
  int y_cells = 0;          // cells selected into Y
  int candidate_cells = 0;  // cells with finite g (Q-point fibers both sides)
  int disc_cells = 0;
  bool scan_validated = false;  // subset brute force was run as a cross-check
  bool scan_matched = true;     // threshold scan agreed with the brute force

  // Flat key=value text block (one pair per line) for the experiment CSVs.
  std::string to_kv() const;
};

// q-tilt of v against the cylinder's axis plane:
//   r^{-n/q} || P_tangent - P_axis ||_{L^q(mu restricted to c)}
// with the L^inf convention dropping the 1/q exponents.
double t_q(const DiscreteVarifold& v, const Cylinder& c, double q);

// q-height of v against the Q-plane p over the cylinder c:
//   r^{-1-n/q} || dist(., sheets) ||_{L^q(mu restricted to c)}
// plus the infimum over sublevel sets Y = {g <= t} of the per-cell fiber
// mismatch g of
//   r^{-1-n/q} ( sum_{Y} dx^n g^q )^{1/q}
//   + r^{-1-n/q} ( L^n(disc \ Y) )^{1/q + 1/n}.
// Cells whose fiber is not a Q-point multiset on both sides carry g = +inf
// and are priced through the area term.  cell_dx <= 0 selects the default
// cell width v.mesh_scale().  With validate_scan, instances of at most 20
// candidate cells are cross-checked against the 2^N subset brute force
// (the report records whether the scan matched; the better value is kept).
HeightReport h_q_plane(const DiscreteVarifold& v, const Cylinder& c,
                       const QPlane& p, double q, double cell_dx = -1.0,
                       bool validate_scan = false);

// Best Q-plane found for the height of v over c: offsets are optimized by
// alternating fiber-matching / power-mean updates restarted from sampled
// fiber heights, then the full report of the winner is returned
// (ties broken by lexicographically smaller offsets).
HeightReport h_q_best(const DiscreteVarifold& v, const Cylinder& c, int Q,
                      double q, double cell_dx = -1.0);

}  // namespace varex
