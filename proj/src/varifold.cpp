#include "varex/varifold.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace varex {

Atom::Atom(Eigen::VectorXd position_, Plane tangent_, int multiplicity_,
           double weight_, Eigen::VectorXd mean_curvature_)
    : position(std::move(position_)),
      tangent(std::move(tangent_)),
      multiplicity(multiplicity_),
      weight(weight_),
      mean_curvature(std::move(mean_curvature_)) {}

Atom::Atom(Eigen::VectorXd position_, Plane tangent_, int multiplicity_,
           double weight_)
    : Atom(std::move(position_), tangent_, multiplicity_, weight_,
           Eigen::VectorXd::Zero(tangent_.ambient())) {}

DiscreteVarifold::DiscreteVarifold(int n, int m, double mesh_scale)
    : n_(n), m_(m), mesh_scale_(mesh_scale) {
  if (n < 1 || m < 1)
    throw std::invalid_argument("DiscreteVarifold: need n >= 1 and m >= 1");
  if (!(mesh_scale > 0))
    throw std::invalid_argument("DiscreteVarifold: mesh_scale must be > 0");
}

void DiscreteVarifold::add(Atom atom) {
  if (atom.position.size() != ambient())
    throw std::invalid_argument("Atom: position dimension mismatch");
  if (atom.tangent.ambient() != ambient() || atom.tangent.dim() != n_)
    throw std::invalid_argument("Atom: tangent plane has wrong dimensions");
  if (atom.multiplicity < 1)
    throw std::invalid_argument("Atom: multiplicity must be a positive integer");
  if (!(atom.weight > 0)) throw std::invalid_argument("Atom: weight must be > 0");
  if (atom.mean_curvature.size() != ambient())
    throw std::invalid_argument("Atom: mean curvature dimension mismatch");
  atoms_.push_back(std::move(atom));
}

double DiscreteVarifold::total_mass() const {
  std::vector<double> terms;
  terms.reserve(atoms_.size());
  for (const Atom& a : atoms_) terms.push_back(a.multiplicity * a.weight);
  return pairwise_sum(terms);
}

DiscreteVarifold DiscreteVarifold::restrict_to(
    const std::function<bool(const Atom&)>& keep) const {
  DiscreteVarifold out(n_, m_, mesh_scale_);
  for (const Atom& a : atoms_)
    if (keep(a)) out.add(a);
  return out;
}

double Constants::unit_ball_volume(int n) {
  if (n < 0) throw std::invalid_argument("unit_ball_volume: n must be >= 0");
  return std::pow(std::numbers::pi, n / 2.0) / std::tgamma(n / 2.0 + 1.0);
}

Region open_ball(const Eigen::VectorXd& center, double rho) {
  return [center, rho](const Eigen::VectorXd& x) {
    return (x - center).norm() < rho;
  };
}

Region closed_ball(const Eigen::VectorXd& center, double rho) {
  return [center, rho](const Eigen::VectorXd& x) {
    return (x - center).norm() <= rho;
  };
}

Region everywhere() {
  return [](const Eigen::VectorXd&) { return true; };
}

double measure(const DiscreteVarifold& v, const Region& region) {
  std::vector<double> terms;
  for (const Atom& a : v.atoms())
    if (region(a.position)) terms.push_back(a.multiplicity * a.weight);
  return pairwise_sum(terms);
}

double density_ratio(const DiscreteVarifold& v, const Eigen::VectorXd& a,
                     double rho) {
  if (!(rho > 0)) throw std::invalid_argument("density_ratio: rho must be > 0");
  const double mass = measure(v, open_ball(a, rho));
  return mass / (Constants::unit_ball_volume(v.n()) * std::pow(rho, v.n()));
}

double first_variation_field(const DiscreteVarifold& v,
                             const VectorField& eta) {
  std::vector<double> terms;
  terms.reserve(v.size());
  for (const Atom& a : v.atoms()) {
    const Eigen::MatrixXd jac = eta.jacobian(a.position);
    if (jac.rows() != v.ambient() || jac.cols() != v.ambient())
      throw std::invalid_argument("first_variation_field: bad Jacobian shape");
    const double div_tangential = (jac * a.tangent.projection()).trace();
    terms.push_back(a.multiplicity * a.weight * div_tangential);
  }
  return pairwise_sum(terms);
}

double first_variation_norm(const DiscreteVarifold& v, const Region& region) {
  std::vector<double> terms;
  for (const Atom& a : v.atoms())
    if (region(a.position))
      terms.push_back(a.multiplicity * a.weight * a.mean_curvature.norm());
  return pairwise_sum(terms);
}

double hp_integrand_norm(const DiscreteVarifold& v, const Region& region,
                         double p) {
  if (!(p >= 1))
    throw std::invalid_argument("hp_integrand_norm: p must be >= 1");
  if (p == 1.0) return first_variation_norm(v, region);
  std::vector<double> terms;
  for (const Atom& a : v.atoms())
    if (region(a.position))
      terms.push_back(a.multiplicity * a.weight *
                      std::pow(a.mean_curvature.norm(), p));
  return pairwise_sum(terms);
}

double tilt_excess(const DiscreteVarifold& v, const Eigen::VectorXd& x,
                   double rho, const Plane& t) {
  if (!(rho > 0)) throw std::invalid_argument("tilt_excess: rho must be > 0");
  if (t.ambient() != v.ambient() || t.dim() != v.n())
    throw std::invalid_argument("tilt_excess: reference plane has wrong shape");
  std::vector<double> terms;
  for (const Atom& a : v.atoms()) {
    if (!((a.position - x).norm() < rho)) continue;
    const double d = grassmann_dist(a.tangent, t);
    terms.push_back(a.multiplicity * a.weight * d * d);
  }
  return pairwise_sum(terms) / std::pow(rho, v.n());
}

double height_excess(const DiscreteVarifold& v, const Eigen::VectorXd& x,
                     double rho, const Plane& t) {
  if (!(rho > 0)) throw std::invalid_argument("height_excess: rho must be > 0");
  if (t.ambient() != v.ambient() || t.dim() != v.n())
    throw std::invalid_argument("height_excess: reference plane has wrong shape");
  std::vector<double> terms;
  for (const Atom& a : v.atoms()) {
    if (!((a.position - x).norm() < rho)) continue;
    const double d = t.perp_project(a.position - x).norm();
    terms.push_back(a.multiplicity * a.weight * d * d);
  }
  return pairwise_sum(terms) / std::pow(rho, v.n() + 2);
}

std::string to_csv(const DiscreteVarifold& v) {
  std::ostringstream out;
  const int d = v.ambient();
  out << "# varifold\n";
  out << "n,m,mesh_scale,atom_count\n";
  out << v.n() << ',' << v.m() << ',' << g17(v.mesh_scale()) << ','
      << v.size() << '\n';
  for (int i = 0; i < d; ++i) out << 'x' << (i + 1) << ',';
  for (int i = 0; i < v.n(); ++i)
    for (int j = 0; j < d; ++j) out << 'b' << (i + 1) << '_' << (j + 1) << ',';
  out << "multiplicity,weight";
  for (int i = 0; i < d; ++i) out << ",H" << (i + 1);
  out << '\n';
  for (const Atom& a : v.atoms()) {
    for (int i = 0; i < d; ++i) out << g17(a.position(i)) << ',';
    const Eigen::MatrixXd& b = a.tangent.basis();
    for (int i = 0; i < v.n(); ++i)
      for (int j = 0; j < d; ++j) out << g17(b(j, i)) << ',';
    out << a.multiplicity << ',' << g17(a.weight);
    for (int i = 0; i < d; ++i) out << ',' << g17(a.mean_curvature(i));
    out << '\n';
  }
  return out.str();
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
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

double parse_double(const std::string& s) {
  size_t used = 0;
  const double x = std::stod(s, &used);
  if (used != s.size())
    throw std::invalid_argument("varifold csv: bad number '" + s + "'");
  return x;
}

}  // namespace

DiscreteVarifold from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "# varifold")
    throw std::invalid_argument("varifold csv: missing '# varifold' header");
  if (!std::getline(in, line))
    throw std::invalid_argument("varifold csv: truncated header");
  if (!std::getline(in, line))
    throw std::invalid_argument("varifold csv: truncated header");
  const auto meta = split_csv_line(line);
  if (meta.size() != 4)
    throw std::invalid_argument("varifold csv: malformed meta row");
  const int n = std::stoi(meta[0]);
  const int m = std::stoi(meta[1]);
  const double mesh = parse_double(meta[2]);
  const size_t count = std::stoul(meta[3]);
  const int d = n + m;
  if (!std::getline(in, line))
    throw std::invalid_argument("varifold csv: missing column header");

  DiscreteVarifold v(n, m, mesh);
  v.reserve(count);
  const size_t expected_cols = d + n * d + 2 + d;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != expected_cols)
      throw std::invalid_argument("varifold csv: row has " +
                                  std::to_string(f.size()) + " fields, want " +
                                  std::to_string(expected_cols));
    size_t k = 0;
    Eigen::VectorXd pos(d);
    for (int i = 0; i < d; ++i) pos(i) = parse_double(f[k++]);
    Eigen::MatrixXd basis(d, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) basis(j, i) = parse_double(f[k++]);
    const int mult = std::stoi(f[k++]);
    const double w = parse_double(f[k++]);
    Eigen::VectorXd h(d);
    for (int i = 0; i < d; ++i) h(i) = parse_double(f[k++]);
    v.add(Atom(std::move(pos), Plane::from_basis(basis), mult, w,
               std::move(h)));
  }
  if (v.size() != count)
    throw std::invalid_argument("varifold csv: atom count mismatch");
  return v;
}

void save_csv(const DiscreteVarifold& v, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_csv: cannot open " + path);
  out << to_csv(v);
}

DiscreteVarifold load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_csv(buf.str());
}

}  // namespace varex
