// varex: command-line front end for the varifold experiment toolkit.
//
// Subcommands
//   gen     build a registry scenario at a mesh scale and save the sample CSV
//   excess  tilt / height functionals of a saved sample over a cylinder
//   approx  graphical decomposition of a saved sample (params from a file)
//   verify  fixed-scale height-vs-tilt inequality experiment on a scenario
//   decay   shrinking-radius decay experiment at the scenario probes
//   mono    coverage / mass-ratio / layer-count predicate sweep
//
// All reports are CSV plus a key=value summary block on stdout.  Exit codes:
// 0 success, 2 when a run is hypothesis-flagged, 1 on errors.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "varex/approx.hpp"
#include "varex/excess.hpp"
#include "varex/generators.hpp"
#include "varex/geometry.hpp"
#include "varex/harness.hpp"
#include "varex/numeric.hpp"
#include "varex/varifold.hpp"

namespace {

using namespace varex;

std::vector<std::string> split_on(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_real(const std::string& token, const std::string& what) {
  try {
    size_t used = 0;
    const double value = std::stod(token, &used);
    if (used != token.size()) throw std::invalid_argument(token);
    return value;
  } catch (const std::exception&) {
    throw std::invalid_argument("cannot parse " + what + " from '" + token +
                                "'");
  }
}

int parse_int(const std::string& token, const std::string& what) {
  try {
    size_t used = 0;
    const int value = std::stoi(token, &used);
    if (used != token.size()) throw std::invalid_argument(token);
    return value;
  } catch (const std::exception&) {
    throw std::invalid_argument("cannot parse " + what + " from '" + token +
                                "'");
  }
}

// Cylinder spec: a flat comma list  c_1,...,c_d,r,h,i_1,...,i_n  holding the
// center (d = ambient dimension), the base radius, the height (h may be
// "inf"), and the n coordinate axes spanning the reference plane.
Cylinder parse_cylinder(const std::string& spec, int n, int d) {
  const std::vector<std::string> tokens = split_on(spec, ',');
  const size_t expected = static_cast<size_t>(d) + 2 + static_cast<size_t>(n);
  if (tokens.size() != expected) {
    std::ostringstream msg;
    msg << "--cylinder wants " << expected << " comma-separated fields for "
        << "an " << n << "-plane in R^" << d
        << " (center, r, h, axis indices), got " << tokens.size();
    throw std::invalid_argument(msg.str());
  }
  Eigen::VectorXd center(d);
  for (int i = 0; i < d; ++i)
    center(i) = parse_real(tokens[i], "cylinder center");
  const double r = parse_real(tokens[d], "cylinder radius");
  const double h = parse_real(tokens[d + 1], "cylinder height");
  if (!(r > 0.0)) throw std::invalid_argument("cylinder radius must be > 0");
  if (!(h > 0.0)) throw std::invalid_argument("cylinder height must be > 0");
  std::vector<int> axes;
  for (size_t i = d + 2; i < tokens.size(); ++i) {
    const int axis = parse_int(tokens[i], "cylinder axis index");
    if (axis < 0 || axis >= d)
      throw std::invalid_argument("cylinder axis index out of range");
    axes.push_back(axis);
  }
  return Cylinder(center, r, h, Plane::coordinate(d, axes));
}

double parse_exponent(const std::string& token) {
  const double q = parse_real(token, "exponent q");
  if (!(q >= 1.0))
    throw std::invalid_argument("exponent q must satisfy q >= 1");
  return q;
}

// Flat key=value file: '#' comments and blank lines ignored.
std::vector<std::pair<std::string, std::string>> parse_kv_file(
    const std::string& path) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(read_text_file(path));
  std::string line;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("malformed line (need key=value): " + line);
    out.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return out;
}

void emit_block(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_text_file(out_path, text);
  }
}

ExperimentConfig scenario_config(const Scenario& s,
                                 const std::string& config_path) {
  ExperimentConfig cfg = default_config(s);
  if (!config_path.empty()) cfg.merge_kv(read_text_file(config_path));
  return cfg;
}

void print_summary(const std::vector<std::pair<std::string, std::string>>& kv) {
  for (const auto& [k, v] : kv) std::cout << k << '=' << v << '\n';
}

int run_gen(const std::string& scenario, double mesh,
            const std::string& out_path) {
  if (!(mesh > 0.0)) throw std::invalid_argument("--mesh must be > 0");
  const Scenario& s = find_scenario(scenario);
  const DiscreteVarifold v = s.build(mesh);
  save_csv(v, out_path);
  print_summary({{"experiment", "gen"},
                 {"scenario", s.name},
                 {"seed", std::to_string(s.seed)},
                 {"mesh", g17(mesh)},
                 {"n", std::to_string(v.n())},
                 {"m", std::to_string(v.m())},
                 {"atoms", std::to_string(v.size())},
                 {"total_mass", g17(v.total_mass())},
                 {"output", out_path}});
  return 0;
}

int run_excess(const std::string& varifold_path, const std::string& cyl_spec,
               const std::string& q_token, bool tilt_only, bool height_only,
               int forced_q, const std::string& out_path) {
  const DiscreteVarifold v = load_csv(varifold_path);
  const Cylinder c = parse_cylinder(cyl_spec, v.n(), v.ambient());
  const double q = parse_exponent(q_token);
  const bool want_tilt = tilt_only || !height_only;
  const bool want_height = height_only || !tilt_only;

  const double mass = measure(v, [&](const Eigen::VectorXd& x) {
    return c.contains(x);
  });
  std::ostringstream out;
  out << "experiment=excess\n";
  out << "varifold=" << varifold_path << '\n';
  out << "n=" << v.n() << '\n' << "m=" << v.m() << '\n';
  out << "atoms=" << v.size() << '\n';
  out << "q=" << g17(q) << '\n';
  out << "r=" << g17(c.r) << '\n' << "h=" << g17(c.h) << '\n';
  out << "mu_cylinder=" << g17(mass) << '\n';
  if (want_tilt) out << "tilt=" << g17(t_q(v, c, q)) << '\n';
  if (want_height) {
    int big_q = forced_q;
    if (big_q <= 0) {
      const double omega = Constants::unit_ball_volume(v.n());
      big_q = std::max<long>(
          1, std::lround(mass / (omega * std::pow(c.r, v.n()))));
    }
    out << "Q=" << big_q << '\n';
    const HeightReport report = h_q_best(v, c, big_q, q);
    out << "height=" << g17(report.total) << '\n';
    std::istringstream lines(report.to_kv());
    std::string line;
    while (std::getline(lines, line))
      if (!line.empty()) out << "height_" << line << '\n';
  }
  std::cout << out.str();
  if (!out_path.empty()) write_text_file(out_path, out.str());
  return 0;
}

int run_approx(const std::string& varifold_path, const std::string& params_path,
               const std::string& out_dir) {
  const DiscreteVarifold v = load_csv(varifold_path);
  const int d = v.ambient();

  // Required geometry keys: center, r, h, axes.  Everything else tunes the
  // decomposition on top of the r-dependent defaults.
  std::optional<Eigen::VectorXd> center;
  std::optional<double> r, h;
  std::optional<std::vector<int>> axes;
  std::vector<std::pair<std::string, std::string>> tuning;
  for (const auto& [key, value] : parse_kv_file(params_path)) {
    if (key == "center") {
      const auto tokens = split_on(value, ',');
      if (static_cast<int>(tokens.size()) != d)
        throw std::invalid_argument("center wants " + std::to_string(d) +
                                    " coordinates");
      Eigen::VectorXd point(d);
      for (int i = 0; i < d; ++i) point(i) = parse_real(tokens[i], "center");
      center = point;
    } else if (key == "r") {
      r = parse_real(value, "r");
    } else if (key == "h") {
      h = parse_real(value, "h");
    } else if (key == "axes") {
      std::vector<int> list;
      for (const auto& token : split_on(value, ','))
        list.push_back(parse_int(token, "axes"));
      axes = list;
    } else {
      tuning.emplace_back(key, value);
    }
  }
  if (!center || !r || !h || !axes)
    throw std::invalid_argument(
        "params file must set center, r, h, and axes");
  if (static_cast<int>(axes->size()) != v.n())
    throw std::invalid_argument("axes wants " + std::to_string(v.n()) +
                                " indices");
  const Cylinder c(*center, *r, *h, Plane::coordinate(d, *axes));

  ApproxParams params = ApproxParams::defaults(v.n(), c.r);
  for (const auto& [key, value] : tuning) {
    if (key == "eps") {
      params.eps = parse_real(value, key);
    } else if (key == "eps1") {
      params.eps1 = parse_real(value, key);
    } else if (key == "L") {
      params.L = parse_real(value, key);
    } else if (key == "M") {
      params.M = parse_real(value, key);
    } else if (key.size() == 6 && key.rfind("delta", 0) == 0 &&
               key[5] >= '1' && key[5] <= '5') {
      params.delta[key[5] - '1'] = parse_real(value, key);
    } else if (key == "radii") {
      params.radii_schedule.clear();
      for (const auto& token : split_on(value, ','))
        params.radii_schedule.push_back(parse_real(token, "radii"));
    } else {
      throw std::invalid_argument("unknown params key: " + key);
    }
  }
  params.validate(v.n());

  const ApproxResult result = build_approximation(v, c, params);
  std::cout << "experiment=approx\n"
            << "varifold=" << varifold_path << '\n'
            << result.diagnostics_kv();
  if (!out_dir.empty()) save_approx(result, out_dir);
  return result.hypotheses_ok ? 0 : 2;
}

int run_verify(const std::string& scenario, const std::string& config_path,
               const std::string& out_path) {
  const Scenario& s = find_scenario(scenario);
  const FixedScaleReport report =
      run_fixed_scale(s, scenario_config(s, config_path));
  emit_block(report.csv(), out_path);
  print_summary(report.summary);
  return report.flagged ? 2 : 0;
}

int run_decay_cmd(const std::string& scenario, const std::string& config_path,
                  const std::string& out_path) {
  const Scenario& s = find_scenario(scenario);
  const DecayReport report = run_decay(s, scenario_config(s, config_path));
  emit_block(report.csv(), out_path);
  print_summary(report.summary);
  return 0;
}

int run_mono_cmd(const std::string& scenario, const std::string& config_path,
                 const std::string& out_path) {
  const Scenario& s = find_scenario(scenario);
  const MonoReport report =
      run_monotonicity(s, scenario_config(s, config_path));
  emit_block(report.csv(), out_path);
  print_summary(report.summary);
  return report.all_pass ? 0 : 2;
}

std::string scenario_help() {
  std::string out = "scenario name; one of:";
  for (const Scenario& s : scenario_registry()) out += ' ' + s.name;
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"varifold excess / approximation / decay experiment toolkit"};
  app.require_subcommand(1);
  int exit_code = 0;

  // gen <scenario> --mesh <h> -o file.csv
  auto* gen = app.add_subcommand("gen", "sample a registry scenario to CSV");
  std::string gen_scenario, gen_out;
  double gen_mesh = 0.0;
  gen->add_option("scenario", gen_scenario, scenario_help())->required();
  gen->add_option("--mesh", gen_mesh, "sample spacing")->required();
  gen->add_option("-o,--out", gen_out, "output CSV path")->required();
  gen->callback([&] { exit_code = run_gen(gen_scenario, gen_mesh, gen_out); });

  // excess --varifold f --cylinder spec --q q [--tilt|--height]
  auto* excess = app.add_subcommand(
      "excess", "tilt / height functionals over a cylinder");
  std::string ex_varifold, ex_cyl, ex_q = "2", ex_out;
  bool ex_tilt = false, ex_height = false;
  int ex_big_q = 0;
  excess->add_option("--varifold", ex_varifold, "sample CSV path")->required();
  excess
      ->add_option("--cylinder", ex_cyl,
                   "center,r,h,axis indices (flat comma list; h may be inf)")
      ->required();
  excess->add_option("--q", ex_q, "integrand exponent (>= 1 or inf)");
  auto* tilt_flag = excess->add_flag("--tilt", ex_tilt, "tilt only");
  excess->add_flag("--height", ex_height, "height only")->excludes(tilt_flag);
  excess->add_option("--Q", ex_big_q,
                     "sheet count for the height pile (default: inferred)");
  excess->add_option("-o,--out", ex_out, "also write the summary here");
  excess->callback([&] {
    exit_code = run_excess(ex_varifold, ex_cyl, ex_q, ex_tilt, ex_height,
                           ex_big_q, ex_out);
  });

  // approx --varifold f --params f
  auto* approx = app.add_subcommand(
      "approx", "graphical decomposition of a saved sample");
  std::string ap_varifold, ap_params, ap_out;
  approx->add_option("--varifold", ap_varifold, "sample CSV path")->required();
  approx
      ->add_option("--params", ap_params,
                   "key=value file: center, r, h, axes, then optional "
                   "eps, eps1, L, M, delta1..delta5, radii")
      ->required();
  approx->add_option("-o,--out", ap_out, "directory for the full result");
  approx->callback(
      [&] { exit_code = run_approx(ap_varifold, ap_params, ap_out); });

  // The three experiment drivers share a flag shape.
  struct Driver {
    const char* name;
    const char* blurb;
    int (*run)(const std::string&, const std::string&, const std::string&);
    std::string scenario, config, out;
  };
  static Driver drivers[] = {
      {"verify", "fixed-scale height-vs-tilt inequality experiment",
       run_verify, {}, {}, {}},
      {"decay", "shrinking-radius decay experiment", run_decay_cmd, {}, {},
       {}},
      {"mono", "coverage / mass-ratio / layer predicates", run_mono_cmd, {},
       {}, {}},
  };
  for (Driver& d : drivers) {
    auto* cmd = app.add_subcommand(d.name, d.blurb);
    cmd->add_option("--scenario", d.scenario, scenario_help())->required();
    cmd->add_option("--config", d.config,
                    "key=value overrides of the scenario defaults");
    cmd->add_option("-o,--out", d.out, "report CSV path (default: stdout)");
    cmd->callback([&] { exit_code = d.run(d.scenario, d.config, d.out); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return exit_code;
}
