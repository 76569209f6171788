// hk — Hellinger-Kantorovich distances, plans, barycenters and geodesics on
// discrete measures. See README.md for the file formats.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hk/cone_barycenter.hpp"
#include "hk/duality.hpp"
#include "hk/geodesics.hpp"
#include "hk/measure_io.hpp"

using json = nlohmann::ordered_json;

namespace {

struct RunConfig {
  double tolerance = 1e-9;
  std::string epsilon_schedule = "1.0:0.001:0.5";
  int max_iter = 2000;
  std::uint64_t seed = 42;
  std::size_t grid = 512;
  double pad = hk::kPi / 2;
  std::size_t tuple_budget = 100000;
  std::string out;
  std::string weights_csv;

  hk::SolverOptions solver() const {
    hk::SolverOptions o;
    o.tolerance = tolerance;
    o.max_iterations = max_iter;
    o.seed = seed;
    std::istringstream is(epsilon_schedule);
    std::string part;
    std::vector<double> v;
    while (std::getline(is, part, ':')) v.push_back(std::stod(part));
    if (v.size() != 3 || !(v[0] > 0) || !(v[1] > 0) || !(v[2] > 0) || v[2] >= 1.0)
      throw hk::invalid_input("--epsilon-schedule must be start:end:factor with factor in (0,1)");
    o.eps_start = v[0];
    o.eps_end = v[1];
    o.eps_factor = v[2];
    return o;
  }

  std::string canonical() const {
    std::ostringstream os;
    os << "tol=" << hk::format_double(tolerance) << ";eps=" << epsilon_schedule
       << ";max_iter=" << max_iter << ";seed=" << seed << ";grid=" << grid
       << ";pad=" << hk::format_double(pad) << ";tuple_budget=" << tuple_budget
       << ";weights=" << weights_csv;
    return os.str();
  }

  std::string hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : canonical()) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }
};

void add_common(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--tolerance", cfg.tolerance, "solver/certificate tolerance");
  cmd->add_option("--epsilon-schedule", cfg.epsilon_schedule, "start:end:factor annealing schedule");
  cmd->add_option("--max-iter", cfg.max_iter, "inner scaling iterations per stage");
  cmd->add_option("--seed", cfg.seed, "RNG seed");
  cmd->add_option("--grid", cfg.grid, "candidate grid points over the padded bounding box");
  cmd->add_option("--pad", cfg.pad, "bounding-box padding for the candidate grid");
  cmd->add_option("--tuple-budget", cfg.tuple_budget, "multimarginal tuple budget");
  cmd->add_option("--out", cfg.out, "output path");
  cmd->add_option("--weights", cfg.weights_csv, "comma-separated barycenter weights");
}

std::vector<double> parse_weights(const std::string& csv, std::size_t p) {
  std::vector<double> w;
  if (csv.empty()) {
    w.assign(p, 1.0 / double(p));
    return w;
  }
  std::istringstream is(csv);
  std::string part;
  while (std::getline(is, part, ',')) w.push_back(std::stod(part));
  if (w.size() != p) throw hk::invalid_input("--weights count does not match the number of measures");
  double sum = 0.0;
  for (double v : w) {
    if (!(v > 0.0)) throw hk::invalid_input("--weights must be positive");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    std::cerr << "warning: weights sum to " << sum << "; renormalizing\n";
  }
  for (double& v : w) v /= sum;
  return w;
}

std::vector<double> parse_vector(const std::string& csv) {
  std::vector<double> v;
  std::istringstream is(csv);
  std::string part;
  while (std::getline(is, part, ',')) v.push_back(std::stod(part));
  if (v.empty()) throw hk::invalid_input("expected a comma-separated coordinate vector");
  return v;
}

json trace_json(const hk::SolveReport& rep) {
  json t;
  t["method"] = rep.method;
  t["iterations"] = rep.iterations;
  t["polish_sweeps"] = rep.polish_sweeps;
  t["epsilon_path"] = rep.regularization_path;
  return t;
}

json certificate_json(const hk::OptimalityCertificate& c) {
  json j;
  j["on_support"] = c.on_support;
  j["off_support"] = c.off_support;
  return j;
}

void emit(const json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::ofstream f(out);
    if (!f) throw hk::invalid_input(out + ": cannot open for writing");
    f << j.dump(2) << "\n";
  }
}

int cmd_dist(const std::string& file_a, const std::string& file_b, const RunConfig& cfg, bool full_plan) {
  hk::DiscreteMeasure a = hk::read_measure(file_a);
  hk::DiscreteMeasure b = hk::read_measure(file_b);
  auto [plan, rep] = hk::hk_solve(a, b, cfg.solver());
  json j;
  j["hk2"] = rep.value;
  j["hk"] = std::sqrt(std::max(rep.value, 0.0));
  j["converged"] = rep.converged;
  json ps;
  ps["rows"] = plan.rows;
  ps["cols"] = plan.cols;
  std::size_t nnz = 0;
  double mass = 0.0;
  for (double g : plan.entries) {
    if (g > 0.0) ++nnz;
    mass += g;
  }
  ps["nonzeros"] = nnz;
  ps["total_mass"] = mass;
  j["plan"] = ps;
  if (full_plan) {
    json entries = json::array();
    for (std::size_t r = 0; r < plan.rows; ++r)
      for (std::size_t c = 0; c < plan.cols; ++c)
        if (plan.at(r, c) > 0.0) entries.push_back({r, c, plan.at(r, c)});
    j["entries"] = entries;
    j["marginal1"] = plan.marginal1;
    j["marginal2"] = plan.marginal2;
    j["sigma1"] = plan.sigma1;
    j["sigma2"] = plan.sigma2;
  }
  j["certificate"] = certificate_json(rep.certificate);
  j["iterations"] = rep.iterations;
  j["trace"] = trace_json(rep);
  j["config_hash"] = cfg.hash();
  emit(j, cfg.out);
  return rep.converged ? 0 : 2;
}

int cmd_bary(const std::vector<std::string>& files, const std::string& method,
             const std::string& init_file, const RunConfig& cfg) {
  std::vector<hk::DiscreteMeasure> mus;
  for (const auto& f : files) mus.push_back(hk::read_measure(f));
  std::vector<double> w = parse_weights(cfg.weights_csv, mus.size());
  std::string out = cfg.out.empty() ? "barycenter.json" : cfg.out;

  hk::DiscreteMeasure bary = hk::DiscreteMeasure::null(mus.front().space_ptr());
  json report;
  bool converged = true;

  if (method == "multimarginal") {
    hk::MultimarginalOptions mo;
    mo.tuple_budget = cfg.tuple_budget;
    mo.seed = cfg.seed;
    mo.search.seed = cfg.seed;
    hk::MultimarginalSolution sol = hk::solve_multimarginal(mus, w, mo);
    bary = hk::extract_barycenter(sol);
    converged = !sol.ascent_stalled;
    report["objective"] = sol.objective;
    report["total_weighted_mass"] = sol.total_weighted_mass;
    report["marginal_residuals"] = sol.marginal_residuals;
    report["sweeps"] = sol.sweeps;
    report["ascent_stalled"] = sol.ascent_stalled;
    report["non_uniqueness_detected"] = sol.ties_detected;
    json tuples = json::array();
    for (const auto& t : sol.tuples) {
      double carried = 0.0;
      for (double qv : t.carried) carried += qv;
      if (carried <= 0.0) continue;
      json tj;
      tj["indices"] = t.index;
      tj["q"] = t.carried;
      if (t.radius > 0.0) {
        tj["x_star"] = t.x_star.is_index() ? json(t.x_star.idx()) : json(t.x_star.coords());
        tj["r_star"] = t.radius;
      } else {
        tj["x_star"] = nullptr;  // apex: carried mass is destroyed
        tj["r_star"] = 0.0;
      }
      tj["tie"] = t.tie;
      tuples.push_back(tj);
    }
    report["tuples"] = tuples;
  } else if (method == "fixed-point") {
    hk::FixedPointOptions fo;
    fo.solver = cfg.solver();
    fo.search.seed = cfg.seed;
    hk::DiscreteMeasure init = init_file.empty() ? hk::DiscreteMeasure::null(mus.front().space_ptr())
                                                 : hk::read_measure(init_file);
    if (init.is_null()) {
      for (std::size_t i = 0; i < mus.size(); ++i) init = init + mus[i].scaled(w[i]);
    }
    hk::FixedPointResult fp = hk::barycenter_fixed_point(init, mus, w, fo);
    bary = fp.barycenter;
    converged = fp.converged;
    report["objective"] = fp.objective;
    report["iterations"] = fp.iterations;
    report["converged"] = fp.converged;
    report["objective_trace"] = fp.trace;
  } else {
    throw hk::invalid_input("--method must be multimarginal or fixed-point");
  }

  double J = 0.0;
  json jtrace = json::array();
  for (std::size_t i = 0; i < mus.size(); ++i) {
    auto [plan, rep] = hk::hk_solve(bary, mus[i], cfg.solver());
    J += w[i] * rep.value;
    json ji;
    ji["hk2"] = rep.value;
    ji["certificate"] = certificate_json(rep.certificate);
    ji["iterations"] = rep.iterations;
    jtrace.push_back(ji);
  }
  report["J"] = J;
  report["distances"] = jtrace;
  report["weights"] = w;
  report["config_hash"] = cfg.hash();

  hk::write_measure(out, bary);
  {
    std::ofstream f(out + ".report.json");
    if (!f) throw hk::invalid_input(out + ".report.json: cannot open for writing");
    f << report.dump(2) << "\n";
  }

  json summary;
  summary["method"] = method;
  summary["J"] = J;
  if (report.contains("objective")) summary["objective"] = report["objective"];
  summary["atoms"] = bary.size();
  summary["total_mass"] = bary.total_mass();
  if (report.contains("non_uniqueness_detected"))
    summary["non_uniqueness_detected"] = report["non_uniqueness_detected"];
  summary["out"] = out;
  summary["report"] = out + ".report.json";
  summary["config_hash"] = cfg.hash();
  std::cout << summary.dump(2) << "\n";
  return converged ? 0 : 2;
}

int cmd_dual_check(const std::vector<std::string>& measure_files,
                   const std::vector<std::string>& potential_files, const std::string& bary_file,
                   const RunConfig& cfg) {
  std::vector<hk::DiscreteMeasure> mus;
  for (const auto& f : measure_files) mus.push_back(hk::read_measure(f));
  if (potential_files.size() != mus.size())
    throw hk::invalid_input("need exactly one potential file per measure");
  std::vector<hk::PotentialFunction> fs;
  for (const auto& f : potential_files) fs.push_back(hk::read_potential(f, mus.front().space()));
  std::vector<double> w = parse_weights(cfg.weights_csv, mus.size());
  std::vector<hk::Point> cands = hk::default_candidates(mus, cfg.grid, cfg.pad);

  json j;
  double dual = hk::dual_objective(fs, mus, w, cands);  // throws infeasible_error on violation
  j["feasible"] = true;
  j["dual_value"] = dual;
  int code = 0;
  if (!bary_file.empty()) {
    hk::DiscreteMeasure bary = hk::read_measure(bary_file);
    hk::WeakDualityReport rep = hk::weak_duality_certificate(fs, mus, w, bary, cands, cfg.solver());
    j["primal_J"] = rep.primal;
    j["gap"] = rep.gap;
    if (!(rep.gap >= -cfg.tolerance)) code = 2;
  }
  j["config_hash"] = cfg.hash();
  emit(j, cfg.out);
  return code;
}

int cmd_geodesic(const std::string& kind, double a1, const std::string& x1csv, double a2,
                 const std::string& x2csv, const std::string& samples_csv, const RunConfig& cfg) {
  std::vector<double> x1 = parse_vector(x1csv), x2 = parse_vector(x2csv);
  if (x1.size() != x2.size()) throw hk::invalid_input("geodesic endpoints must share a dimension");
  auto space = hk::make_space(hk::GroundSpace::euclidean(static_cast<int>(x1.size())));
  auto k = kind == "hellinger" ? hk::DiracGeodesic::Kind::hellinger
                               : hk::DiracGeodesic::Kind::transport;
  if (kind != "hellinger" && kind != "transport")
    throw hk::invalid_input("--kind must be hellinger or transport");
  hk::DiracGeodesic curve(k, space, a1, hk::Point::at(x1), a2, hk::Point::at(x2));

  std::vector<double> samples;
  if (samples_csv.empty()) {
    for (int i = 0; i <= 10; ++i) samples.push_back(double(i) / 10.0);
  } else {
    samples = parse_vector(samples_csv);
  }
  std::ostringstream os;
  os << "s";
  for (std::size_t d = 0; d < x1.size(); ++d) os << ",x" << d;
  os << ",mass\n";
  for (double s : samples) {
    hk::DiscreteMeasure mu = curve.at(s);
    for (const auto& atom : mu.atoms()) {
      os << hk::format_double(s);
      for (std::size_t d = 0; d < atom.point.dim(); ++d) os << "," << hk::format_double(atom.point[d]);
      os << "," << hk::format_double(atom.mass) << "\n";
    }
  }
  if (cfg.out.empty()) {
    std::cout << os.str();
  } else {
    std::ofstream f(cfg.out);
    if (!f) throw hk::invalid_input(cfg.out + ": cannot open for writing");
    f << os.str();
  }
  return 0;
}

int cmd_cost_matrix(const std::string& file_a, const std::string& file_b, const RunConfig& cfg) {
  hk::DiscreteMeasure a = hk::read_measure(file_a);
  hk::DiscreteMeasure b = hk::read_measure(file_b);
  if (!a.space().same(b.space())) throw hk::invalid_input("cost-matrix: measures on different spaces");
  std::ostringstream os;
  for (const auto& pa : a.atoms()) {
    bool first = true;
    for (const auto& pb : b.atoms()) {
      double c = hk::ell_cost(a.space().distance(pa.point, pb.point));
      if (!first) os << ",";
      first = false;
      os << (c == hk::kInfinity ? std::string("inf") : hk::format_double(c));
    }
    os << "\n";
  }
  if (cfg.out.empty()) {
    std::cout << os.str();
  } else {
    std::ofstream f(cfg.out);
    if (!f) throw hk::invalid_input(cfg.out + ": cannot open for writing");
    f << os.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hellinger-Kantorovich distances, plans and barycenters"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string file_a, file_b, method = "multimarginal", init_file, bary_file;
  std::vector<std::string> measure_files, potential_files;
  std::string geo_kind = "transport", x1csv, x2csv, samples_csv;
  double a1 = 1.0, a2 = 1.0;

  CLI::App* dist = app.add_subcommand("dist", "HK distance between two measure files");
  dist->add_option("A", file_a, "measure file")->required();
  dist->add_option("B", file_b, "measure file")->required();
  add_common(dist, cfg);

  CLI::App* plan = app.add_subcommand("plan", "optimal entropy-transport plan dump");
  plan->add_option("A", file_a, "measure file")->required();
  plan->add_option("B", file_b, "measure file")->required();
  add_common(plan, cfg);

  CLI::App* bary = app.add_subcommand("bary", "HK barycenter of two or more measures");
  bary->add_option("measures", measure_files, "measure files")->required()->expected(-2);
  bary->add_option("--method", method, "multimarginal or fixed-point");
  bary->add_option("--init", init_file, "initial measure for the fixed point");
  add_common(bary, cfg);

  CLI::App* dual = app.add_subcommand("dual-check", "feasibility, dual value and duality gap");
  dual->add_option("measures", measure_files, "measure files")->required()->expected(-2);
  dual->add_option("--potentials", potential_files, "potential files, one per measure")->required();
  dual->add_option("--bary", bary_file, "candidate barycenter for the gap report");
  add_common(dual, cfg);

  CLI::App* geo = app.add_subcommand("geodesic", "sample a Dirac-pair geodesic as CSV");
  geo->add_option("--kind", geo_kind, "hellinger or transport");
  geo->add_option("--a1", a1, "first endpoint mass");
  geo->add_option("--x1", x1csv, "first endpoint coordinates (comma-separated)")->required();
  geo->add_option("--a2", a2, "second endpoint mass");
  geo->add_option("--x2", x2csv, "second endpoint coordinates")->required();
  geo->add_option("--samples", samples_csv, "comma-separated s values (default 0,0.1,...,1)");
  add_common(geo, cfg);

  CLI::App* cost = app.add_subcommand("cost-matrix", "pairwise ℓ(d) cost matrix as CSV");
  cost->add_option("A", file_a, "measure file")->required();
  cost->add_option("B", file_b, "measure file")->required();
  add_common(cost, cfg);

  CLI11_PARSE(app, argc, argv);

  try {
    if (dist->parsed()) return cmd_dist(file_a, file_b, cfg, false);
    if (plan->parsed()) return cmd_dist(file_a, file_b, cfg, true);
    if (bary->parsed()) return cmd_bary(measure_files, method, init_file, cfg);
    if (dual->parsed()) return cmd_dual_check(measure_files, potential_files, bary_file, cfg);
    if (geo->parsed()) return cmd_geodesic(geo_kind, a1, x1csv, a2, x2csv, samples_csv, cfg);
    if (cost->parsed()) return cmd_cost_matrix(file_a, file_b, cfg);
  } catch (const hk::budget_exceeded& e) {
    std::cerr << "error: " << e.what() << "\n(try --method fixed-point or raise --tuple-budget)\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
