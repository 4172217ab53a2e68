// miw: run ensembles, print reference spectra, compare reports against the oracle.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "miw/config.hpp"
#include "miw/oracle.hpp"
#include "miw/solver.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kTolerance = 1;
constexpr int kUsage = 2;
constexpr int kRuntime = 3;

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12e", x);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw miw::Error("cannot write " + path.string());
  out << text;
}

template <int D>
void write_snapshot(const fs::path& dir, const miw::solver::Snapshot<D>& s) {
  char name[48];
  std::snprintf(name, sizeof name, "snapshot_%09ld.csv", s.iteration);
  std::ostringstream os;
  os << "world_index";
  for (int k = 1; k <= D; ++k) os << ",x" << k;
  if constexpr (D == 2) os << ",bandwidth";
  os << ",cell_volume,bounded";
  if constexpr (D == 2) os << ",is_boundary";
  os << '\n';
  const std::size_t m = s.mobile.size();
  const std::size_t n = m + s.boundary.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = i < m ? s.mobile[i] : s.boundary[i - m];
    os << i;
    for (int k = 0; k < D; ++k) os << ',' << fmt(p[k]);
    if constexpr (D == 2) os << ',' << (i < s.bandwidths.size() ? fmt(s.bandwidths[i]) : std::string(""));
    os << ',' << (i < s.cell_volumes.size() ? fmt(s.cell_volumes[i]) : fmt(-1.0));
    os << ',' << (i < s.bounded.size() ? int(s.bounded[i]) : 0);
    if constexpr (D == 2) os << ',' << (i >= m ? 1 : 0);
    os << '\n';
  }
  write_text(dir / name, os.str());
}

template <int D>
int run_dimension(const miw::config::RunConfig& rc, const fs::path& out) {
  fs::create_directories(out / "snapshots");
  std::ofstream trace(out / "energy_trace.csv", std::ios::binary);
  if (!trace) throw miw::Error("cannot write " + (out / "energy_trace.csv").string());
  trace << "iteration,t,E_kin,E_cls,E_qm,E_total,rel_err\n";

  miw::solver::Observer<D> obs;
  obs.on_record = [&](const miw::solver::TraceRecord& r) {
    trace << r.iteration << ',' << fmt(r.time) << ',' << fmt(r.energy.kinetic) << ',' << fmt(r.energy.classical)
          << ',' << fmt(r.energy.quantum) << ',' << fmt(r.energy.total()) << ',' << fmt(r.rel_err) << '\n';
  };
  obs.on_snapshot = [&](const miw::solver::Snapshot<D>& s) { write_snapshot<D>(out / "snapshots", s); };

  const auto report = miw::solver::run<D>(rc.solver, obs);
  trace.close();
  write_text(out / "report.json", miw::config::report_to_json<D>(rc, report).dump(2) + "\n");

  if (report.termination == "error") {
    // Bandwidth failures carry a center,bandwidth,target,achieved table after the first line.
    const auto nl = report.error.find('\n');
    if (nl != std::string::npos) write_text(out / "kde_debug.csv", report.error.substr(nl + 1));
    std::cerr << "error: " << report.error.substr(0, nl) << '\n';
    return kRuntime;
  }
  const auto& last = report.trace.back();
  std::cout << "termination: " << report.termination << ", iterations: " << report.iterations_done
            << ", E_total: " << last.energy.total() << " " << rc.solver.potential.units()
            << ", rel_err: " << report.rel_err << '\n';
  return kOk;
}

int cmd_run(const std::string& path, const std::string& out_override) {
  miw::config::RunConfig rc;
  try {
    rc = miw::config::load_run_config(path);
  } catch (const miw::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  }
  const fs::path out = out_override.empty() ? fs::path(rc.output_dir) : fs::path(out_override);
  try {
    return rc.solver.dimension() == 1 ? run_dimension<1>(rc, out) : run_dimension<2>(rc, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
}

struct OracleArgs {
  std::string potential;
  double omega = 1.0;
  double alpha = 1.0;
  int lambda = 0;
  int dimension = 1;
  int levels = 2;
  int grid = 0;
  std::vector<double> domain;
};

miw::Potential oracle_potential(const OracleArgs& a) {
  if (a.dimension < 1 || a.dimension > 2) throw miw::InvalidArgument("dimension must be 1 or 2");
  if (a.potential == "harmonic") return miw::Potential::harmonic(a.omega, a.dimension);
  if (a.potential == "poschl_teller") {
    auto axis = miw::Potential::poschl_teller(a.alpha, a.lambda);
    if (a.dimension == 1) return axis;
    return miw::Potential::separable({axis, axis});
  }
  if (!a.potential.empty() && a.potential.front() == '{')
    return miw::config::parse_potential(json::parse(a.potential));
  throw miw::InvalidArgument("unsupported potential '" + a.potential + "'");
}

int cmd_oracle(const OracleArgs& a) {
  json j;
  try {
    const auto v = oracle_potential(a);
    const auto exact = miw::oracle::exact_energies(v, a.levels);
    std::vector<miw::Potential> axes = v.kind() == miw::PotentialKind::SeparableSum ? v.axes()
                                       : v.dimension() == 1 ? std::vector<miw::Potential>{v}
                                                            : std::vector<miw::Potential>(2, miw::Potential::harmonic(v.omega()));
    std::vector<miw::oracle::GridAxis> grids;
    for (const auto& ax : axes) {
      auto g = miw::oracle::default_grid(ax);
      if (a.grid > 0) g.points = a.grid;
      if (a.domain.size() == 2) {
        g.lower = a.domain[0];
        g.upper = a.domain[1];
      }
      grids.push_back(g);
    }
    std::vector<double> grid;
    if (v.dimension() == 1) {
      int k = a.levels;
      if (v.kind() == miw::PotentialKind::PoschlTeller) k = std::min(k, v.lambda());
      grid = miw::oracle::grid_eigensolve_1d(v, grids.front(), k);
    } else {
      const auto sep = v.kind() == miw::PotentialKind::SeparableSum ? v : miw::Potential::separable(axes);
      grid = miw::oracle::grid_eigensolve_separable(sep, grids, a.levels);
    }
    j["potential"] = miw::config::potential_to_json(v);
    j["units"] = v.units();
    j["levels"] = a.levels;
    j["exact"] = exact;
    j["grid"] = grid;
    j["grid_points"] = grids.front().points;
    j["domain"] = {grids.front().lower, grids.front().upper};
  } catch (const std::exception& e) {
    std::cerr << "oracle error: " << e.what() << '\n';
    return kUsage;
  }
  std::cout << j.dump(2) << '\n';
  return kOk;
}

int cmd_compare(const std::string& path, double tol) {
  json r;
  try {
    std::ifstream in(path);
    if (!in) throw miw::Error("cannot open " + path);
    r = json::parse(in);
  } catch (const std::exception& e) {
    std::cerr << "compare error: " << e.what() << '\n';
    return kUsage;
  }
  const auto& o = r.value("oracle", json());
  if (!o.is_object() || !o.value("exact", json()).is_number() || !o.value("next", json()).is_number()) {
    std::cerr << "compare error: report has no oracle energies\n";
    return kUsage;
  }
  const double exact = o["exact"].get<double>();
  const double next = o["next"].get<double>();
  double e = std::nan("");
  if (r.value("tail", json()).is_object() && r["tail"].value("mean_total", json()).is_number())
    e = r["tail"]["mean_total"].get<double>();
  else if (r.value("final", json()).is_object() && r["final"].value("total", json()).is_number())
    e = r["final"]["total"].get<double>();
  if (!std::isfinite(e)) {
    std::cerr << "compare error: report has no final energy\n";
    return kUsage;
  }
  const double err = std::abs(e - exact) / (next - exact);
  std::cout << "rel_err " << err << " tolerance " << tol << " (E " << e << ", E_exact " << exact << ")\n";
  return err <= tol ? kOk : kTolerance;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Many-interacting-worlds ground and excited state solver"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  auto* run = app.add_subcommand("run", "Run a configured ensemble and write trace, snapshots and report");
  run->add_option("config", config_path, "Run configuration (JSON)")->required();
  run->add_option("--out", out_dir, "Output directory (overrides output_dir)");

  OracleArgs oa;
  auto* orc = app.add_subcommand("oracle", "Print exact and grid energies as JSON");
  orc->add_option("--potential", oa.potential, "harmonic, poschl_teller, or a potential JSON object")->required();
  orc->add_option("--levels", oa.levels, "Number of levels")->required()->check(CLI::NonNegativeNumber);
  orc->add_option("--omega", oa.omega, "Harmonic frequency");
  orc->add_option("--alpha", oa.alpha, "Poschl-Teller inverse width");
  orc->add_option("--lambda", oa.lambda, "Poschl-Teller depth parameter");
  orc->add_option("--dimension,-d", oa.dimension, "1 or 2");
  orc->add_option("--grid", oa.grid, "Interior grid points per axis");
  orc->add_option("--domain", oa.domain, "Grid domain a b")->expected(2);

  std::string report_path;
  double tol = 0.05;
  auto* cmp = app.add_subcommand("compare", "Check a report's relative error against a tolerance");
  cmp->add_option("report", report_path, "report.json")->required();
  cmp->add_option("--tol", tol, "Tolerance on |E - E_exact| / (E_next - E_exact)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }
  if (*run) return cmd_run(config_path, out_dir);
  if (*orc) return cmd_oracle(oa);
  return cmd_compare(report_path, tol);
}
