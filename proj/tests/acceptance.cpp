// Acceptance run: one PASS/FAIL line per criterion, exit status 1 when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "miw/config.hpp"
#include "miw/geometry.hpp"
#include "miw/kde.hpp"
#include "miw/miw1d.hpp"
#include "miw/oracle.hpp"
#include "miw/solver.hpp"

using miw::Point;
using miw::Potential;
namespace kde = miw::kde;
namespace oracle = miw::oracle;
namespace solver = miw::solver;

namespace {

int failures = 0;

void verdict(int id, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Outcome {
  std::string name;
  std::vector<solver::TraceRecord> trace;
  std::string termination;
  std::string error;
  long iterations = 0;
  bool boundary_unchanged = true;
  double exact = 0.0;
  double next = 0.0;
  double seconds = 0.0;
  bool one_dimensional = true;

  double final_total() const { return trace.empty() ? std::nan("") : trace.back().energy.total(); }

  double tail_mean(std::size_t window = 1000) const {
    if (trace.empty()) return std::nan("");
    const std::size_t n = std::min(window, trace.size());
    double s = 0.0;
    for (std::size_t i = trace.size() - n; i < trace.size(); ++i) s += trace[i].energy.total();
    return s / static_cast<double>(n);
  }

  bool finite() const {
    for (const auto& r : trace)
      if (!std::isfinite(r.energy.total())) return false;
    return !trace.empty();
  }
};

Outcome run_config(const std::string& file) {
  const auto rc = miw::config::load_run_config(std::string(MIW_CONFIG_DIR) + "/" + file);
  Outcome o;
  o.name = file;
  const auto t0 = std::chrono::steady_clock::now();
  auto take = [&](auto report) {
    o.trace = std::move(report.trace);
    o.termination = report.termination;
    o.error = report.error;
    o.iterations = report.iterations_done;
    o.boundary_unchanged = report.boundary_unchanged;
    o.exact = report.exact;
    o.next = report.next;
  };
  if (rc.solver.dimension() == 1) {
    take(solver::run<1>(rc.solver));
  } else {
    o.one_dimensional = false;
    take(solver::run<2>(rc.solver));
  }
  o.seconds = seconds_since(t0);
  std::printf("  %s: %s after %ld iterations in %.1f s, final E %.6f, tail mean %.6f%s%s\n", file.c_str(),
              o.termination.c_str(), o.iterations, o.seconds, o.final_total(), o.tail_mean(),
              o.error.empty() ? "" : ", error: ", o.error.substr(0, o.error.find('\n')).c_str());
  std::fflush(stdout);
  return o;
}

// Windowed means over consecutive windows of `window` outer steps after `burn_in`; returns the worst rise.
double worst_window_rise(const Outcome& o, long burn_in = 100, long window = 100) {
  std::vector<double> means;
  double sum = 0.0;
  long count = 0;
  long current = -1;
  for (const auto& r : o.trace) {
    if (r.iteration < burn_in) continue;
    const long w = (r.iteration - burn_in) / window;
    if (w != current) {
      if (count > 0) means.push_back(sum / count);
      sum = 0.0;
      count = 0;
      current = w;
    }
    sum += r.energy.total();
    ++count;
  }
  if (count > 0 && o.iterations >= burn_in + (current + 1) * window) means.push_back(sum / count);
  double worst = -INFINITY;
  for (std::size_t k = 1; k < means.size(); ++k) worst = std::max(worst, means[k] - means[k - 1]);
  return worst;
}

template <std::size_t D>
kde::KernelEstimate<D> random_mixture(std::mt19937_64& rng, int n, bool signed_kernel) {
  std::uniform_real_distribution<double> c(-2.0, 2.0);
  std::uniform_real_distribution<double> h(0.4, 1.5);
  kde::KernelEstimate<D> e;
  for (int i = 0; i < n; ++i) {
    Point<D> p{};
    for (auto& x : p) x = c(rng);
    e.centers.push_back(p);
    e.bandwidths.push_back(h(rng));
    e.weights.push_back(1.0 / n);
  }
  if (signed_kernel) e.bandwidths[0] = -0.3 * e.bandwidths[0];
  return e;
}

double normalization_error_1d(std::mt19937_64& rng) {
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const auto e = random_mixture<1>(rng, 8, false);
    const double lo = -2.0 - 15.0, hi = 2.0 + 15.0;
    const int n = 40000;
    const double dx = (hi - lo) / n;
    double sum = 0.0;
    for (int i = 0; i <= n; ++i) sum += (i == 0 || i == n ? 0.5 : 1.0) * kde::evaluate(e, Point<1>{lo + i * dx});
    worst = std::max(worst, std::abs(sum * dx - 1.0));
  }
  return worst;
}

double normalization_error_2d(std::mt19937_64& rng) {
  double worst = 0.0;
  for (int t = 0; t < 3; ++t) {
    const auto e = random_mixture<2>(rng, 5, false);
    const double lo = -2.0 - 15.0, hi = 2.0 + 15.0;
    const int n = 700;
    const double dx = (hi - lo) / n;
    double sum = 0.0;
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n; ++j)
        sum += (i == 0 || i == n ? 0.5 : 1.0) * (j == 0 || j == n ? 0.5 : 1.0) *
               kde::evaluate(e, Point<2>{lo + i * dx, lo + j * dx});
    worst = std::max(worst, std::abs(sum * dx * dx - 1.0));
  }
  return worst;
}

// -dU/dx along one axis by Ridders' extrapolation of central differences.
template <std::size_t D>
double fd_force(const kde::KernelEstimate<D>& e, Point<D> x, std::size_t axis, double s) {
  auto at = [&](double d) {
    Point<D> y = x;
    y[axis] += d;
    return kde::quantum_potential(e, y);
  };
  // Stay well inside the distance to the nearest zero of P, where U has a pole.
  const auto d = kde::derivatives(e, x);
  const double g = std::sqrt(miw::dot<D>(d.gradient, d.gradient));
  if (g > 0.0) s = std::min(s, 0.1 * std::abs(d.value) / g);
  constexpr int n = 12;
  constexpr double shrink = 1.4;
  double a[n][n];
  double best = 0.0;
  double err = INFINITY;
  a[0][0] = (at(s) - at(-s)) / (2 * s);
  for (int i = 1; i < n; ++i) {
    s /= shrink;
    a[0][i] = (at(s) - at(-s)) / (2 * s);
    double fac = shrink * shrink;
    for (int j = 1; j <= i; ++j) {
      a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
      fac *= shrink * shrink;
      const double e1 = std::max(std::abs(a[j][i] - a[j - 1][i]), std::abs(a[j][i] - a[j - 1][i - 1]));
      if (e1 <= err) {
        err = e1;
        best = a[j][i];
      }
    }
  }
  return -best;
}

// Worst relative deviation of the analytic force from a finite difference of U.
double force_error(std::mt19937_64& rng, int& checked) {
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  const double s = 0.05;
  double worst = 0.0;
  checked = 0;
  while (checked < 100) {
    const bool two_d = checked % 2 == 1;
    if (!two_d) {
      const auto e = random_mixture<1>(rng, 6, checked % 3 == 0);
      const double x = u(rng);
      if (std::abs(kde::evaluate(e, Point<1>{x})) < 1e-3) continue;
      const double fd = fd_force<1>(e, Point<1>{x}, 0, s);
      const double f = kde::quantum_force(e, Point<1>{x})[0];
      worst = std::max(worst, std::abs(f - fd) / std::max(1.0, std::abs(f)));
    } else {
      const auto e = random_mixture<2>(rng, 6, false);
      const Point<2> y{u(rng), u(rng)};
      const auto f = kde::quantum_force(e, y);
      for (std::size_t a = 0; a < 2; ++a) {
        const double fd = fd_force<2>(e, y, a, s);
        worst = std::max(worst, std::abs(f[a] - fd) / std::max(1.0, std::abs(f[a])));
      }
    }
    ++checked;
  }
  return worst;
}

double completeness_error(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const int c = 2 + t % 6;
    std::vector<Point<2>> v(c);
    for (auto& x : v) x = {u(rng), u(rng)};
    const auto b = miw::geometry::dual_basis<2>(v);
    for (int r = 0; r < 2; ++r)
      for (int col = 0; col < 2; ++col) {
        double sum = 0.0;
        for (int k = 0; k < c; ++k) sum += b.duals[k][r] * v[k][col];
        worst = std::max(worst, std::abs(sum - (r == col ? 1.0 : 0.0)));
      }
  }
  return worst;
}

double miw1d_drift(std::mt19937_64& rng) {
  namespace m1 = miw::miw1d;
  const auto v = Potential::harmonic(1.0);
  const std::size_t m = 20;
  m1::State s;
  for (std::size_t i = 0; i < m; ++i) s.positions.push_back(-3.0 + 0.3 * static_cast<double>(i));
  std::normal_distribution<double> g(0.0, 0.1);
  for (std::size_t i = 0; i < m; ++i) s.velocities.push_back(g(rng));
  const double dt = 1e-4;
  const double e0 = m1::total_energy(s, v).total();
  auto f = m1::forces(s.positions, v);
  double drift = 0.0;
  for (int step = 0; step < 10000; ++step) {
    for (std::size_t i = 0; i < m; ++i) s.positions[i] += dt * s.velocities[i] + 0.5 * dt * dt * f[i];
    m1::require_ordered(s.positions);
    const auto fn = m1::forces(s.positions, v);
    for (std::size_t i = 0; i < m; ++i) s.velocities[i] += 0.5 * dt * (f[i] + fn[i]);
    f = fn;
    drift = std::max(drift, std::abs(m1::total_energy(s, v).total() - e0) / std::abs(e0));
  }
  return drift;
}

}  // namespace

int main() {
  std::vector<Outcome> benchmarks;
  std::vector<bool> passed;

  // 1. MIW model, harmonic ground state.
  {
    auto o = run_config("benchmark_1d_harmonic_miw.json");
    const double e = o.final_total();
    const bool ok = o.termination != "error" && std::abs(e - 0.475) <= 0.005;
    verdict(1, ok, fmt("1d MIW final per-world E = %.6f, target 0.475 +- 0.005", e));
    benchmarks.push_back(std::move(o));
    passed.push_back(ok);
  }

  // 2. Kernel estimator, harmonic ground state.
  {
    auto o = run_config("benchmark_1d_harmonic_kernel.json");
    const double e = o.tail_mean();
    const double err = std::abs(e - o.exact) / (o.next - o.exact);
    const bool ok = o.termination != "error" && err <= 0.05;
    verdict(2, ok, fmt("1d kernel tail mean E = %.6f, |E-0.5|/(1.5-0.5) = %.4f, tolerance 0.05", e, err));
    benchmarks.push_back(std::move(o));
    passed.push_back(ok);
  }

  // 3. First excited states with one node at the origin.
  {
    auto a = run_config("excited_1d_harmonic.json");
    auto b = run_config("excited_1d_poschl_teller.json");
    const double ea = a.tail_mean();
    const double eb = b.tail_mean();
    const bool ok_a = a.termination != "error" && std::abs(ea - 1.5) <= 0.1;
    const bool ok_b = b.termination != "error" && std::abs(eb + 12.5) <= 0.45;
    verdict(3, ok_a && ok_b,
            fmt("(a) harmonic tail mean E = %.6f, target 1.5 +- 0.1: %s; (b) Poschl-Teller tail mean E = %.6f, "
                "target -12.5 +- 0.45: %s%s",
                ea, ok_a ? "pass" : "fail", eb, ok_b ? "pass" : "fail",
                b.termination == "error" ? " (run aborted)" : ""));
    benchmarks.push_back(std::move(a));
    passed.push_back(ok_a);
    benchmarks.push_back(std::move(b));
    passed.push_back(ok_b);
  }

  // 4. Two-dimensional harmonic oscillator.
  {
    auto o = run_config("benchmark_2d_harmonic.json");
    const double e = o.tail_mean();
    const bool ok = o.termination != "error" && std::abs(e - 1.0) <= 0.1;
    verdict(4, ok, fmt("2d harmonic tail mean E = %.6f (final %.6f), target 1.0 +- 0.1", e, o.final_total()));
    benchmarks.push_back(std::move(o));
    passed.push_back(ok);
  }

  // 5. Two-dimensional Poschl-Teller well with fixed boundary worlds.
  {
    const auto o = run_config("benchmark_2d_poschl_teller.json");
    const double e = o.final_total();
    const bool stable = o.termination == "completed" && o.iterations == 10000 && o.finite() && o.boundary_unchanged;
    const bool ok = stable && e >= -27.25 && e <= -24.1;
    verdict(5, ok,
            fmt("2d Poschl-Teller %s, final E = %.6f (tail mean %.6f), window [-27.25, -24.1]",
                stable ? "stable over 10000 iterations" : "unstable", e, o.tail_mean()));
  }

  // 6. Oracle self-consistency.
  {
    const std::vector<Potential> bench{
        Potential::harmonic(1.0), Potential::poschl_teller(1.0, 6), Potential::harmonic(1.0, 2),
        Potential::separable({Potential::poschl_teller(1.0, 5), Potential::poschl_teller(1.0, 5)})};
    double worst = 0.0;
    for (const auto& v : bench) {
      const auto exact = oracle::exact_energies(v, 3);
      std::vector<double> grid;
      if (v.dimension() == 1) {
        grid = oracle::grid_eigensolve_1d(v, oracle::default_grid(v), 3);
      } else {
        const auto sep = v.kind() == miw::PotentialKind::SeparableSum
                             ? v
                             : Potential::separable({Potential::harmonic(1.0), Potential::harmonic(1.0)});
        std::vector<oracle::GridAxis> axes;
        for (const auto& a : sep.axes()) axes.push_back(oracle::default_grid(a));
        grid = oracle::grid_eigensolve_separable(sep, axes, 3);
      }
      for (int k = 0; k < 3; ++k) worst = std::max(worst, std::abs(grid[k] - exact[k]));
    }
    const auto pt = Potential::poschl_teller(1.0, 6);
    std::vector<double> errs;
    for (int g : {250, 500, 1000, 2000}) errs.push_back(std::abs(oracle::grid_eigensolve_1d(pt, {-12.0, 12.0, g}, 2)[1] + 12.5));
    bool second_order = true;
    std::string ratios;
    for (std::size_t i = 1; i < errs.size(); ++i) {
      const double r = errs[i - 1] / errs[i];
      second_order = second_order && std::abs(r - 4.0) <= 0.2;
      ratios += fmt("%s%.3f", i > 1 ? ", " : "", r);
    }
    verdict(6, worst <= 1e-3 && second_order,
            fmt("max |grid - exact| = %.2e (tolerance 1e-3), G-doubling error ratios %s (expected 4 +- 0.2)", worst,
                ratios.c_str()));
  }

  // 7. Property suites.
  {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);
    const double n1 = normalization_error_1d(rng);
    const double n2 = normalization_error_2d(rng);
    int checked = 0;
    const double fe = force_error(rng, checked);
    const double ce = completeness_error(rng);
    const double drift = miw1d_drift(rng);
    const double property_seconds = seconds_since(t0);

    int passing_1d = 0;
    int crossings = 0;
    for (std::size_t i = 0; i < benchmarks.size(); ++i) {
      if (!benchmarks[i].one_dimensional || !passed[i]) continue;
      ++passing_1d;
      if (benchmarks[i].error.find("world crossing") != std::string::npos) ++crossings;
    }

    bool monotone = true;
    std::string rises;
    for (const auto& o : benchmarks) {
      const double rise = worst_window_rise(o);
      const double tol = 1e-3 * std::abs(o.exact);
      const bool ok = rise <= tol;
      monotone = monotone && ok;
      rises += fmt("\n    %s: worst windowed rise %.3e (tolerance %.3e) %s", o.name.c_str(), rise, tol, ok ? "ok" : "VIOLATED");
    }

    const bool ok_norm = n1 <= 1e-6 && n2 <= 1e-4;
    const bool ok_force = fe <= 1e-6;
    const bool ok_dual = ce <= 1e-10;
    const bool ok_drift = drift <= 1e-6;
    const bool ok_cross = crossings == 0;
    const bool ok_time = property_seconds < 60.0;
    verdict(7, ok_norm && ok_force && ok_dual && ok_drift && ok_cross && monotone && ok_time,
            fmt("normalization 1d %.1e / 2d %.1e: %s; force vs finite difference %.1e on %d mixtures: %s; "
                "dual-basis completeness %.1e: %s; miw1d drift %.1e: %s; crossings on %d passing 1d runs: %d; "
                "property suites %.1f s: %s; dissipation monotonicity: %s",
                n1, n2, ok_norm ? "ok" : "fail", fe, checked, ok_force ? "ok" : "fail", ce, ok_dual ? "ok" : "fail",
                drift, ok_drift ? "ok" : "fail", passing_1d, crossings, property_seconds, ok_time ? "ok" : "fail",
                monotone ? "ok" : "fail") +
                rises);
  }

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
