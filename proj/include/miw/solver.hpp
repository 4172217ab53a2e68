#pragma once

// Dissipative world-ensemble iteration for the kernel estimators and the discrete 1d model.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "miw/geometry.hpp"
#include "miw/kde.hpp"
#include "miw/miw1d.hpp"
#include "miw/oracle.hpp"
#include "miw/potentials.hpp"
#include "miw/types.hpp"

namespace miw::solver {

enum class Mode { Kernel1d, Kernel1dExcited, KernelVoronoi2d, Miw1d };

/// How kinetic energy is drained between outer steps.
///
/// Reset zeroes every velocity before each step. Quench keeps velocities while the ensemble
/// moves downhill and zeroes them all as soon as the power sum v . F turns negative.
enum class Scheme { Reset, Quench };

enum class InitKind { Uniform, Grid, Random };

struct InitSpec {
  InitKind kind = InitKind::Uniform;
  double lower = -3.0;  // interval (1d) or square box (2d)
  double upper = 3.0;
  bool allow_sampled_fallback = false;  // 2d grid with non-square M
};

struct BoundaryLayout {
  int count = 0;
  double radius = 0.0;     // <= 0 picks 5/alpha for Poschl-Teller wells, 5/sqrt(omega) otherwise
  double bandwidth = 0.0;  // <= 0 picks the chord between neighboring boundary worlds
};

struct StopRule {
  bool enabled = true;
  long window = 1000;
  double tolerance = 1e-6;
};

struct SolverConfig {
  Potential potential = Potential::harmonic(1.0);
  Mode mode = Mode::Kernel1d;
  int worlds = 20;
  double dt = 4.9e-5;
  long outer_iterations = 100000;
  Scheme scheme = Scheme::Quench;
  std::vector<double> nodes;  // excited-state node positions (1d)
  InitSpec init;
  kde::BandwidthSettings bandwidth;
  bool warm_start = false;
  BoundaryLayout boundary;
  StopRule stop;
  long trace_every = 1;
  long snapshot_every = 0;  // 0 writes only the initial and final snapshots
  std::uint64_t seed = 1;
  int threads = 0;  // 0 reads MIW_THREADS, falling back to all cores

  int dimension() const { return potential.dimension(); }
  /// Index of the targeted eigenvalue: the number of enforced nodes.
  int target_level() const { return mode == Mode::Kernel1dExcited ? static_cast<int>(nodes.size()) : 0; }
};

inline void validate(const SolverConfig& c) {
  const int d = c.dimension();
  if (!(c.dt > 0.0) || !std::isfinite(c.dt)) throw InvalidArgument("dt must be positive");
  if (c.outer_iterations < 1) throw InvalidArgument("outer_iterations must be >= 1");
  if (c.worlds < 1) throw InvalidArgument("worlds must be >= 1");
  if (c.trace_every < 1) throw InvalidArgument("trace_every must be >= 1");
  if (c.snapshot_every < 0) throw InvalidArgument("snapshot_every must be >= 0");
  if (!(c.init.upper > c.init.lower)) throw InvalidArgument("init interval needs upper > lower");
  if (c.stop.window < 1) throw InvalidArgument("stop window must be >= 1");
  if (c.boundary.count < 0) throw InvalidArgument("boundary count must be >= 0");
  if (c.bandwidth.max_sweeps < 0) throw InvalidArgument("bandwidth max_sweeps must be >= 0");
  if (!(c.bandwidth.tolerance > 0.0)) throw InvalidArgument("bandwidth tolerance must be positive");
  switch (c.mode) {
    case Mode::Kernel1d:
    case Mode::Miw1d:
      if (d != 1) throw InvalidArgument("mode requires a one-dimensional potential");
      if (c.mode == Mode::Kernel1d && c.worlds < 2) throw InvalidArgument("kernel1d needs at least two worlds");
      break;
    case Mode::Kernel1dExcited:
      if (d != 1) throw InvalidArgument("mode requires a one-dimensional potential");
      if (c.nodes.empty()) throw InvalidArgument("nodes must list at least one node position");
      if (c.worlds < 2) throw InvalidArgument("kernel1d_excited needs at least two worlds");
      break;
    case Mode::KernelVoronoi2d:
      if (d != 2) throw InvalidArgument("kernel_voronoi_2d requires a two-dimensional potential");
      if (c.worlds + c.boundary.count < 3) throw InvalidArgument("kernel_voronoi_2d needs at least three worlds");
      break;
  }
  if (c.mode != Mode::KernelVoronoi2d && c.boundary.count > 0)
    throw InvalidArgument("boundary worlds are supported in kernel_voronoi_2d only");
  if (c.mode != Mode::Kernel1dExcited && !c.nodes.empty())
    throw InvalidArgument("nodes are only used in kernel1d_excited mode");
}

template <std::size_t D>
struct WorldEnsemble {
  std::vector<Point<D>> mobile;
  std::vector<Point<D>> velocities;
  std::vector<Point<D>> boundary;  // fixed
};

/// Per-world energies; boundary worlds are never included.
struct Energies {
  double kinetic = 0.0;
  double classical = 0.0;
  double quantum = 0.0;
  double fisher = 0.0;  // (1/M) sum |grad P / P|^2 / 8, or the 1d discrete sum in miw1d mode
  double total() const { return kinetic + classical + quantum; }
};

struct TraceRecord {
  long iteration = 0;
  double time = 0.0;
  Energies energy;
  double rel_err = 0.0;
  double max_force = 0.0;  // max_i |grad(V + U)(Q_i)|
  double bandwidth_residual = 0.0;
};

template <std::size_t D>
struct Snapshot {
  long iteration = 0;
  std::vector<Point<D>> mobile;
  std::vector<Point<D>> boundary;
  std::vector<double> bandwidths;  // per mobile world when kernels sit at worlds, else empty
  std::vector<double> cell_volumes;  // mobile then boundary worlds, -1 for unbounded cells
  std::vector<char> bounded;
};

template <std::size_t D>
struct RunReport {
  std::vector<TraceRecord> trace;
  WorldEnsemble<D> final_ensemble;
  std::vector<double> final_bandwidths;
  std::vector<Point<D>> final_centers;
  std::vector<double> oracle;  // exact energies up to level target + 1
  double exact = 0.0;
  double next = 0.0;
  double rel_err = 0.0;  // signed, at the final record
  double wall_seconds = 0.0;
  long iterations_done = 0;
  std::string termination;  // "completed", "converged" or "error"
  std::string error;
  bool boundary_unchanged = true;
};

/// Sink for records and snapshots as they are produced; either callback may be empty.
template <std::size_t D>
struct Observer {
  std::function<void(const TraceRecord&)> on_record;
  std::function<void(const Snapshot<D>&)> on_snapshot;
};

// ---------------------------------------------------------------------------
// Threads

/// Requested thread count (all cores when <= 0), capped by MIW_THREADS when set.
inline int thread_budget(int requested) {
  int n = requested > 0 ? requested : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("MIW_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) n = std::min(n, cap);
  }
  return n;
}

/// Runs body(i) for i in [0, n) on up to `threads` threads with contiguous static chunks.
/// Each index writes only its own output, so results do not depend on the thread count.
template <class F>
void parallel_for(std::size_t n, int threads, F&& body) {
  constexpr std::size_t min_chunk = 16;
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)),
                                                    std::max<std::size_t>(1, n / min_chunk));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w * chunk; i < std::min(n, (w + 1) * chunk); ++i) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Initialization

inline double default_boundary_radius(const Potential& v) {
  const Potential& axis = v.kind() == PotentialKind::SeparableSum ? v.axes().front() : v;
  if (axis.kind() == PotentialKind::PoschlTeller) return 5.0 / axis.alpha();
  return 5.0 / std::sqrt(axis.omega());
}

template <std::size_t D>
WorldEnsemble<D> init_worlds(const SolverConfig& c) {
  if (c.dimension() != D) throw InvalidArgument("config dimension does not match the ensemble dimension");
  const auto m = static_cast<std::size_t>(c.worlds);
  const double lo = c.init.lower;
  const double hi = c.init.upper;
  WorldEnsemble<D> e;
  e.mobile.resize(m);
  e.velocities.assign(m, Point<D>{});
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> uni(lo, hi);
  auto sample = [&] {
    for (auto& p : e.mobile)
      for (std::size_t k = 0; k < D; ++k) p[k] = uni(rng);
    if constexpr (D == 1) std::sort(e.mobile.begin(), e.mobile.end());
  };

  if (c.init.kind == InitKind::Random) {
    sample();
  } else if constexpr (D == 1) {
    for (std::size_t i = 0; i < m; ++i)
      e.mobile[i] = {m == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(m - 1)};
  } else {
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(m))));
    if (side * side != m) {
      if (!c.init.allow_sampled_fallback)
        throw InvalidArgument("grid init needs a square world count, got " + std::to_string(m));
      sample();
    } else {
      const double step = side == 1 ? 0.0 : (hi - lo) / static_cast<double>(side - 1);
      const double origin = side == 1 ? 0.5 * (lo + hi) : lo;
      for (std::size_t r = 0; r < side; ++r)
        for (std::size_t col = 0; col < side; ++col)
          e.mobile[r * side + col] = {origin + step * static_cast<double>(col), origin + step * static_cast<double>(r)};
    }
  }

  if constexpr (D == 2) {
    const int b = c.boundary.count;
    const double radius = c.boundary.radius > 0.0 ? c.boundary.radius : default_boundary_radius(c.potential);
    for (int j = 0; j < b; ++j) {
      const double phi = 2.0 * std::numbers::pi * j / b;
      e.boundary.push_back({radius * std::cos(phi), radius * std::sin(phi)});
    }
  }
  return e;
}

template <std::size_t D>
double expectation(const WorldEnsemble<D>& e, const std::function<double(const Point<D>&)>& f) {
  if (e.mobile.empty()) throw InvalidArgument("expectation over an empty ensemble");
  double s = 0.0;
  for (const auto& q : e.mobile) s += f(q);
  return s / static_cast<double>(e.mobile.size());
}

// ---------------------------------------------------------------------------
// Forces and energies for a frozen estimate

/// The quantum model seen by one outer step: a kernel estimate, or the discrete 1d potential.
template <std::size_t D>
struct Model {
  std::optional<kde::KernelEstimate<D>> estimate;
  double bandwidth_residual = 0.0;
  std::vector<double> cell_volumes;
  std::vector<char> bounded;
};

namespace detail {

inline std::vector<double> coordinates(const std::vector<Point<1>>& pts) {
  std::vector<double> x(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) x[i] = pts[i][0];
  return x;
}

inline void require_sorted(const std::vector<Point<1>>& pts) {
  for (std::size_t i = 0; i + 1 < pts.size(); ++i)
    if (!(pts[i][0] < pts[i + 1][0]))
      throw WorldCrossing("world crossing between " + std::to_string(i) + " and " + std::to_string(i + 1) +
                          " - reduce dt");
}

inline double boundary_chord(const std::vector<Point<2>>& boundary) {
  if (boundary.size() < 2) return 1.0;
  return distance<2>(boundary[0], boundary[1]);
}

}  // namespace detail

template <std::size_t D>
Model<D> build_model(const WorldEnsemble<D>& e, const SolverConfig& c, const std::vector<double>& warm) {
  Model<D> model;
  if (c.mode == Mode::Miw1d) return model;
  if constexpr (D == 1) {
    const auto x = detail::coordinates(e.mobile);
    std::vector<char> flags;
    if (c.mode == Mode::Kernel1dExcited) flags = kde::node_flags(x, c.nodes);
    auto built = kde::build_estimate_1d(x, flags, c.bandwidth, c.warm_start ? std::span<const double>(warm)
                                                                             : std::span<const double>());
    model.bandwidth_residual = built.solution.residual;
    model.estimate = std::move(built.solution.estimate);
  } else {
    std::vector<Point<D>> all = e.mobile;
    all.insert(all.end(), e.boundary.begin(), e.boundary.end());
    const auto diagram = geometry::voronoi(std::span<const Point<D>>(all));
    const double bw = c.boundary.bandwidth > 0.0 ? c.boundary.bandwidth : detail::boundary_chord(e.boundary);
    const std::vector<double> boundary_bw(e.boundary.size(), bw);
    auto built = kde::build_estimate_voronoi<D>(e.mobile, e.boundary, diagram, boundary_bw, c.bandwidth,
                                                c.warm_start ? std::span<const double>(warm)
                                                             : std::span<const double>());
    model.bandwidth_residual = built.solution.residual;
    model.estimate = std::move(built.solution.estimate);
    for (std::size_t i = 0; i < all.size(); ++i) {
      model.cell_volumes.push_back(diagram.cells[i].bounded ? diagram.cells[i].volume : -1.0);
      model.bounded.push_back(diagram.cells[i].bounded ? 1 : 0);
    }
  }
  return model;
}

/// Accelerations -grad(V + U) at `positions` under the frozen model.
template <std::size_t D>
std::vector<Point<D>> forces(const std::vector<Point<D>>& positions, const Model<D>& model, const Potential& v,
                             int threads) {
  std::vector<Point<D>> f(positions.size());
  if (!model.estimate) {
    if constexpr (D == 1) {
      const auto x = detail::coordinates(positions);
      const auto a = miw1d::forces(x, v);
      for (std::size_t i = 0; i < x.size(); ++i) f[i] = {a[i]};
      return f;
    } else {
      throw InvalidArgument("discrete model is one-dimensional");
    }
  }
  const auto& est = *model.estimate;
  parallel_for(positions.size(), threads, [&](std::size_t i) {
    const auto q = kde::quantum_terms(est, positions[i]);
    const auto g = v.gradient(positions[i]);
    for (std::size_t k = 0; k < D; ++k) f[i][k] = q.force[k] - g[k];
  });
  return f;
}

/// Per-world kinetic, classical and quantum energies of the mobile worlds.
template <std::size_t D>
Energies total_energy(const WorldEnsemble<D>& e, const Model<D>& model, const Potential& v, int threads = 1) {
  const auto m = static_cast<double>(e.mobile.size());
  Energies out;
  for (std::size_t i = 0; i < e.mobile.size(); ++i) {
    out.kinetic += 0.5 * norm2<D>(e.velocities[i]);
    out.classical += v.value(e.mobile[i]);
  }
  if (!model.estimate) {
    if constexpr (D == 1) {
      out.quantum = miw1d::interworld_potential(detail::coordinates(e.mobile));
      out.fisher = out.quantum;
    }
  } else {
    std::vector<double> u(e.mobile.size());
    std::vector<double> fi(e.mobile.size());
    parallel_for(e.mobile.size(), threads, [&](std::size_t i) {
      const auto q = kde::quantum_terms(*model.estimate, e.mobile[i]);
      u[i] = q.potential;
      fi[i] = q.fisher;
    });
    for (std::size_t i = 0; i < u.size(); ++i) {
      out.quantum += u[i];
      out.fisher += fi[i];
    }
  }
  out.kinetic /= m;
  out.classical /= m;
  out.quantum /= m;
  out.fisher /= m;
  return out;
}

// ---------------------------------------------------------------------------
// Outer iteration

/// State carried between outer steps.
template <std::size_t D>
struct Stepper {
  SolverConfig config;
  WorldEnsemble<D> ensemble;
  Model<D> model;
  std::vector<Point<D>> force;  // at the current positions under the current model
  std::vector<double> warm;
  int threads = 1;

  Stepper(SolverConfig c, WorldEnsemble<D> e) : config(std::move(c)), ensemble(std::move(e)) {
    validate(config);
    threads = thread_budget(config.threads);
    if constexpr (D == 1) detail::require_sorted(ensemble.mobile);
    refresh();
  }

  /// Rebuilds the estimate (or discrete model) for the current positions and evaluates forces.
  void refresh() {
    model = build_model(ensemble, config, warm);
    if (model.estimate) {
      const auto& h = model.estimate->bandwidths;
      warm.assign(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(
                                             std::min(h.size(), config.mode == Mode::KernelVoronoi2d
                                                                    ? ensemble.mobile.size()
                                                                    : h.size())));
    }
    force = forces(ensemble.mobile, model, config.potential, threads);
  }

  Energies energies() const { return total_energy(ensemble, model, config.potential, threads); }

  double max_force() const {
    double mx = 0.0;
    for (const auto& f : force) mx = std::max(mx, norm<D>(f));
    return mx;
  }

  /// One dissipation decision, one velocity-Verlet step under the frozen model, then a rebuild.
  void step() {
    auto& q = ensemble.mobile;
    auto& v = ensemble.velocities;
    const double dt = config.dt;
    if (config.scheme == Scheme::Reset) {
      for (auto& vi : v) vi = Point<D>{};
    } else {
      double power = 0.0;
      for (std::size_t i = 0; i < q.size(); ++i) power += dot<D>(v[i], force[i]);
      if (power < 0.0)
        for (auto& vi : v) vi = Point<D>{};
    }
    for (std::size_t i = 0; i < q.size(); ++i)
      for (std::size_t k = 0; k < D; ++k) q[i][k] += dt * v[i][k] + 0.5 * dt * dt * force[i][k];
    if constexpr (D == 1) detail::require_sorted(q);
    const auto next = forces(q, model, config.potential, threads);
    for (std::size_t i = 0; i < q.size(); ++i)
      for (std::size_t k = 0; k < D; ++k) v[i][k] += 0.5 * dt * (force[i][k] + next[i][k]);
    for (std::size_t i = 0; i < q.size(); ++i)
      for (std::size_t k = 0; k < D; ++k)
        if (!std::isfinite(q[i][k]) || !std::isfinite(v[i][k]))
          throw Error("world " + std::to_string(i) + " left the finite range");
    refresh();
  }

  Snapshot<D> snapshot(long iteration) const {
    Snapshot<D> s;
    s.iteration = iteration;
    s.mobile = ensemble.mobile;
    s.boundary = ensemble.boundary;
    if (model.estimate && config.mode == Mode::KernelVoronoi2d)
      s.bandwidths.assign(model.estimate->bandwidths.begin(),
                          model.estimate->bandwidths.begin() + static_cast<std::ptrdiff_t>(ensemble.mobile.size()));
    if constexpr (D == 1) {
      const auto diagram = geometry::voronoi(std::span<const Point<1>>(ensemble.mobile));
      for (const auto& cell : diagram.cells) {
        s.cell_volumes.push_back(cell.bounded ? cell.volume : -1.0);
        s.bounded.push_back(cell.bounded ? 1 : 0);
      }
    } else {
      s.cell_volumes = model.cell_volumes;
      s.bounded = model.bounded;
    }
    return s;
  }
};

/// Convenience wrapper: one outer step from `e`, returning the advanced ensemble.
template <std::size_t D>
WorldEnsemble<D> outer_step(const WorldEnsemble<D>& e, const SolverConfig& c) {
  Stepper<D> s(c, e);
  s.step();
  return s.ensemble;
}

/// Signed (E - E_exact) / (E_next - E_exact).
inline double relative_error(double e, double exact, double next) { return (e - exact) / (next - exact); }

template <std::size_t D>
RunReport<D> run(const SolverConfig& config, const Observer<D>& observer = {}) {
  validate(config);
  const auto t0 = std::chrono::steady_clock::now();
  RunReport<D> report;
  const int level = config.target_level();
  report.oracle = oracle::exact_energies(config.potential, level + 2);
  report.exact = report.oracle[static_cast<std::size_t>(level)];
  report.next = report.oracle[static_cast<std::size_t>(level) + 1];

  auto ensemble = init_worlds<D>(config);
  const auto boundary0 = ensemble.boundary;
  std::optional<Stepper<D>> stepper;

  auto record = [&](long it) {
    TraceRecord r;
    r.iteration = it;
    r.time = static_cast<double>(it) * config.dt;
    r.energy = stepper->energies();
    r.rel_err = relative_error(r.energy.total(), report.exact, report.next);
    r.max_force = stepper->max_force();
    r.bandwidth_residual = stepper->model.bandwidth_residual;
    report.trace.push_back(r);
    if (observer.on_record) observer.on_record(r);
  };
  auto snap = [&](long it) {
    if (observer.on_snapshot) observer.on_snapshot(stepper->snapshot(it));
  };

  long it = 0;
  try {
    stepper.emplace(config, std::move(ensemble));
    snap(0);
    // Windowed means of the per-step total energy for the stop rule.
    double window_sum = 0.0;
    std::optional<double> previous_window;
    for (; it < config.outer_iterations; ++it) {
      const bool on_cadence = it % config.trace_every == 0;
      if (on_cadence) record(it);
      if (config.stop.enabled) {
        window_sum += on_cadence ? report.trace.back().energy.total() : stepper->energies().total();
        if ((it + 1) % config.stop.window == 0) {
          const double mean = window_sum / static_cast<double>(config.stop.window);
          window_sum = 0.0;
          if (previous_window &&
              std::abs(mean - *previous_window) <= config.stop.tolerance * std::max(std::abs(mean), 1e-300)) {
            previous_window = mean;
            stepper->step();
            ++it;
            report.termination = "converged";
            break;
          }
          previous_window = mean;
        }
      }
      stepper->step();
      if (config.snapshot_every > 0 && (it + 1) % config.snapshot_every == 0 && it + 1 < config.outer_iterations)
        snap(it + 1);
    }
    if (report.termination.empty()) report.termination = "completed";
    record(it);
    snap(it);
  } catch (const std::exception& ex) {
    report.termination = "error";
    report.error = "iteration " + std::to_string(it) + ": " + ex.what();
  }

  report.iterations_done = it;
  if (stepper) {
    report.final_ensemble = stepper->ensemble;
    if (stepper->model.estimate) {
      report.final_bandwidths = stepper->model.estimate->bandwidths;
      report.final_centers = stepper->model.estimate->centers;
    }
    report.boundary_unchanged = stepper->ensemble.boundary == boundary0;
  }
  if (!report.trace.empty()) report.rel_err = report.trace.back().rel_err;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace miw::solver
