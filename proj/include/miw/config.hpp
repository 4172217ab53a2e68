#pragma once

// JSON run configurations and reports.

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "miw/potentials.hpp"
#include "miw/solver.hpp"

namespace miw::config {

using nlohmann::json;

/// A configuration problem, tagged with the offending field path.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct RunConfig {
  solver::SolverConfig solver;
  std::string output_dir = "out";
  json echo;
};

namespace detail {

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

inline void only_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError(join(path, it.key()), "unknown key");
}

inline const json& need(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) throw ConfigError(join(path, key), "missing required key");
  return j.at(key);
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) throw ConfigError(path, "expected a finite number");
  return x;
}

inline long integer(const json& j, const std::string& path) {
  if (j.is_number_integer()) return j.get<long>();
  if (j.is_number_float()) {
    const double x = j.get<double>();
    if (std::isfinite(x) && x == std::floor(x) && std::abs(x) < 9e15) return static_cast<long>(x);
  }
  throw ConfigError(path, "expected an integer");
}

inline bool boolean(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw ConfigError(path, "expected true or false");
  return j.get<bool>();
}

inline std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  return j.get<std::string>();
}

template <class T>
void optional(const json& j, const std::string& path, const char* key, T& out) {
  if (!j.contains(key)) return;
  const auto p = join(path, key);
  if constexpr (std::is_same_v<T, bool>)
    out = boolean(j.at(key), p);
  else if constexpr (std::is_floating_point_v<T>)
    out = number(j.at(key), p);
  else if constexpr (std::is_integral_v<T>)
    out = static_cast<T>(integer(j.at(key), p));
  else
    out = text(j.at(key), p);
}

}  // namespace detail

/// {"kind": "harmonic", "omega", "dimension"} | {"kind": "poschl_teller", "alpha", "lambda"}
/// | {"kind": "separable", "axes": [...]}
inline Potential parse_potential(const json& j, const std::string& path = "potential") {
  using namespace detail;
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  const auto kind = text(need(j, path, "kind"), join(path, "kind"));
  try {
    if (kind == "harmonic") {
      only_keys(j, path, {"kind", "omega", "dimension"});
      double omega = 1.0;
      int dim = 1;
      optional(j, path, "omega", omega);
      optional(j, path, "dimension", dim);
      if (!(omega > 0.0)) throw ConfigError(join(path, "omega"), "must be positive");
      if (dim < 1 || dim > 2) throw ConfigError(join(path, "dimension"), "must be 1 or 2");
      return Potential::harmonic(omega, dim);
    }
    if (kind == "poschl_teller") {
      only_keys(j, path, {"kind", "alpha", "lambda"});
      double alpha = 1.0;
      optional(j, path, "alpha", alpha);
      const long lambda = integer(need(j, path, "lambda"), join(path, "lambda"));
      if (!(alpha > 0.0)) throw ConfigError(join(path, "alpha"), "must be positive");
      if (lambda < 1) throw ConfigError(join(path, "lambda"), "must be a positive integer");
      return Potential::poschl_teller(alpha, static_cast<int>(lambda));
    }
    if (kind == "separable") {
      only_keys(j, path, {"kind", "axes"});
      const auto& axes = need(j, path, "axes");
      const auto apath = join(path, "axes");
      if (!axes.is_array() || axes.empty()) throw ConfigError(apath, "expected a non-empty array");
      if (axes.size() > 2) throw ConfigError(apath, "at most two axes are supported");
      std::vector<Potential> parts;
      for (std::size_t i = 0; i < axes.size(); ++i) {
        auto p = parse_potential(axes[i], apath + "[" + std::to_string(i) + "]");
        if (p.dimension() != 1) throw ConfigError(apath + "[" + std::to_string(i) + "]", "axes must be one-dimensional");
        parts.push_back(std::move(p));
      }
      return Potential::separable(std::move(parts));
    }
  } catch (const InvalidArgument& e) {
    throw ConfigError(path, e.what());
  }
  throw ConfigError(join(path, "kind"), "unsupported potential kind '" + kind + "'");
}

inline json potential_to_json(const Potential& v) {
  switch (v.kind()) {
    case PotentialKind::Harmonic:
      return {{"kind", "harmonic"}, {"omega", v.omega()}, {"dimension", v.dimension()}};
    case PotentialKind::PoschlTeller:
      return {{"kind", "poschl_teller"}, {"alpha", v.alpha()}, {"lambda", v.lambda()}};
    case PotentialKind::SeparableSum: {
      json axes = json::array();
      for (const auto& a : v.axes()) axes.push_back(potential_to_json(a));
      return {{"kind", "separable"}, {"axes", axes}};
    }
  }
  return {};
}

inline solver::Mode parse_mode(const std::string& s) {
  if (s == "kernel1d") return solver::Mode::Kernel1d;
  if (s == "kernel1d_excited") return solver::Mode::Kernel1dExcited;
  if (s == "kernel_voronoi_2d") return solver::Mode::KernelVoronoi2d;
  if (s == "miw1d") return solver::Mode::Miw1d;
  throw ConfigError("mode", "unknown mode '" + s + "'");
}

inline std::string mode_name(solver::Mode m) {
  switch (m) {
    case solver::Mode::Kernel1d:
      return "kernel1d";
    case solver::Mode::Kernel1dExcited:
      return "kernel1d_excited";
    case solver::Mode::KernelVoronoi2d:
      return "kernel_voronoi_2d";
    case solver::Mode::Miw1d:
      return "miw1d";
  }
  return "";
}

/// Validates and converts a configuration document. Unknown keys are rejected.
inline RunConfig parse_run_config(const json& j) {
  using namespace detail;
  only_keys(j, "", {"mode", "potential", "worlds", "dt", "outer_iterations", "scheme", "nodes", "init", "bandwidth",
                    "boundary", "stop", "trace_every", "snapshot_every", "seed", "threads", "output_dir"});
  RunConfig rc;
  rc.echo = j;
  auto& c = rc.solver;
  c.mode = parse_mode(text(need(j, "", "mode"), "mode"));
  c.potential = parse_potential(need(j, "", "potential"));
  c.dt = number(need(j, "", "dt"), "dt");
  if (!(c.dt > 0.0)) throw ConfigError("dt", "must be positive");
  c.worlds = static_cast<int>(integer(need(j, "", "worlds"), "worlds"));
  if (c.worlds < 1) throw ConfigError("worlds", "must be >= 1");
  c.outer_iterations = integer(need(j, "", "outer_iterations"), "outer_iterations");
  if (c.outer_iterations < 1) throw ConfigError("outer_iterations", "must be >= 1");

  std::string scheme = "quench";
  optional(j, "", "scheme", scheme);
  if (scheme == "quench")
    c.scheme = solver::Scheme::Quench;
  else if (scheme == "reset")
    c.scheme = solver::Scheme::Reset;
  else
    throw ConfigError("scheme", "expected \"quench\" or \"reset\"");

  if (j.contains("nodes")) {
    const auto& n = j.at("nodes");
    if (!n.is_array()) throw ConfigError("nodes", "expected an array of positions");
    for (std::size_t i = 0; i < n.size(); ++i) c.nodes.push_back(number(n[i], "nodes[" + std::to_string(i) + "]"));
  }
  if (c.mode == solver::Mode::Kernel1dExcited && c.nodes.empty())
    throw ConfigError("nodes", "kernel1d_excited needs at least one node");
  if (c.mode != solver::Mode::Kernel1dExcited && !c.nodes.empty())
    throw ConfigError("nodes", "only used in kernel1d_excited mode");

  c.init.kind = c.dimension() == 2 ? solver::InitKind::Grid : solver::InitKind::Uniform;
  if (j.contains("init")) {
    const auto& in = j.at("init");
    only_keys(in, "init", {"kind", "lower", "upper", "allow_sampled_fallback"});
    if (in.contains("kind")) {
      const auto k = text(in.at("kind"), "init.kind");
      if (k == "uniform")
        c.init.kind = solver::InitKind::Uniform;
      else if (k == "grid")
        c.init.kind = solver::InitKind::Grid;
      else if (k == "random")
        c.init.kind = solver::InitKind::Random;
      else
        throw ConfigError("init.kind", "expected \"uniform\", \"grid\" or \"random\"");
    }
    optional(in, "init", "lower", c.init.lower);
    optional(in, "init", "upper", c.init.upper);
    optional(in, "init", "allow_sampled_fallback", c.init.allow_sampled_fallback);
    if (!(c.init.upper > c.init.lower)) throw ConfigError("init.upper", "must exceed init.lower");
  }

  if (j.contains("bandwidth")) {
    const auto& b = j.at("bandwidth");
    only_keys(b, "bandwidth", {"tolerance", "max_sweeps", "floor_fraction", "max_bandwidth_factor",
                               "density_floor_fraction", "warm_start"});
    optional(b, "bandwidth", "tolerance", c.bandwidth.tolerance);
    optional(b, "bandwidth", "max_sweeps", c.bandwidth.max_sweeps);
    optional(b, "bandwidth", "floor_fraction", c.bandwidth.floor_fraction);
    optional(b, "bandwidth", "max_bandwidth_factor", c.bandwidth.max_bandwidth_factor);
    optional(b, "bandwidth", "density_floor_fraction", c.bandwidth.density_floor_fraction);
    optional(b, "bandwidth", "warm_start", c.warm_start);
    if (!(c.bandwidth.tolerance > 0.0)) throw ConfigError("bandwidth.tolerance", "must be positive");
    if (c.bandwidth.max_sweeps < 0) throw ConfigError("bandwidth.max_sweeps", "must be >= 0");
    if (c.bandwidth.floor_fraction < 0.0) throw ConfigError("bandwidth.floor_fraction", "must be >= 0");
    if (c.bandwidth.density_floor_fraction < 0.0)
      throw ConfigError("bandwidth.density_floor_fraction", "must be >= 0");
  }

  if (j.contains("boundary")) {
    const auto& b = j.at("boundary");
    only_keys(b, "boundary", {"count", "radius", "bandwidth"});
    optional(b, "boundary", "count", c.boundary.count);
    optional(b, "boundary", "radius", c.boundary.radius);
    optional(b, "boundary", "bandwidth", c.boundary.bandwidth);
    if (c.boundary.count < 0) throw ConfigError("boundary.count", "must be >= 0");
    if (c.boundary.count > 0 && c.mode != solver::Mode::KernelVoronoi2d)
      throw ConfigError("boundary.count", "boundary worlds need kernel_voronoi_2d mode");
  }

  if (j.contains("stop")) {
    const auto& s = j.at("stop");
    only_keys(s, "stop", {"enabled", "window", "tolerance"});
    optional(s, "stop", "enabled", c.stop.enabled);
    optional(s, "stop", "window", c.stop.window);
    optional(s, "stop", "tolerance", c.stop.tolerance);
    if (c.stop.window < 1) throw ConfigError("stop.window", "must be >= 1");
    if (c.stop.tolerance < 0.0) throw ConfigError("stop.tolerance", "must be >= 0");
  }

  optional(j, "", "trace_every", c.trace_every);
  if (c.trace_every < 1) throw ConfigError("trace_every", "must be >= 1");
  optional(j, "", "snapshot_every", c.snapshot_every);
  if (c.snapshot_every < 0) throw ConfigError("snapshot_every", "must be >= 0");
  if (j.contains("seed")) {
    const long s = integer(j.at("seed"), "seed");
    if (s < 0) throw ConfigError("seed", "must be >= 0");
    c.seed = static_cast<std::uint64_t>(s);
  }
  optional(j, "", "threads", c.threads);
  if (c.threads < 0) throw ConfigError("threads", "must be >= 0");
  optional(j, "", "output_dir", rc.output_dir);

  try {
    solver::validate(c);
  } catch (const InvalidArgument& e) {
    throw ConfigError("", e.what());
  }
  return rc;
}

/// Reads a configuration file; parse errors carry the line and column.
inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i < std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size()); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("", path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": invalid JSON");
  }
  return parse_run_config(j);
}

/// Mean total energy over the last `window` trace records.
inline double tail_mean(const std::vector<solver::TraceRecord>& trace, std::size_t window) {
  if (trace.empty()) return std::nan("");
  const std::size_t n = std::min(window, trace.size());
  double s = 0.0;
  for (std::size_t i = trace.size() - n; i < trace.size(); ++i) s += trace[i].energy.total();
  return s / static_cast<double>(n);
}

inline json energies_to_json(const solver::Energies& e) {
  return {{"kinetic", e.kinetic}, {"classical", e.classical}, {"quantum", e.quantum}, {"fisher", e.fisher},
          {"total", e.total()}};
}

template <std::size_t D>
json report_to_json(const RunConfig& rc, const solver::RunReport<D>& r, std::size_t tail_window = 1000) {
  const auto& c = rc.solver;
  json j;
  j["config"] = rc.echo;
  j["mode"] = mode_name(c.mode);
  j["units"] = c.potential.units();
  j["termination"] = r.termination;
  j["error"] = r.error.empty() ? json(nullptr) : json(r.error);
  j["iterations"] = r.iterations_done;
  j["wall_clock_seconds"] = r.wall_seconds;
  j["oracle"] = {{"energies", r.oracle},
                 {"level", c.target_level()},
                 {"exact", r.exact},
                 {"next", r.next},
                 {"units", c.potential.units()}};
  if (r.trace.empty()) {
    j["final"] = nullptr;
    j["tail"] = nullptr;
    j["rel_err"] = nullptr;
  } else {
    auto fin = energies_to_json(r.trace.back().energy);
    fin["iteration"] = r.trace.back().iteration;
    fin["units"] = c.potential.units();
    j["final"] = fin;
    const double mean = tail_mean(r.trace, tail_window);
    j["tail"] = {{"records", std::min(tail_window, r.trace.size())},
                 {"mean_total", mean},
                 {"rel_err", solver::relative_error(mean, r.exact, r.next)},
                 {"units", c.potential.units()}};
    j["rel_err"] = r.rel_err;
  }
  j["boundary_unchanged"] = r.boundary_unchanged;
  j["final_bandwidths"] = r.final_bandwidths;
  return j;
}

}  // namespace miw::config
