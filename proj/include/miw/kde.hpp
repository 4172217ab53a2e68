#pragma once

// Gaussian kernel density estimates with per-kernel (possibly signed) bandwidths,
// their analytic derivatives up to third order, and the quantum potential/force
// derived from them.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "miw/geometry.hpp"
#include "miw/types.hpp"

namespace miw::kde {

/// Peak value K(0) of the normalized Gaussian kernel in D dimensions.
template <std::size_t D>
constexpr double kernel_peak() {
  if constexpr (D == 1)
    return std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  else
    return 1.0 / (2.0 * std::numbers::pi);
}

/// Gaussian mixture sum_i w_i sign(h_i) |h_i|^{-D} K((X - c_i) / |h_i|).
template <std::size_t D>
struct KernelEstimate {
  std::vector<Point<D>> centers;
  std::vector<double> bandwidths;
  std::vector<double> weights;
  /// Quantum potential/force evaluations with |P| below this are rejected.
  double density_floor = 0.0;

  std::size_t size() const { return centers.size(); }
};

template <std::size_t D>
struct Derivatives {
  double value = 0.0;
  Point<D> gradient{};
  std::array<double, D * D> hessian{};
  double laplacian = 0.0;
  Point<D> laplacian_gradient{};  // gradient of the Laplacian
};

template <std::size_t D>
void require_valid(const KernelEstimate<D>& est) {
  if (est.bandwidths.size() != est.centers.size() || est.weights.size() != est.centers.size())
    throw InvalidArgument("kernel estimate arrays have inconsistent lengths");
  for (std::size_t i = 0; i < est.bandwidths.size(); ++i)
    if (est.bandwidths[i] == 0.0 || !std::isfinite(est.bandwidths[i]))
      throw InvalidArgument("kernel " + std::to_string(i) + " has invalid bandwidth " +
                            std::to_string(est.bandwidths[i]));
}

namespace detail {

template <std::size_t D>
double kernel_value(const KernelEstimate<D>& est, std::size_t i, const Point<D>& x, double& r2_over_h2) {
  const double h = est.bandwidths[i];
  const double a = std::abs(h);
  const double r2 = norm2<D>(x - est.centers[i]);
  r2_over_h2 = r2 / (a * a);
  double scale = est.weights[i] * kernel_peak<D>() / a;
  if constexpr (D == 2) scale /= a;
  return (h < 0.0 ? -scale : scale) * std::exp(-0.5 * r2_over_h2);
}

}  // namespace detail

template <std::size_t D>
double evaluate(const KernelEstimate<D>& est, const Point<D>& x) {
  require_valid(est);
  double p = 0.0;
  double z2 = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) p += detail::kernel_value(est, i, x, z2);
  return p;
}

template <std::size_t D>
Derivatives<D> derivatives(const KernelEstimate<D>& est, const Point<D>& x) {
  require_valid(est);
  Derivatives<D> d;
  for (std::size_t i = 0; i < est.size(); ++i) {
    double z2 = 0.0;
    const double g = detail::kernel_value(est, i, x, z2);
    if (g == 0.0) continue;
    const double a2 = est.bandwidths[i] * est.bandwidths[i];
    const Point<D> r = x - est.centers[i];
    const double lap_factor = (z2 - D) / a2;  // Laplacian of the kernel over the kernel
    d.value += g;
    for (std::size_t k = 0; k < D; ++k) {
      d.gradient[k] -= g * r[k] / a2;
      d.laplacian_gradient[k] += g * r[k] / a2 * (2.0 / a2 - lap_factor);
      for (std::size_t l = 0; l < D; ++l) d.hessian[k * D + l] += g * (r[k] * r[l] / (a2 * a2) - (k == l ? 1.0 / a2 : 0.0));
    }
    d.laplacian += g * lap_factor;
  }
  return d;
}

/// Quantum potential U and quantum force -grad U at one point.
template <std::size_t D>
struct QuantumTerms {
  double density = 0.0;
  double potential = 0.0;
  double fisher = 0.0;  // |grad P / P|^2 / 8
  Point<D> force{};
};

template <std::size_t D>
QuantumTerms<D> quantum_terms(const KernelEstimate<D>& est, const Point<D>& x) {
  const auto d = derivatives(est, x);
  if (!std::isfinite(d.value) || d.value == 0.0 || std::abs(d.value) < est.density_floor)
    throw DensityUnderflow("density underflow at evaluation point " + to_string<D>(x) + " (P = " +
                           std::to_string(d.value) + ")");
  const double p = d.value;
  Point<D> a{};
  for (std::size_t k = 0; k < D; ++k) a[k] = d.gradient[k] / p;
  const double a2 = norm2<D>(a);
  const double b = d.laplacian / p;

  QuantumTerms<D> q;
  q.density = p;
  q.fisher = a2 / 8.0;
  q.potential = a2 / 8.0 - b / 4.0;
  for (std::size_t k = 0; k < D; ++k) {
    double ha = 0.0;
    for (std::size_t l = 0; l < D; ++l) ha += d.hessian[k * D + l] * a[l];
    const double grad_u = 0.25 * (ha / p - a2 * a[k]) - 0.25 * (d.laplacian_gradient[k] / p - b * a[k]);
    q.force[k] = -grad_u;
  }
  return q;
}

/// U = |grad P / P|^2 / 8 - (Laplacian P / P) / 4, equal to -Laplacian(sqrt P) / (2 sqrt P) for P > 0.
template <std::size_t D>
double quantum_potential(const KernelEstimate<D>& est, const Point<D>& x) {
  return quantum_terms(est, x).potential;
}

template <std::size_t D>
Point<D> quantum_force(const KernelEstimate<D>& est, const Point<D>& x) {
  return quantum_terms(est, x).force;
}

// ---------------------------------------------------------------------------
// Bandwidth constraints

/// Per-center a-priori density targets.
///
/// Inactive centers keep their bandwidth. Node centers (1d only) are driven towards a
/// target of zero with the signed-bandwidth update.
struct Constraints {
  std::vector<double> targets;
  std::vector<char> active;
  std::vector<char> node;
};

enum class BandwidthMode { Plain, Node };

struct BandwidthSettings {
  double tolerance = 1e-3;
  int max_sweeps = 50;
  /// Residual denominator floor, as a fraction of the largest active target.
  double floor_fraction = 1e-2;
  /// Upper bound on |h| as a multiple of the ensemble diameter; <= 0 disables the bound.
  double max_bandwidth_factor = 1.0;
  /// Densities below this fraction of the largest center density are treated as underflow.
  double density_floor_fraction = 1e-12;
};

template <std::size_t D>
struct BandwidthSolution {
  KernelEstimate<D> estimate;
  double residual = 0.0;
  int sweeps = 0;
  bool converged = false;
};

namespace detail {

template <std::size_t D>
double constraint_residual(const Constraints& c, std::span<const double> achieved, double floor) {
  double res = 0.0;
  for (std::size_t i = 0; i < achieved.size(); ++i)
    if (c.active[i]) res = std::max(res, std::abs(achieved[i] - c.targets[i]) / std::max(c.targets[i], floor));
  return res;
}

template <std::size_t D>
std::string iteration_dump(const KernelEstimate<D>& est, const Constraints& c, std::span<const double> achieved) {
  std::ostringstream os;
  os << "center,bandwidth,target,achieved\n";
  for (std::size_t i = 0; i < est.size(); ++i)
    os << to_string<D>(est.centers[i]) << ',' << est.bandwidths[i] << ',' << (c.active[i] ? c.targets[i] : 0.0)
       << ',' << achieved[i] << '\n';
  return os.str();
}

}  // namespace detail

/// Fixed-point bandwidth recursion.
///
/// Plain centers: h <- h P(c) / p. Node centers: h <- wK(0) / (p - P(c) + wK(0)/h), which
/// admits a zero target and drives h negative. Stops when the relative residual drops below
/// the tolerance or after max_sweeps updates.
template <std::size_t D>
BandwidthSolution<D> solve_bandwidths(KernelEstimate<D> est, const Constraints& c, BandwidthMode mode,
                                      const BandwidthSettings& settings = {}) {
  require_valid(est);
  const std::size_t n = est.size();
  if (c.targets.size() != n || c.active.size() != n || c.node.size() != n)
    throw InvalidArgument("constraint arrays do not match the number of kernels");
  bool any_node = false;
  double pmax = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!c.active[i]) continue;
    if (c.node[i]) {
      any_node = true;
    } else if (!(c.targets[i] > 0.0)) {
      throw InvalidArgument("plain constraint " + std::to_string(i) + " needs a positive target");
    }
    pmax = std::max(pmax, c.targets[i]);
  }
  if (any_node && mode != BandwidthMode::Node) throw InvalidArgument("node constraints require node mode");
  if (any_node && D != 1) throw InvalidArgument("node constraints are supported in 1d only");

  double reach = diameter<D>(est.centers);
  for (double h : est.bandwidths) reach = std::max(reach, std::abs(h));
  const double cap = settings.max_bandwidth_factor > 0.0 ? settings.max_bandwidth_factor * diameter<D>(est.centers)
                                                          : 0.0;
  const double floor = settings.floor_fraction * pmax;

  std::vector<double> achieved(n);
  auto measure = [&] {
    for (std::size_t i = 0; i < n; ++i) achieved[i] = evaluate(est, est.centers[i]);
  };

  BandwidthSolution<D> sol;
  measure();
  sol.residual = detail::constraint_residual<D>(c, achieved, floor);
  while (sol.residual > settings.tolerance && sol.sweeps < settings.max_sweeps) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!c.active[i]) continue;
      double& h = est.bandwidths[i];
      if (c.node[i]) {
        const double own = est.weights[i] * kernel_peak<D>();
        h = own / (c.targets[i] - achieved[i] + own / h);
      } else {
        h *= achieved[i] / c.targets[i];
      }
      if (cap > 0.0 && std::abs(h) > cap) h = std::copysign(cap, h);
      if (!std::isfinite(h) || h == 0.0 || std::abs(h) > 1e6 * reach) {
        throw BandwidthDivergence("bandwidth recursion diverged at kernel " + std::to_string(i) + " after " +
                                  std::to_string(sol.sweeps) + " sweeps\n" +
                                  detail::iteration_dump(est, c, achieved));
      }
    }
    ++sol.sweeps;
    measure();
    sol.residual = detail::constraint_residual<D>(c, achieved, floor);
  }
  sol.converged = sol.residual <= settings.tolerance;
  double peak = 0.0;
  for (double a : achieved) peak = std::max(peak, std::abs(a));
  est.density_floor = settings.density_floor_fraction * peak;
  sol.estimate = std::move(est);
  return sol;
}

template <std::size_t D>
struct BuiltEstimate {
  BandwidthSolution<D> solution;
  Constraints constraints;
};

/// Node flags for 1d gaps: flag k is set when a node position lies in (x_k, x_{k+1}].
inline std::vector<char> node_flags(std::span<const double> sorted_worlds, std::span<const double> nodes) {
  if (sorted_worlds.size() < 2) throw InvalidArgument("need at least two worlds to place nodes");
  std::vector<char> flags(sorted_worlds.size() - 1, 0);
  for (double x : nodes) {
    const auto it = std::lower_bound(sorted_worlds.begin(), sorted_worlds.end(), x);
    if (it == sorted_worlds.begin() || it == sorted_worlds.end())
      throw InvalidArgument("node at " + std::to_string(x) + " lies outside the world ensemble");
    flags[static_cast<std::size_t>(it - sorted_worlds.begin()) - 1] = 1;
  }
  return flags;
}

/// 1d estimate with kernels midway between consecutive worlds and targets
/// p_i = chi_i / ((M + 1)(x_{i+1} - x_i)). `node_gaps` marks gaps that must contain a node.
inline BuiltEstimate<1> build_estimate_1d(std::span<const double> worlds, std::span<const char> node_gaps = {},
                                          const BandwidthSettings& settings = {},
                                          std::span<const double> warm_start = {}) {
  const std::size_t m = worlds.size();
  if (m < 2) throw InvalidArgument("1d kernel estimate needs at least two worlds");
  for (std::size_t i = 0; i + 1 < m; ++i)
    if (!(worlds[i] < worlds[i + 1]))
      throw WorldCrossing("worlds " + std::to_string(i) + " and " + std::to_string(i + 1) +
                          " are not strictly ordered (" + std::to_string(worlds[i]) + " >= " +
                          std::to_string(worlds[i + 1]) + ")");
  if (!node_gaps.empty() && node_gaps.size() != m - 1) throw InvalidArgument("need one node flag per world gap");
  const bool use_warm = warm_start.size() == m - 1;

  KernelEstimate<1> est;
  Constraints c;
  const std::size_t k = m - 1;
  est.centers.resize(k);
  est.bandwidths.resize(k);
  est.weights.assign(k, 1.0 / static_cast<double>(k));
  c.targets.resize(k);
  c.active.assign(k, 1);
  c.node.assign(k, 0);
  bool any_node = false;
  for (std::size_t i = 0; i < k; ++i) {
    const double gap = worlds[i + 1] - worlds[i];
    est.centers[i] = {0.5 * (worlds[i] + worlds[i + 1])};
    est.bandwidths[i] = use_warm ? warm_start[i] : gap;
    const bool node = !node_gaps.empty() && node_gaps[i];
    c.node[i] = node;
    any_node = any_node || node;
    c.targets[i] = node ? 0.0 : 1.0 / ((static_cast<double>(m) + 1.0) * gap);
  }
  BuiltEstimate<1> built;
  built.solution = solve_bandwidths<1>(std::move(est), c, any_node ? BandwidthMode::Node : BandwidthMode::Plain,
                                       settings);
  built.constraints = std::move(c);
  return built;
}

/// Estimate with kernels at the worlds themselves and targets 1/(M |Cell_i|) for inner cells,
/// i.e. bounded cells lying inside the convex hull of all worlds. `diagram` must be built over
/// mobile worlds followed by boundary worlds. Outer mobile worlds and all boundary worlds are
/// unconstrained: mobile ones take the nearest facet-neighbor distance, boundary ones take
/// `boundary_bandwidths`.
template <std::size_t D>
BuiltEstimate<D> build_estimate_voronoi(std::span<const Point<D>> mobile, std::span<const Point<D>> boundary,
                                        const geometry::VoronoiDiagram<D>& diagram,
                                        std::span<const double> boundary_bandwidths,
                                        const BandwidthSettings& settings = {},
                                        std::span<const double> warm_start = {}) {
  const std::size_t m = mobile.size();
  const std::size_t b = boundary.size();
  const std::size_t n = m + b;
  if (diagram.cells.size() != n) throw InvalidArgument("Voronoi diagram does not match the world ensemble");
  if (boundary_bandwidths.size() != b) throw InvalidArgument("need one bandwidth per boundary world");

  KernelEstimate<D> est;
  Constraints c;
  est.centers.assign(mobile.begin(), mobile.end());
  est.centers.insert(est.centers.end(), boundary.begin(), boundary.end());
  // Every kernel, boundary ones included, carries the per-world mass behind p_i = 1/(M |Cell_i|).
  est.weights.assign(n, 1.0 / static_cast<double>(m));
  est.bandwidths.resize(n);
  c.targets.assign(n, 0.0);
  c.active.assign(n, 0);
  c.node.assign(n, 0);

  bool any_bounded = false;
  for (std::size_t i = 0; i < m; ++i) {
    double nearest = std::numeric_limits<double>::infinity();
    for (int j : geometry::gradient_neighbors(diagram, i))
      nearest = std::min(nearest, distance<D>(est.centers[i], est.centers[static_cast<std::size_t>(j)]));
    const auto& cell = diagram.cells[i];
    if (cell.bounded && cell.inside_hull) {
      any_bounded = true;
      c.active[i] = 1;
      c.targets[i] = geometry::cell_density(diagram, m, i);
      est.bandwidths[i] = warm_start.size() == m ? warm_start[i] : nearest;
    } else {
      est.bandwidths[i] = nearest;
    }
  }
  if (!any_bounded) throw DegenerateGeometry("every world has an unbounded Voronoi cell");
  for (std::size_t j = 0; j < b; ++j) est.bandwidths[m + j] = boundary_bandwidths[j];

  BuiltEstimate<D> built;
  built.solution = solve_bandwidths<D>(std::move(est), c, BandwidthMode::Plain, settings);
  built.constraints = std::move(c);
  return built;
}

}  // namespace miw::kde
