#pragma once

// Reference spectra: closed forms for the benchmark wells and a finite-difference
// grid eigensolver used to cross-check them.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "miw/potentials.hpp"
#include "miw/types.hpp"

namespace miw::oracle {

struct GridAxis {
  double lower = -10.0;
  double upper = 10.0;
  int points = 2000;  // interior grid points; Dirichlet walls sit just outside
};

namespace detail {

inline std::vector<double> lowest_sums(const std::vector<double>& a, const std::vector<double>& b, std::size_t k) {
  std::vector<double> sums;
  sums.reserve(a.size() * b.size());
  for (double x : a)
    for (double y : b) sums.push_back(x + y);
  std::sort(sums.begin(), sums.end());
  if (sums.size() > k) sums.resize(k);
  return sums;
}

inline std::vector<Potential> split_axes(const Potential& v) {
  if (v.kind() == PotentialKind::SeparableSum) return v.axes();
  if (v.kind() == PotentialKind::Harmonic) return std::vector<Potential>(v.dimension(), Potential::harmonic(v.omega(), 1));
  return {v};
}

// Number of eigenvalues of the symmetric tridiagonal matrix strictly below x (Sturm sequence).
inline int count_below(const std::vector<double>& diag, double off2, double x) {
  int count = 0;
  double q = 1.0;
  for (std::size_t i = 0; i < diag.size(); ++i) {
    q = diag[i] - x - (i ? off2 / q : 0.0);
    if (q == 0.0) q = -std::numeric_limits<double>::epsilon() * (std::abs(diag[i]) + std::abs(x) + 1.0);
    if (q < 0.0) ++count;
  }
  return count;
}

}  // namespace detail

/// Closed-form lowest `levels` energies of a harmonic, Pöschl-Teller or separable potential.
inline std::vector<double> exact_energies(const Potential& v, int levels) {
  if (levels < 0) throw InvalidArgument("level count must be non-negative");
  const auto k = static_cast<std::size_t>(levels);
  if (k == 0) return {};
  switch (v.kind()) {
    case PotentialKind::Harmonic:
      if (v.dimension() == 1) {
        std::vector<double> e(k);
        for (std::size_t n = 0; n < k; ++n) e[n] = (static_cast<double>(n) + 0.5) * v.omega();
        return e;
      }
      break;
    case PotentialKind::PoschlTeller: {
      if (levels > v.lambda())
        throw InvalidArgument("Poschl-Teller well with lambda=" + std::to_string(v.lambda()) + " has only " +
                              std::to_string(v.lambda()) + " bound states");
      std::vector<double> e(k);
      for (std::size_t n = 0; n < k; ++n) {
        const double m = v.lambda() - static_cast<double>(n);
        e[n] = -0.5 * v.alpha() * v.alpha() * m * m;
      }
      return e;
    }
    case PotentialKind::SeparableSum:
      break;
  }
  std::vector<double> acc{0.0};
  for (const auto& axis : detail::split_axes(v)) {
    int available = levels;
    if (axis.kind() == PotentialKind::PoschlTeller) available = std::min(levels, axis.lambda());
    acc = detail::lowest_sums(acc, exact_energies(axis, available), k);
  }
  if (acc.size() < k) throw InvalidArgument("potential has fewer bound states than requested");
  return acc;
}

/// Lowest `levels` eigenvalues of -1/2 d^2/dx^2 + V on a uniform grid with Dirichlet walls.
///
/// Second-order central differences; eigenvalues by Sturm-sequence bisection.
inline std::vector<double> grid_eigensolve_1d(const Potential& v, const GridAxis& axis, int levels) {
  if (v.dimension() != 1) throw InvalidArgument("1d grid solve requires a one-dimensional potential");
  if (axis.points < 16) throw InvalidArgument("grid needs at least 16 points");
  if (!(axis.upper > axis.lower)) throw InvalidArgument("grid domain must have upper > lower");
  if (levels < 0) throw InvalidArgument("level count must be non-negative");
  if (levels > axis.points) throw InvalidArgument("requested more levels than grid points");

  const int n = axis.points;
  const double h = (axis.upper - axis.lower) / (n + 1);
  const double kinetic = 1.0 / (h * h);
  const double off = -0.5 / (h * h);
  std::vector<double> diag(n);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int i = 0; i < n; ++i) {
    const double x = axis.lower + (i + 1) * h;
    diag[i] = kinetic + v.value(std::span<const double>(&x, 1));
    lo = std::min(lo, diag[i] - 2.0 * std::abs(off));
    hi = std::max(hi, diag[i] + 2.0 * std::abs(off));
  }

  std::vector<double> energies(static_cast<std::size_t>(levels));
  for (int j = 0; j < levels; ++j) {
    double a = lo;
    double b = hi;
    for (int it = 0; it < 200 && b - a > 1e-14 * std::max(1.0, std::abs(a) + std::abs(b)); ++it) {
      const double mid = 0.5 * (a + b);
      if (detail::count_below(diag, off * off, mid) > j)
        b = mid;
      else
        a = mid;
    }
    energies[static_cast<std::size_t>(j)] = 0.5 * (a + b);
  }
  return energies;
}

/// Per-axis grid solves combined into the lowest `levels` sums.
inline std::vector<double> grid_eigensolve_separable(const Potential& v, const std::vector<GridAxis>& grids,
                                                     int levels) {
  if (v.kind() == PotentialKind::PoschlTeller || (v.kind() == PotentialKind::Harmonic && v.dimension() == 1))
    throw InvalidArgument("2d grid solve supports separable potentials only");
  const auto axes = detail::split_axes(v);
  if (grids.size() != axes.size()) throw InvalidArgument("need one grid per potential axis");
  if (levels < 0) throw InvalidArgument("level count must be non-negative");
  const auto k = static_cast<std::size_t>(levels);
  if (k == 0) return {};
  std::vector<double> acc{0.0};
  for (std::size_t a = 0; a < axes.size(); ++a) {
    int per_axis = levels;
    if (axes[a].kind() == PotentialKind::PoschlTeller) per_axis = std::min(levels, axes[a].lambda());
    acc = detail::lowest_sums(acc, grid_eigensolve_1d(axes[a], grids[a], per_axis), k);
  }
  return acc;
}

/// Grid that keeps boundary truncation below discretization error for the benchmark wells.
inline GridAxis default_grid(const Potential& axis) {
  if (axis.kind() == PotentialKind::PoschlTeller) {
    const double r = 12.0 / axis.alpha();
    return {-r, r, 4000};
  }
  const double r = 10.0 / std::sqrt(axis.omega());
  return {-r, r, 2000};
}

}  // namespace miw::oracle
