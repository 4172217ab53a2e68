#pragma once

// The discrete one-dimensional many-interacting-worlds model: nearest-gap density,
// interworld potential with its closed-form forces, and the conserved energy.
// Boundary gaps are infinite, so their reciprocals are zero.

#include <span>
#include <string>
#include <vector>

#include "miw/potentials.hpp"
#include "miw/types.hpp"

namespace miw::miw1d {

struct State {
  std::vector<double> positions;   // strictly increasing
  std::vector<double> velocities;  // same length as positions
};

inline void require_ordered(std::span<const double> q) {
  for (std::size_t i = 0; i + 1 < q.size(); ++i)
    if (!(q[i] < q[i + 1]))
      throw WorldCrossing("world crossing between " + std::to_string(i) + " and " + std::to_string(i + 1) + " (" +
                          std::to_string(q[i]) + " >= " + std::to_string(q[i + 1]) + ")");
}

namespace detail {

inline double inverse_gap(std::span<const double> q, std::size_t left) {
  return 1.0 / (q[left + 1] - q[left]);
}

// d_i = 1/(q_{i+1} - q_i) - 1/(q_i - q_{i-1}), boundary reciprocals zero.
inline double gap_difference(std::span<const double> q, std::size_t i) {
  const double right = i + 1 < q.size() ? inverse_gap(q, i) : 0.0;
  const double left = i > 0 ? inverse_gap(q, i - 1) : 0.0;
  return right - left;
}

}  // namespace detail

inline double density(std::span<const double> q, std::size_t i) {
  require_ordered(q);
  if (i >= q.size()) throw InvalidArgument("world index out of range");
  const double m = static_cast<double>(q.size());
  const double left = i > 0 ? detail::inverse_gap(q, i - 1) : 0.0;
  const double right = i + 1 < q.size() ? detail::inverse_gap(q, i) : 0.0;
  return 0.5 * (left + right) / m;
}

/// U = (1/8) sum_i d_i^2.
inline double interworld_potential(std::span<const double> q) {
  require_ordered(q);
  double u = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double d = detail::gap_difference(q, i);
    u += d * d;
  }
  return u / 8.0;
}

/// Gradient of the interworld potential. Each inverse gap 1/g_k enters d_k and d_{k+1}.
inline std::vector<double> interworld_gradient(std::span<const double> q) {
  require_ordered(q);
  std::vector<double> grad(q.size(), 0.0);
  for (std::size_t k = 0; k + 1 < q.size(); ++k) {
    const double r = detail::inverse_gap(q, k);
    const double du_dr = 0.25 * (detail::gap_difference(q, k) - detail::gap_difference(q, k + 1));
    grad[k] += du_dr * r * r;
    grad[k + 1] -= du_dr * r * r;
  }
  return grad;
}

/// Accelerations -V'(q_i) - dU/dq_i for every world.
inline std::vector<double> forces(std::span<const double> q, const Potential& v) {
  auto f = interworld_gradient(q);
  for (std::size_t i = 0; i < q.size(); ++i) {
    double dv = 0.0;
    v.gradient(q.subspan(i, 1), std::span<double>(&dv, 1));
    f[i] = -dv - f[i];
  }
  return f;
}

inline double force(std::span<const double> q, const Potential& v, std::size_t i) {
  if (i >= q.size()) throw InvalidArgument("world index out of range");
  return forces(q, v)[i];
}

struct Energy {
  double kinetic = 0.0;
  double classical = 0.0;
  double quantum = 0.0;
  double total() const { return kinetic + classical + quantum; }
};

/// Summed energy sum_i [v_i^2/2 + V(q_i)] + U; divide by M for per-world values.
inline Energy total_energy(const State& s, const Potential& v) {
  if (s.velocities.size() != s.positions.size()) throw InvalidArgument("positions and velocities differ in length");
  Energy e;
  e.quantum = interworld_potential(s.positions);
  for (std::size_t i = 0; i < s.positions.size(); ++i) {
    e.kinetic += 0.5 * s.velocities[i] * s.velocities[i];
    e.classical += v.value(std::span<const double>(&s.positions[i], 1));
  }
  return e;
}

}  // namespace miw::miw1d
