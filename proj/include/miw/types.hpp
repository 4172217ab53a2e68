#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace miw {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates a precondition (dimension mismatch, bad parameter, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Scattered points are degenerate for the requested geometric construction.
class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

/// A density evaluation fell below the configured floor.
class DensityUnderflow : public Error {
 public:
  using Error::Error;
};

/// The bandwidth recursion produced non-finite or runaway bandwidths.
class BandwidthDivergence : public Error {
 public:
  using Error::Error;
};

/// Two adjacent 1d worlds touched or swapped order.
class WorldCrossing : public Error {
 public:
  using Error::Error;
};

template <std::size_t D>
using Point = std::array<double, D>;

// Arithmetic is templated on the array extent so that arguments deduce.

template <std::size_t D>
constexpr std::array<double, D> operator+(const std::array<double, D>& a, const std::array<double, D>& b) {
  std::array<double, D> r{};
  for (std::size_t k = 0; k < D; ++k) r[k] = a[k] + b[k];
  return r;
}

template <std::size_t D>
constexpr std::array<double, D> operator-(const std::array<double, D>& a, const std::array<double, D>& b) {
  std::array<double, D> r{};
  for (std::size_t k = 0; k < D; ++k) r[k] = a[k] - b[k];
  return r;
}

template <std::size_t D>
constexpr std::array<double, D> operator*(double s, const std::array<double, D>& a) {
  std::array<double, D> r{};
  for (std::size_t k = 0; k < D; ++k) r[k] = s * a[k];
  return r;
}

template <std::size_t D>
constexpr std::array<double, D>& operator+=(std::array<double, D>& a, const std::array<double, D>& b) {
  for (std::size_t k = 0; k < D; ++k) a[k] += b[k];
  return a;
}

template <std::size_t D>
constexpr double dot(const std::array<double, D>& a, const std::array<double, D>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < D; ++k) s += a[k] * b[k];
  return s;
}

template <std::size_t D>
constexpr double norm2(const std::array<double, D>& a) {
  return dot(a, a);
}

template <std::size_t D>
double norm(const std::array<double, D>& a) {
  return std::sqrt(norm2(a));
}

template <std::size_t D>
double distance(const std::array<double, D>& a, const std::array<double, D>& b) {
  return norm(a - b);
}

/// Largest pairwise distance in a point set. O(n^2), fine for ensemble sizes used here.
template <std::size_t D>
double diameter(std::span<const Point<D>> pts) {
  double best = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) best = std::max(best, norm2(pts[i] - pts[j]));
  return std::sqrt(best);
}

inline std::string point_to_string(std::span<const double> x) {
  std::string s = "(";
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (k) s += ", ";
    s += std::to_string(x[k]);
  }
  return s + ")";
}

template <std::size_t D>
std::string to_string(const Point<D>& p) {
  return point_to_string(std::span<const double>(p.data(), D));
}

}  // namespace miw
