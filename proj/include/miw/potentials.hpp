#pragma once

// Classical potentials V(X) in natural units (hbar = m = 1).

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "miw/types.hpp"

namespace miw {

enum class PotentialKind { Harmonic, PoschlTeller, SeparableSum };

/// Harmonic well, attractive Pöschl-Teller well, or a per-axis sum of 1d potentials.
///
/// The Pöschl-Teller well uses the attractive sign
///   V(x) = -(alpha^2 / 2) lambda (lambda + 1) / cosh^2(alpha x),
/// whose bound states are E_n = -(alpha^2 / 2)(lambda - n)^2.
class Potential {
 public:
  static Potential harmonic(double omega, int dimension = 1) {
    if (!(omega > 0.0)) throw InvalidArgument("harmonic potential requires omega > 0");
    if (dimension < 1) throw InvalidArgument("potential dimension must be >= 1");
    Potential p;
    p.kind_ = PotentialKind::Harmonic;
    p.omega_ = omega;
    p.dimension_ = dimension;
    return p;
  }

  static Potential poschl_teller(double alpha, int lambda) {
    if (!(alpha > 0.0)) throw InvalidArgument("Poschl-Teller potential requires alpha > 0");
    if (lambda < 1) throw InvalidArgument("Poschl-Teller potential requires lambda >= 1");
    Potential p;
    p.kind_ = PotentialKind::PoschlTeller;
    p.alpha_ = alpha;
    p.lambda_ = lambda;
    p.dimension_ = 1;
    return p;
  }

  static Potential separable(std::vector<Potential> axes) {
    if (axes.empty()) throw InvalidArgument("separable potential needs at least one axis");
    for (const auto& a : axes)
      if (a.dimension() != 1) throw InvalidArgument("separable potential axes must be one-dimensional");
    Potential p;
    p.kind_ = PotentialKind::SeparableSum;
    p.dimension_ = static_cast<int>(axes.size());
    p.axes_ = std::move(axes);
    return p;
  }

  PotentialKind kind() const { return kind_; }
  int dimension() const { return dimension_; }
  double omega() const { return omega_; }
  double alpha() const { return alpha_; }
  int lambda() const { return lambda_; }
  const std::vector<Potential>& axes() const { return axes_; }

  /// Energy unit the potential's spectrum is naturally quoted in.
  std::string units() const {
    switch (kind_) {
      case PotentialKind::Harmonic:
        return "hbar_omega";
      case PotentialKind::PoschlTeller:
        return "alpha^2 hbar^2/m";
      case PotentialKind::SeparableSum:
        return axes_.front().units();
    }
    return "";
  }

  double value(std::span<const double> x) const {
    check_dimension(x.size());
    switch (kind_) {
      case PotentialKind::Harmonic: {
        double r2 = 0.0;
        for (double c : x) r2 += c * c;
        return 0.5 * omega_ * omega_ * r2;
      }
      case PotentialKind::PoschlTeller: {
        const double c = std::cosh(alpha_ * x[0]);
        return -depth() / (c * c);
      }
      case PotentialKind::SeparableSum: {
        double v = 0.0;
        for (std::size_t k = 0; k < axes_.size(); ++k) v += axes_[k].value(x.subspan(k, 1));
        return v;
      }
    }
    return 0.0;
  }

  void gradient(std::span<const double> x, std::span<double> out) const {
    check_dimension(x.size());
    if (out.size() != x.size()) throw InvalidArgument("gradient output size does not match point dimension");
    switch (kind_) {
      case PotentialKind::Harmonic:
        for (std::size_t k = 0; k < x.size(); ++k) out[k] = omega_ * omega_ * x[k];
        return;
      case PotentialKind::PoschlTeller: {
        // d/dx [-A sech^2(a x)] = 2 A a tanh(a x) sech^2(a x)
        const double ax = alpha_ * x[0];
        const double c = std::cosh(ax);
        out[0] = 2.0 * depth() * alpha_ * std::tanh(ax) / (c * c);
        return;
      }
      case PotentialKind::SeparableSum:
        for (std::size_t k = 0; k < axes_.size(); ++k) axes_[k].gradient(x.subspan(k, 1), out.subspan(k, 1));
        return;
    }
  }

  template <std::size_t D>
  double value(const Point<D>& x) const {
    return value(std::span<const double>(x.data(), D));
  }

  template <std::size_t D>
  Point<D> gradient(const Point<D>& x) const {
    Point<D> g{};
    gradient(std::span<const double>(x.data(), D), std::span<double>(g.data(), D));
    return g;
  }

 private:
  Potential() = default;

  double depth() const { return 0.5 * alpha_ * alpha_ * lambda_ * (lambda_ + 1.0); }

  void check_dimension(std::size_t n) const {
    if (n != static_cast<std::size_t>(dimension_))
      throw InvalidArgument("point has dimension " + std::to_string(n) + " but potential has dimension " +
                            std::to_string(dimension_));
  }

  PotentialKind kind_ = PotentialKind::Harmonic;
  int dimension_ = 1;
  double omega_ = 1.0;
  double alpha_ = 1.0;
  int lambda_ = 1;
  std::vector<Potential> axes_;
};

}  // namespace miw
