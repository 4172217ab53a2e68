#pragma once

// Scattered-point geometry for world ensembles: Delaunay triangulation, Voronoi
// cells, the triangulation/cell density estimates and the dual-basis gradient.
//
// D = 1 is handled by sorting. D = 2 uses Bowyer-Watson insertion with symbolic
// "ghost" triangles for the exterior, so no finite super-triangle is needed.
// Cocircular ties are resolved by insertion (index) order: a point exactly on a
// circumcircle does not invalidate the triangle.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "miw/types.hpp"

namespace miw::geometry {

template <std::size_t D>
struct Triangulation {
  std::vector<Point<D>> vertices;
  std::vector<std::array<int, D + 1>> simplices;
  std::vector<std::vector<int>> incidence;  // simplex indices touching each vertex
};

struct VoronoiCell {
  double volume = 0.0;  // meaningful only when bounded
  bool bounded = false;
  bool inside_hull = false;  // bounded and no vertex outside the convex hull of the sites
  std::vector<int> neighbors;
};

template <std::size_t D>
struct VoronoiDiagram {
  std::vector<Point<D>> sites;
  std::vector<VoronoiCell> cells;
  std::vector<std::vector<Point<2>>> polygons;  // clipped cell outlines (D = 2 only)
};

template <std::size_t D>
struct DualBasis {
  std::vector<Point<D>> vectors;
  std::vector<Point<D>> duals;
};

namespace detail {

inline double orient(const Point<2>& a, const Point<2>& b, const Point<2>& c) {
  return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
}

// > 0 when d lies inside the circumcircle of the counter-clockwise triangle (a, b, c).
inline double incircle(const Point<2>& a, const Point<2>& b, const Point<2>& c, const Point<2>& d) {
  const double adx = a[0] - d[0], ady = a[1] - d[1];
  const double bdx = b[0] - d[0], bdy = b[1] - d[1];
  const double cdx = c[0] - d[0], cdy = c[1] - d[1];
  const double ad = adx * adx + ady * ady;
  const double bd = bdx * bdx + bdy * bdy;
  const double cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

template <std::size_t D>
double extent(std::span<const Point<D>> pts) {
  double e = 0.0;
  for (std::size_t k = 0; k < D; ++k) {
    auto [lo, hi] = std::minmax_element(pts.begin(), pts.end(),
                                        [k](const Point<D>& a, const Point<D>& b) { return a[k] < b[k]; });
    e = std::max(e, (*hi)[k] - (*lo)[k]);
  }
  return e;
}

template <std::size_t D>
void require_distinct(std::span<const Point<D>> pts) {
  std::vector<int> order(pts.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return pts[a] < pts[b]; });
  for (std::size_t k = 1; k < order.size(); ++k)
    if (pts[order[k]] == pts[order[k - 1]])
      throw DegenerateGeometry("duplicate points " + std::to_string(std::min(order[k], order[k - 1])) + " and " +
                               std::to_string(std::max(order[k], order[k - 1])) + " at " +
                               to_string<D>(pts[order[k]]));
}

inline std::vector<int> sorted_order(std::span<const Point<1>> pts) {
  std::vector<int> order(pts.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return pts[a][0] < pts[b][0]; });
  return order;
}

inline double simplex_volume(const Point<1>& a, const Point<1>& b) { return std::abs(b[0] - a[0]); }

inline double simplex_volume(const Point<2>& a, const Point<2>& b, const Point<2>& c) {
  return 0.5 * std::abs(orient(a, b, c));
}

// Hull boundary membership (vertices and points lying on hull edges).
// Convex hull vertices in counter-clockwise order; collinear points dropped.
inline std::vector<int> hull_order(std::span<const Point<2>> pts, double tol) {
  const int n = static_cast<int>(pts.size());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return pts[a] < pts[b]; });
  std::vector<int> hull(2 * n);
  int k = 0;
  for (int i = 0; i < n; ++i) {
    while (k >= 2 && orient(pts[hull[k - 2]], pts[hull[k - 1]], pts[idx[i]]) <= tol) --k;
    hull[k++] = idx[i];
  }
  for (int i = n - 2, t = k + 1; i >= 0; --i) {
    while (k >= t && orient(pts[hull[k - 2]], pts[hull[k - 1]], pts[idx[i]]) <= tol) --k;
    hull[k++] = idx[i];
  }
  hull.resize(std::max(k - 1, 0));
  return hull;
}

inline std::vector<bool> on_hull_boundary(std::span<const Point<2>> pts, double tol) {
  const int n = static_cast<int>(pts.size());
  const auto hull = hull_order(pts, tol);
  std::vector<bool> boundary(n, false);
  for (int h : hull) boundary[h] = true;
  for (std::size_t e = 0; e < hull.size(); ++e) {
    const Point<2>& a = pts[hull[e]];
    const Point<2>& b = pts[hull[(e + 1) % hull.size()]];
    const Point<2> ab = b - a;
    const double len2 = norm2<2>(ab);
    for (int i = 0; i < n; ++i) {
      if (boundary[i]) continue;
      const Point<2> ap = pts[i] - a;
      const double t = dot<2>(ap, ab);
      if (std::abs(orient(a, b, pts[i])) <= tol && t >= 0.0 && t <= len2) boundary[i] = true;
    }
  }
  return boundary;
}

struct LabeledVertex {
  Point<2> at;
  int label;  // site whose bisector carries the edge leaving this vertex; -1 for the bounding box
};

// Keep the part of the polygon on the `site` side of the bisector between `site` and `other`.
inline std::vector<LabeledVertex> clip(const std::vector<LabeledVertex>& poly, const Point<2>& site,
                                       const Point<2>& other, int other_label) {
  const Point<2> n = other - site;
  const Point<2> mid = 0.5 * (site + other);
  auto side = [&](const Point<2>& x) { return dot<2>(x - mid, n); };
  std::vector<LabeledVertex> out;
  out.reserve(poly.size() + 1);
  for (std::size_t k = 0; k < poly.size(); ++k) {
    const LabeledVertex& a = poly[k];
    const LabeledVertex& b = poly[(k + 1) % poly.size()];
    const double sa = side(a.at);
    const double sb = side(b.at);
    const bool ina = sa <= 0.0;
    const bool inb = sb <= 0.0;
    if (ina) out.push_back(a);
    if (ina != inb) {
      const double t = sa / (sa - sb);
      const Point<2> x = a.at + t * (b.at - a.at);
      out.push_back({x, ina ? other_label : a.label});
    }
  }
  return out;
}

inline double polygon_area(const std::vector<LabeledVertex>& poly) {
  double s = 0.0;
  for (std::size_t k = 0; k < poly.size(); ++k) {
    const auto& a = poly[k].at;
    const auto& b = poly[(k + 1) % poly.size()].at;
    s += a[0] * b[1] - a[1] * b[0];
  }
  return 0.5 * std::abs(s);
}

// Small dense inverse by Gauss-Jordan with partial pivoting; returns false if singular.
template <std::size_t D>
bool invert(std::array<double, D * D> m, std::array<double, D * D>& inv, double rel_tol) {
  inv.fill(0.0);
  for (std::size_t i = 0; i < D; ++i) inv[i * D + i] = 1.0;
  double scale = 0.0;
  for (double x : m) scale = std::max(scale, std::abs(x));
  if (scale == 0.0) return false;
  for (std::size_t c = 0; c < D; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < D; ++r)
      if (std::abs(m[r * D + c]) > std::abs(m[piv * D + c])) piv = r;
    if (std::abs(m[piv * D + c]) <= rel_tol * scale) return false;
    if (piv != c)
      for (std::size_t k = 0; k < D; ++k) {
        std::swap(m[c * D + k], m[piv * D + k]);
        std::swap(inv[c * D + k], inv[piv * D + k]);
      }
    const double p = m[c * D + c];
    for (std::size_t k = 0; k < D; ++k) {
      m[c * D + k] /= p;
      inv[c * D + k] /= p;
    }
    for (std::size_t r = 0; r < D; ++r) {
      if (r == c) continue;
      const double f = m[r * D + c];
      if (f == 0.0) continue;
      for (std::size_t k = 0; k < D; ++k) {
        m[r * D + k] -= f * m[c * D + k];
        inv[r * D + k] -= f * inv[c * D + k];
      }
    }
  }
  return true;
}

}  // namespace detail

/// Sorted consecutive intervals.
inline Triangulation<1> triangulate(std::span<const Point<1>> pts) {
  if (pts.size() < 2) throw DegenerateGeometry("triangulation in 1d needs at least 2 points");
  detail::require_distinct<1>(pts);
  Triangulation<1> tri;
  tri.vertices.assign(pts.begin(), pts.end());
  tri.incidence.resize(pts.size());
  const auto order = detail::sorted_order(pts);
  for (std::size_t k = 0; k + 1 < order.size(); ++k) {
    const int s = static_cast<int>(tri.simplices.size());
    tri.simplices.push_back({order[k], order[k + 1]});
    tri.incidence[order[k]].push_back(s);
    tri.incidence[order[k + 1]].push_back(s);
  }
  return tri;
}

/// Delaunay triangulation of a planar point set (triangles counter-clockwise).
inline Triangulation<2> triangulate(std::span<const Point<2>> pts) {
  const int n = static_cast<int>(pts.size());
  if (n < 3) throw DegenerateGeometry("triangulation in 2d needs at least 3 points");
  detail::require_distinct<2>(pts);
  const double ext = detail::extent<2>(pts);
  const double otol = 1e-12 * ext * ext;
  const double ctol = 1e-12 * ext * ext * ext * ext;

  int i2 = -1;
  for (int k = 2; k < n && i2 < 0; ++k)
    if (std::abs(detail::orient(pts[0], pts[1], pts[k])) > otol) i2 = k;
  if (i2 < 0) throw DegenerateGeometry("all " + std::to_string(n) + " points are collinear");

  constexpr int ghost = -1;
  using Tri = std::array<int, 3>;
  std::vector<Tri> tris;
  {
    Tri t{0, 1, i2};
    if (detail::orient(pts[0], pts[1], pts[i2]) < 0) std::swap(t[1], t[2]);
    tris.push_back(t);
    for (int e = 0; e < 3; ++e) tris.push_back({t[(e + 1) % 3], t[e], ghost});
  }

  auto conflicts = [&](const Tri& t, const Point<2>& p) {
    if (t[2] == ghost) {
      const Point<2>& u = pts[t[0]];
      const Point<2>& v = pts[t[1]];
      const double o = detail::orient(u, v, p);
      if (o > otol) return true;
      if (o < -otol) return false;
      return dot<2>(p - u, v - u) > 0.0 && dot<2>(p - v, u - v) > 0.0;
    }
    return detail::incircle(pts[t[0]], pts[t[1]], pts[t[2]], p) > ctol;
  };

  for (int ip = 2; ip < n; ++ip) {
    if (ip == i2) continue;
    const Point<2>& p = pts[ip];
    std::vector<char> bad(tris.size(), 0);
    bool any = false;
    for (std::size_t t = 0; t < tris.size(); ++t)
      if (conflicts(tris[t], p)) bad[t] = any = true;
    if (!any)
      throw DegenerateGeometry("point " + std::to_string(ip) + " at " + to_string<2>(p) +
                               " is numerically degenerate with the current triangulation");

    std::map<std::pair<int, int>, std::size_t> owner;
    for (std::size_t t = 0; t < tris.size(); ++t)
      for (int e = 0; e < 3; ++e) owner[{tris[t][e], tris[t][(e + 1) % 3]}] = t;

    std::vector<Tri> next;
    next.reserve(tris.size() + 4);
    for (std::size_t t = 0; t < tris.size(); ++t)
      if (!bad[t]) next.push_back(tris[t]);
    for (std::size_t t = 0; t < tris.size(); ++t) {
      if (!bad[t]) continue;
      for (int e = 0; e < 3; ++e) {
        const int a = tris[t][e];
        const int b = tris[t][(e + 1) % 3];
        const auto opp = owner.find({b, a});
        if (opp != owner.end() && bad[opp->second]) continue;
        if (a == ghost)
          next.push_back({b, ip, ghost});
        else if (b == ghost)
          next.push_back({ip, a, ghost});
        else
          next.push_back({a, b, ip});
      }
    }
    tris = std::move(next);
  }

  Triangulation<2> tri;
  tri.vertices.assign(pts.begin(), pts.end());
  tri.incidence.resize(pts.size());
  for (const auto& t : tris) {
    if (t[2] == ghost) continue;
    const int s = static_cast<int>(tri.simplices.size());
    tri.simplices.push_back(t);
    for (int v : t) tri.incidence[v].push_back(s);
  }
  return tri;
}

inline double simplex_volume(const Triangulation<1>& tri, std::size_t s) {
  return detail::simplex_volume(tri.vertices[tri.simplices[s][0]], tri.vertices[tri.simplices[s][1]]);
}

inline double simplex_volume(const Triangulation<2>& tri, std::size_t s) {
  const auto& t = tri.simplices[s];
  return detail::simplex_volume(tri.vertices[t[0]], tri.vertices[t[1]], tri.vertices[t[2]]);
}

/// Voronoi cells of a 1d point set: midpoint intervals, the two extreme cells unbounded.
inline VoronoiDiagram<1> voronoi(std::span<const Point<1>> pts) {
  if (pts.size() < 2) throw DegenerateGeometry("Voronoi diagram in 1d needs at least 2 points");
  detail::require_distinct<1>(pts);
  VoronoiDiagram<1> vd;
  vd.sites.assign(pts.begin(), pts.end());
  vd.cells.resize(pts.size());
  const auto order = detail::sorted_order(pts);
  const std::size_t n = order.size();
  for (std::size_t k = 0; k < n; ++k) {
    VoronoiCell& cell = vd.cells[order[k]];
    if (k > 0) cell.neighbors.push_back(order[k - 1]);
    if (k + 1 < n) cell.neighbors.push_back(order[k + 1]);
    cell.bounded = k > 0 && k + 1 < n;
    cell.inside_hull = cell.bounded;
    if (cell.bounded) cell.volume = 0.5 * (pts[order[k + 1]][0] - pts[order[k - 1]][0]);
  }
  return vd;
}

/// Voronoi cells of a planar point set, each built by clipping a bounding box with bisectors.
/// Cells of hull-boundary points are flagged unbounded.
inline VoronoiDiagram<2> voronoi(std::span<const Point<2>> pts) {
  const int n = static_cast<int>(pts.size());
  if (n < 2) throw DegenerateGeometry("Voronoi diagram in 2d needs at least 2 points");
  detail::require_distinct<2>(pts);
  const double ext = detail::extent<2>(pts);

  std::vector<bool> boundary;
  std::vector<int> hull;
  if (n >= 3) {
    bool collinear = true;
    for (int k = 2; k < n && collinear; ++k)
      collinear = std::abs(detail::orient(pts[0], pts[1], pts[k])) <= 1e-12 * ext * ext;
    boundary = collinear ? std::vector<bool>(n, true) : detail::on_hull_boundary(pts, 1e-12 * ext * ext);
    if (!collinear) hull = detail::hull_order(pts, 1e-12 * ext * ext);
  } else {
    boundary.assign(n, true);
  }
  auto in_hull = [&](const Point<2>& x) {
    for (std::size_t e = 0; e < hull.size(); ++e) {
      const Point<2>& a = pts[hull[e]];
      const Point<2>& b = pts[hull[(e + 1) % hull.size()]];
      if (detail::orient(a, b, x) < -1e-12 * ext * ext) return false;
    }
    return true;
  };

  Point<2> lo = pts[0], hi = pts[0];
  for (const auto& p : pts)
    for (int k = 0; k < 2; ++k) {
      lo[k] = std::min(lo[k], p[k]);
      hi[k] = std::max(hi[k], p[k]);
    }
  const Point<2> c = 0.5 * (lo + hi);
  const double r = 1e4 * std::max(ext, 1e-300);
  const std::vector<detail::LabeledVertex> box{{{c[0] - r, c[1] - r}, -1},
                                               {{c[0] + r, c[1] - r}, -1},
                                               {{c[0] + r, c[1] + r}, -1},
                                               {{c[0] - r, c[1] + r}, -1}};

  VoronoiDiagram<2> vd;
  vd.sites.assign(pts.begin(), pts.end());
  vd.cells.resize(n);
  vd.polygons.resize(n);
  const double min_edge = 1e-10 * ext;
  for (int i = 0; i < n; ++i) {
    auto poly = box;
    for (int j = 0; j < n && !poly.empty(); ++j)
      if (j != i) poly = detail::clip(poly, pts[i], pts[j], j);
    VoronoiCell& cell = vd.cells[i];
    cell.bounded = !boundary[i];
    if (cell.bounded) {
      cell.volume = detail::polygon_area(poly);
      cell.inside_hull = std::all_of(poly.begin(), poly.end(), [&](const auto& v) { return in_hull(v.at); });
    }
    for (std::size_t k = 0; k < poly.size(); ++k) {
      const int label = poly[k].label;
      if (label < 0) continue;
      if (distance<2>(poly[k].at, poly[(k + 1) % poly.size()].at) <= min_edge) continue;
      if (std::find(cell.neighbors.begin(), cell.neighbors.end(), label) == cell.neighbors.end())
        cell.neighbors.push_back(label);
    }
    std::sort(cell.neighbors.begin(), cell.neighbors.end());
    for (const auto& v : poly) vd.polygons[i].push_back(v.at);
  }
  return vd;
}

/// Cell-volume density 1/(M |Cell_i|); zero for unbounded cells.
template <std::size_t D>
double cell_density(const VoronoiDiagram<D>& diagram, std::size_t world_count, std::size_t i) {
  const VoronoiCell& cell = diagram.cells.at(i);
  if (!cell.bounded) return 0.0;
  return 1.0 / (static_cast<double>(world_count) * cell.volume);
}

/// Triangulation density (D+1) / (M * sum of incident simplex volumes).
template <std::size_t D>
double triangulation_density(const Triangulation<D>& tri, std::size_t world_count, std::size_t i) {
  const auto& incident = tri.incidence.at(i);
  if (incident.empty()) throw DegenerateGeometry("world " + std::to_string(i) + " has no incident simplex");
  double total = 0.0;
  for (int s : incident) total += simplex_volume(tri, static_cast<std::size_t>(s));
  return (D + 1.0) / (static_cast<double>(world_count) * total);
}

/// Dual vectors of A (A^T A)^{-1} for difference vectors stacked as the rows of A.
template <std::size_t D>
DualBasis<D> dual_basis(std::span<const Point<D>> vectors) {
  if (vectors.size() < static_cast<std::size_t>(D))
    throw DegenerateGeometry("neighbors do not span configuration space: " + std::to_string(vectors.size()) +
                             " vectors in dimension " + std::to_string(D));
  std::array<double, D * D> gram{};
  for (const auto& v : vectors)
    for (std::size_t a = 0; a < D; ++a)
      for (std::size_t b = 0; b < D; ++b) gram[a * D + b] += v[a] * v[b];
  std::array<double, D * D> inv{};
  if (!detail::invert<D>(gram, inv, 1e-12)) throw DegenerateGeometry("neighbors do not span configuration space");
  DualBasis<D> basis;
  basis.vectors.assign(vectors.begin(), vectors.end());
  basis.duals.reserve(vectors.size());
  for (const auto& v : vectors) {
    Point<D> d{};
    for (std::size_t a = 0; a < D; ++a)
      for (std::size_t b = 0; b < D; ++b) d[a] += inv[a * D + b] * v[b];
    basis.duals.push_back(d);
  }
  return basis;
}

/// Gradient estimate sum_s [P(Q^(i,s)) - P(Q^(i))] * dual_s; exact for affine fields.
template <std::size_t D>
Point<D> estimate_gradient(double center_value, std::span<const double> neighbor_values, const DualBasis<D>& basis) {
  if (neighbor_values.size() != basis.duals.size())
    throw InvalidArgument("got " + std::to_string(neighbor_values.size()) + " neighbor values for " +
                          std::to_string(basis.duals.size()) + " basis vectors");
  Point<D> g{};
  for (std::size_t s = 0; s < neighbor_values.size(); ++s) g += (neighbor_values[s] - center_value) * basis.duals[s];
  return g;
}

/// Worlds used for the gradient at world i: Voronoi facet neighbors, or the D+1 nearest
/// worlds when the cell has fewer than D facet neighbors.
template <std::size_t D>
std::vector<int> gradient_neighbors(const VoronoiDiagram<D>& diagram, std::size_t i) {
  const auto& facet = diagram.cells.at(i).neighbors;
  if (facet.size() >= static_cast<std::size_t>(D)) return facet;
  std::vector<int> others;
  for (std::size_t j = 0; j < diagram.sites.size(); ++j)
    if (j != i) others.push_back(static_cast<int>(j));
  const auto& site = diagram.sites[i];
  const std::size_t keep = std::min<std::size_t>(D + 1, others.size());
  std::partial_sort(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(keep), others.end(),
                    [&](int a, int b) { return norm2<D>(diagram.sites[a] - site) < norm2<D>(diagram.sites[b] - site); });
  others.resize(keep);
  return others;
}

/// Dual-basis gradient of any per-world field at world i, using gradient_neighbors().
template <std::size_t D>
Point<D> field_gradient(const VoronoiDiagram<D>& diagram, std::span<const double> values, std::size_t i) {
  const auto nb = gradient_neighbors(diagram, i);
  std::vector<Point<D>> vecs;
  std::vector<double> vals;
  for (int j : nb) {
    vecs.push_back(diagram.sites[j] - diagram.sites[i]);
    vals.push_back(values[j]);
  }
  const auto basis = dual_basis<D>(vecs);
  return estimate_gradient<D>(values[i], vals, basis);
}

}  // namespace miw::geometry
