#pragma once

// Planar polygon primitives: area units, contiguity and distance predicates,
// centroids, nearest-unit queries and display outlines.
//
// Coordinates are taken verbatim in dataset units. There is no geodesic math
// and no CRS handling anywhere in the library.

#include "arelink/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace arelink {

using json = nlohmann::ordered_json;

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
  friend auto operator<=>(const Point&, const Point&) = default;
};

/// Closed ring: front() == back().
using Ring = std::vector<Point>;

struct Polygon {
  Ring outer;
  std::vector<Ring> holes;
};

struct BBox {
  double xmin = std::numeric_limits<double>::infinity();
  double ymin = std::numeric_limits<double>::infinity();
  double xmax = -std::numeric_limits<double>::infinity();
  double ymax = -std::numeric_limits<double>::infinity();

  void extend(Point p) {
    xmin = std::min(xmin, p.x);
    ymin = std::min(ymin, p.y);
    xmax = std::max(xmax, p.x);
    ymax = std::max(ymax, p.y);
  }
  void extend(const BBox& o) {
    xmin = std::min(xmin, o.xmin);
    ymin = std::min(ymin, o.ymin);
    xmax = std::max(xmax, o.xmax);
    ymax = std::max(ymax, o.ymax);
  }
  bool empty() const { return xmin > xmax; }
  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }

  /// Lower bound on the distance between anything inside the two boxes.
  double gap(const BBox& o) const {
    const double dx = std::max({0.0, o.xmin - xmax, xmin - o.xmax});
    const double dy = std::max({0.0, o.ymin - ymax, ymin - o.ymax});
    return std::hypot(dx, dy);
  }
};

/// One areal unit. A unit may consist of several disjoint parts.
struct AreaUnit {
  std::string name;
  std::vector<Polygon> parts;
  json attrs = json::object();

  BBox bbox() const {
    BBox b;
    for (const auto& poly : parts)
      for (const auto& p : poly.outer) b.extend(p);
    return b;
  }
};

/// Ordered, uniquely named list of units. Positions exposed to users are
/// 1-based; the C++ accessors are 0-based unless named `position`.
class AreaCollection {
 public:
  AreaCollection() = default;

  explicit AreaCollection(std::vector<AreaUnit> units, std::string name_field = "name")
      : units_(std::move(units)), name_field_(std::move(name_field)) {
    std::vector<std::string> dups;
    for (std::size_t i = 0; i < units_.size(); ++i) {
      if (units_[i].name.empty())
        throw InputError("unit at position " + std::to_string(i + 1) + " has an empty name");
      if (!index_.emplace(units_[i].name, i).second) dups.push_back(units_[i].name);
    }
    if (!dups.empty()) {
      std::string msg = "duplicate unit names:";
      for (const auto& d : dups) msg += " " + d;
      throw InputError(msg);
    }
  }

  std::size_t size() const { return units_.size(); }
  bool empty() const { return units_.empty(); }
  const AreaUnit& operator[](std::size_t i) const { return units_[i]; }
  AreaUnit& operator[](std::size_t i) { return units_[i]; }
  const std::vector<AreaUnit>& units() const { return units_; }
  std::vector<AreaUnit>& units() { return units_; }
  const std::string& name_field() const { return name_field_; }

  /// 0-based index of `name`, if present.
  std::optional<std::size_t> index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// 1-based position of `name`, if present.
  std::optional<int> position(std::string_view name) const {
    auto i = index_of(name);
    if (!i) return std::nullopt;
    return static_cast<int>(*i) + 1;
  }

  const AreaUnit& at(std::string_view name) const {
    auto i = index_of(name);
    if (!i) throw InputError("unknown unit '" + std::string(name) + "'");
    return units_[*i];
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(units_.size());
    for (const auto& u : units_) out.push_back(u.name);
    return out;
  }

  BBox bbox() const {
    BBox b;
    for (const auto& u : units_) b.extend(u.bbox());
    return b;
  }

  /// Copy keeping only the units at the given 0-based indices, in that order.
  AreaCollection subset(const std::vector<std::size_t>& keep) const {
    std::vector<AreaUnit> out;
    out.reserve(keep.size());
    for (auto i : keep) out.push_back(units_.at(i));
    return AreaCollection(std::move(out), name_field_);
  }

 private:
  std::vector<AreaUnit> units_;
  std::unordered_map<std::string, std::size_t> index_;
  std::string name_field_ = "name";
};

namespace geom {

inline constexpr double kDefaultTolerance = 1e-9;

inline double cross(Point o, Point a, Point b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

inline double dist(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

inline double point_segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  if (len2 == 0.0) return dist(p, a);
  double t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

inline int orientation(Point a, Point b, Point c) {
  const double v = cross(a, b, c);
  return (v > 0) - (v < 0);
}

inline bool on_segment(Point a, Point b, Point p) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

inline bool segments_intersect(Point a, Point b, Point c, Point d) {
  const int o1 = orientation(a, b, c);
  const int o2 = orientation(a, b, d);
  const int o3 = orientation(c, d, a);
  const int o4 = orientation(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(a, b, c)) return true;
  if (o2 == 0 && on_segment(a, b, d)) return true;
  if (o3 == 0 && on_segment(c, d, a)) return true;
  if (o4 == 0 && on_segment(c, d, b)) return true;
  return false;
}

inline double segment_distance(Point a, Point b, Point c, Point d) {
  if (segments_intersect(a, b, c, d)) return 0.0;
  return std::min({point_segment_distance(a, c, d), point_segment_distance(b, c, d),
                   point_segment_distance(c, a, b), point_segment_distance(d, a, b)});
}

/// Signed shoelace area of a closed ring (positive when counter-clockwise).
inline double signed_area(const Ring& r) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < r.size(); ++i) s += r[i].x * r[i + 1].y - r[i + 1].x * r[i].y;
  return 0.5 * s;
}

/// Even-odd ray cast. Points within `tol` of the boundary count as inside.
inline bool point_in_ring(Point p, const Ring& r, double tol = kDefaultTolerance) {
  for (std::size_t i = 0; i + 1 < r.size(); ++i)
    if (point_segment_distance(p, r[i], r[i + 1]) <= tol) return true;
  bool inside = false;
  for (std::size_t i = 0, j = r.size() - 1; i < r.size(); j = i++) {
    if ((r[i].y > p.y) != (r[j].y > p.y)) {
      const double xint = r[j].x + (p.y - r[j].y) * (r[i].x - r[j].x) / (r[i].y - r[j].y);
      if (p.x < xint) inside = !inside;
    }
  }
  return inside;
}

inline bool point_in_polygon(Point p, const Polygon& poly, double tol = kDefaultTolerance) {
  if (!point_in_ring(p, poly.outer, tol)) return false;
  for (const auto& h : poly.holes) {
    // On the hole boundary is still on the polygon boundary.
    bool on_edge = false;
    for (std::size_t i = 0; i + 1 < h.size() && !on_edge; ++i)
      on_edge = point_segment_distance(p, h[i], h[i + 1]) <= tol;
    if (!on_edge && point_in_ring(p, h, 0.0)) return false;
  }
  return true;
}

inline bool point_in_unit(Point p, const AreaUnit& u, double tol = kDefaultTolerance) {
  return std::any_of(u.parts.begin(), u.parts.end(),
                     [&](const Polygon& poly) { return point_in_polygon(p, poly, tol); });
}

namespace detail {

template <typename F>
void for_each_ring(const AreaUnit& u, F&& f) {
  for (const auto& poly : u.parts) {
    f(poly.outer);
    for (const auto& h : poly.holes) f(h);
  }
}

inline double boundary_distance(const AreaUnit& a, const AreaUnit& b) {
  double best = std::numeric_limits<double>::infinity();
  for_each_ring(a, [&](const Ring& ra) {
    for_each_ring(b, [&](const Ring& rb) {
      if (best == 0.0) return;
      for (std::size_t i = 0; i + 1 < ra.size(); ++i) {
        for (std::size_t j = 0; j + 1 < rb.size(); ++j) {
          best = std::min(best, segment_distance(ra[i], ra[i + 1], rb[j], rb[j + 1]));
          if (best == 0.0) return;
        }
      }
    });
  });
  return best;
}

inline bool any_vertex_inside(const AreaUnit& from, const AreaUnit& into) {
  for (const auto& poly : from.parts)
    if (!poly.outer.empty() && point_in_unit(poly.outer.front(), into, 0.0)) return true;
  return false;
}

}  // namespace detail

/// Minimum Euclidean distance between the two units' boundaries; 0 when they
/// touch or when one overlaps the other.
inline double min_distance(const AreaUnit& a, const AreaUnit& b) {
  const double d = detail::boundary_distance(a, b);
  if (d == 0.0) return 0.0;
  if (detail::any_vertex_inside(a, b) || detail::any_vertex_inside(b, a)) return 0.0;
  return d;
}

/// Queen contiguity: the boundaries share at least one point, up to `tol`.
inline bool queen_contiguous(const AreaUnit& a, const AreaUnit& b,
                             double tol = kDefaultTolerance) {
  if (a.bbox().gap(b.bbox()) > tol) return false;
  return min_distance(a, b) <= tol;
}

/// Area-weighted centroid over all parts (holes subtract).
inline Point centroid(const AreaUnit& u) {
  double area = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  auto accumulate = [&](const Ring& r, double sign) {
    double a = 0.0;
    double x = 0.0;
    double y = 0.0;
    for (std::size_t i = 0; i + 1 < r.size(); ++i) {
      const double c = r[i].x * r[i + 1].y - r[i + 1].x * r[i].y;
      a += c;
      x += (r[i].x + r[i + 1].x) * c;
      y += (r[i].y + r[i + 1].y) * c;
    }
    a *= 0.5;
    if (a == 0.0) return;
    // Ring centroid is (x/6a, y/6a); weight it by the unsigned area.
    const double w = sign * std::abs(a);
    area += w;
    cx += w * x / (6.0 * a);
    cy += w * y / (6.0 * a);
  };
  for (const auto& poly : u.parts) {
    accumulate(poly.outer, 1.0);
    for (const auto& h : poly.holes) accumulate(h, -1.0);
  }
  if (!(std::abs(area) > 0.0))
    throw GeometryError("unit '" + u.name + "' has zero area; centroid undefined");
  return {cx / area, cy / area};
}

inline double area(const AreaUnit& u) {
  double a = 0.0;
  for (const auto& poly : u.parts) {
    a += std::abs(signed_area(poly.outer));
    for (const auto& h : poly.holes) a -= std::abs(signed_area(h));
  }
  return a;
}

enum class Metric { boundary, centroid };

inline double unit_distance(const AreaUnit& a, const AreaUnit& b, Metric m) {
  return m == Metric::boundary ? min_distance(a, b) : dist(centroid(a), centroid(b));
}

/// 0-based indices of the `k` units nearest to unit `target`, ascending by
/// distance, ties broken by collection order.
inline std::vector<std::size_t> knn_indices(const AreaCollection& coll, std::size_t target,
                                            std::size_t k, Metric metric = Metric::boundary) {
  if (target >= coll.size()) throw InputError("knn target index out of range");
  if (k < 1 || k + 1 > coll.size())
    throw InputError("k = " + std::to_string(k) + " out of range [1, " +
                     std::to_string(coll.size() == 0 ? 0 : coll.size() - 1) + "]");
  std::vector<std::pair<double, std::size_t>> cand;
  cand.reserve(coll.size() - 1);
  for (std::size_t j = 0; j < coll.size(); ++j)
    if (j != target) cand.emplace_back(unit_distance(coll[target], coll[j], metric), j);
  std::stable_sort(cand.begin(), cand.end(),
                   [](const auto& l, const auto& r) { return l.first < r.first; });
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(cand[i].second);
  return out;
}

inline std::vector<std::string> knn_units(const AreaCollection& coll, std::string_view target,
                                          std::size_t k, Metric metric = Metric::boundary) {
  auto t = coll.index_of(target);
  if (!t) throw InputError("unknown unit '" + std::string(target) + "'");
  std::vector<std::string> out;
  for (auto i : knn_indices(coll, *t, k, metric)) out.push_back(coll[i].name);
  return out;
}

/// Counter-clockwise convex hull (Andrew's monotone chain), returned closed.
/// Collinear points on the hull are dropped.
inline Ring convex_hull(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) {
    Ring r = pts;
    if (!r.empty()) r.push_back(r.front());
    return r;
  }
  std::vector<Point> h(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(h[k - 2], h[k - 1], pts[i - 1]) <= 0) --k;
    h[k++] = pts[i - 1];
  }
  h.resize(k);  // last point equals the first: ring is closed
  return h;
}

namespace detail {

struct Triangulation {
  std::vector<Point> pts;
  std::vector<std::array<int, 3>> tris;  // counter-clockwise
};

inline bool in_circumcircle(const std::vector<Point>& p, const std::array<int, 3>& t, Point q) {
  const Point a = p[t[0]], b = p[t[1]], c = p[t[2]];
  const double ax = a.x - q.x, ay = a.y - q.y;
  const double bx = b.x - q.x, by = b.y - q.y;
  const double cx = c.x - q.x, cy = c.y - q.y;
  const double det = (ax * ax + ay * ay) * (bx * cy - cx * by) -
                     (bx * bx + by * by) * (ax * cy - cx * ay) +
                     (cx * cx + cy * cy) * (ax * by - bx * ay);
  const double scale = (ax * ax + ay * ay + bx * bx + by * by + cx * cx + cy * cy);
  return det > 1e-12 * scale * scale;
}

/// Bowyer-Watson Delaunay triangulation of distinct points. O(n^2), which is
/// plenty for display outlines of single units.
inline Triangulation delaunay(std::vector<Point> pts) {
  Triangulation out;
  const int n = static_cast<int>(pts.size());
  BBox b;
  for (auto p : pts) b.extend(p);
  const double span = std::max({b.width(), b.height(), 1e-12});
  const double mx = 0.5 * (b.xmin + b.xmax);
  const double my = 0.5 * (b.ymin + b.ymax);
  pts.push_back({mx - 1e3 * span, my - 1e3 * span});
  pts.push_back({mx + 1e3 * span, my - 1e3 * span});
  pts.push_back({mx, my + 1e3 * span});

  std::vector<std::array<int, 3>> tris{{n, n + 1, n + 2}};
  for (int i = 0; i < n; ++i) {
    std::vector<std::array<int, 3>> keep;
    std::vector<std::pair<int, int>> edges;
    for (const auto& t : tris) {
      if (in_circumcircle(pts, t, pts[i])) {
        edges.emplace_back(t[0], t[1]);
        edges.emplace_back(t[1], t[2]);
        edges.emplace_back(t[2], t[0]);
      } else {
        keep.push_back(t);
      }
    }
    // Cavity boundary: directed edges whose reverse is not also present.
    std::set<std::pair<int, int>> directed(edges.begin(), edges.end());
    for (const auto& [a, c] : edges) {
      if (directed.count({c, a})) continue;
      std::array<int, 3> t{a, c, i};
      if (cross(pts[a], pts[c], pts[i]) > 0) keep.push_back(t);
    }
    tris = std::move(keep);
  }
  for (const auto& t : tris)
    if (t[0] < n && t[1] < n && t[2] < n) out.tris.push_back(t);
  pts.resize(static_cast<std::size_t>(n));
  out.pts = std::move(pts);
  return out;
}

/// Chi-shape digging over a Delaunay triangulation: repeatedly drop the
/// longest boundary edge whose opposite vertex is interior, while that edge is
/// longer than `threshold`. Returns the boundary as a closed CCW ring, or an
/// empty ring if the triangulation does not form a single simple region.
inline Ring chi_shape(const Triangulation& tr, double threshold) {
  const auto& p = tr.pts;
  std::vector<bool> alive(tr.tris.size(), true);
  std::map<std::pair<int, int>, std::size_t> owner;  // directed edge -> triangle
  for (std::size_t t = 0; t < tr.tris.size(); ++t)
    for (int e = 0; e < 3; ++e) owner[{tr.tris[t][e], tr.tris[t][(e + 1) % 3]}] = t;

  auto is_boundary = [&](int a, int b) {
    auto it = owner.find({a, b});
    if (it == owner.end() || !alive[it->second]) return false;
    auto rev = owner.find({b, a});
    return rev == owner.end() || !alive[rev->second];
  };

  std::vector<bool> on_boundary(p.size(), false);
  using Item = std::pair<double, std::pair<int, int>>;
  std::priority_queue<Item> queue;
  for (const auto& [e, t] : owner) {
    if (is_boundary(e.first, e.second)) {
      on_boundary[e.first] = on_boundary[e.second] = true;
      queue.push({dist(p[e.first], p[e.second]), e});
    }
  }
  while (!queue.empty()) {
    auto [len, e] = queue.top();
    queue.pop();
    if (len <= threshold) break;
    if (!is_boundary(e.first, e.second)) continue;
    const auto t = owner[e];
    const auto& tri = tr.tris[t];
    int c = -1;
    for (int v : tri)
      if (v != e.first && v != e.second) c = v;
    if (c < 0 || on_boundary[c]) continue;
    alive[t] = false;
    on_boundary[c] = true;
    queue.push({dist(p[e.first], p[c]), {e.first, c}});
    queue.push({dist(p[c], p[e.second]), {c, e.second}});
  }

  std::map<int, int> next;
  for (const auto& [e, t] : owner) {
    if (!is_boundary(e.first, e.second)) continue;
    if (!next.emplace(e.first, e.second).second) return {};
  }
  if (next.empty()) return {};
  Ring ring;
  const int start = next.begin()->first;
  int cur = start;
  do {
    ring.push_back(p[cur]);
    auto it = next.find(cur);
    if (it == next.end()) return {};
    cur = it->second;
    if (ring.size() > next.size()) return {};
  } while (cur != start);
  if (ring.size() != next.size()) return {};
  ring.push_back(ring.front());
  return ring;
}

}  // namespace detail

/// Display outline around every vertex of a unit. The edge-length threshold
/// is `concavity` times the median Delaunay edge length; an infinite
/// concavity yields the convex hull. Never used for contiguity.
inline Ring concave_outline(const AreaUnit& u, double concavity = 2.0) {
  std::vector<Point> pts;
  for (const auto& poly : u.parts)
    for (std::size_t i = 0; i + 1 < poly.outer.size(); ++i) pts.push_back(poly.outer[i]);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

  Ring hull = convex_hull(pts);
  if (std::isinf(concavity) || pts.size() < 4) return hull;

  const auto tr = detail::delaunay(pts);
  if (tr.tris.empty()) return hull;
  std::vector<double> lengths;
  for (const auto& t : tr.tris)
    for (int e = 0; e < 3; ++e) lengths.push_back(dist(tr.pts[t[e]], tr.pts[t[(e + 1) % 3]]));
  std::nth_element(lengths.begin(), lengths.begin() + lengths.size() / 2, lengths.end());
  const double threshold = concavity * lengths[lengths.size() / 2];

  Ring ring = detail::chi_shape(tr, threshold);
  if (ring.size() < 4) return hull;
  const double tol = 1e-9 * std::max(1.0, std::max(u.bbox().width(), u.bbox().height()));
  for (auto q : pts)
    if (!point_in_ring(q, ring, tol)) return hull;
  return ring;
}

}  // namespace geom
}  // namespace arelink
