#include "support/oracles.hpp"

#include "arelink/geojson.hpp"
#include "arelink/geom.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace arelink;

namespace {

AreaUnit l_shape() {
  AreaUnit u;
  u.name = "L";
  u.parts.push_back({{{0, 0}, {3, 0}, {3, 1}, {1, 1}, {1, 3}, {0, 3}, {0, 0}}, {}});
  return u;
}

AreaUnit framed_box() {
  AreaUnit u = oracle::box("frame", 0, 0, 4, 4);
  u.parts[0].holes.push_back({{1, 1}, {3, 1}, {3, 3}, {1, 3}, {1, 1}});
  return u;
}

}  // namespace

TEST(Primitives, PointSegmentDistance) {
  EXPECT_DOUBLE_EQ(geom::point_segment_distance({0, 1}, {-1, 0}, {1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(geom::point_segment_distance({3, 4}, {0, 0}, {0, 0}), 5.0);
  EXPECT_DOUBLE_EQ(geom::point_segment_distance({2, 1}, {0, 0}, {1, 0}), std::sqrt(2.0));
}

TEST(Primitives, CrossingSegmentsHaveZeroDistance) {
  EXPECT_TRUE(geom::segments_intersect({0, 0}, {2, 2}, {0, 2}, {2, 0}));
  EXPECT_DOUBLE_EQ(geom::segment_distance({0, 0}, {2, 2}, {0, 2}, {2, 0}), 0.0);
  EXPECT_FALSE(geom::segments_intersect({0, 0}, {1, 0}, {0, 1}, {1, 1}));
  EXPECT_DOUBLE_EQ(geom::segment_distance({0, 0}, {1, 0}, {0, 1}, {1, 1}), 1.0);
}

TEST(Primitives, PointInPolygonRespectsHoles) {
  const AreaUnit f = framed_box();
  EXPECT_TRUE(geom::point_in_unit({0.5, 0.5}, f));
  EXPECT_FALSE(geom::point_in_unit({2, 2}, f));
  EXPECT_TRUE(geom::point_in_unit({4, 2}, f));  // boundary counts as inside
  EXPECT_FALSE(geom::point_in_unit({5, 2}, f));
}

TEST(Measures, AreaAndCentroid) {
  const AreaUnit b = oracle::box("b", 1, 2, 3, 6);
  EXPECT_DOUBLE_EQ(geom::area(b), 8.0);
  const Point c = geom::centroid(b);
  EXPECT_NEAR(c.x, 2.0, 1e-12);
  EXPECT_NEAR(c.y, 4.0, 1e-12);

  EXPECT_DOUBLE_EQ(geom::area(framed_box()), 12.0);
  const Point fc = geom::centroid(framed_box());
  EXPECT_NEAR(fc.x, 2.0, 1e-12);
  EXPECT_NEAR(fc.y, 2.0, 1e-12);

  // L shape: two rectangles, 3x1 centred (1.5,0.5) and 1x2 centred (0.5,2)
  const Point lc = geom::centroid(l_shape());
  EXPECT_NEAR(lc.x, (3 * 1.5 + 2 * 0.5) / 5.0, 1e-12);
  EXPECT_NEAR(lc.y, (3 * 0.5 + 2 * 2.0) / 5.0, 1e-12);
}

TEST(Measures, ZeroAreaCentroidIsAnError) {
  AreaUnit flat;
  flat.name = "flat";
  flat.parts.push_back({{{0, 0}, {1, 0}, {2, 0}, {0, 0}}, {}});
  EXPECT_THROW(geom::centroid(flat), GeometryError);
}

TEST(Contiguity, RectangleFixturePairs) {
  const auto coll = oracle::rectangles();
  const auto& r = coll.units();
  EXPECT_TRUE(geom::queen_contiguous(r[0], r[1]));   // shared edge
  EXPECT_TRUE(geom::queen_contiguous(r[0], r[2]));   // corner at (2,2)
  EXPECT_TRUE(geom::queen_contiguous(r[1], r[2]));
  EXPECT_FALSE(geom::queen_contiguous(r[1], r[3]));  // 1 unit apart
  EXPECT_FALSE(geom::queen_contiguous(r[2], r[4]));  // 0.2 apart
  EXPECT_NEAR(geom::min_distance(r[1], r[3]), 1.0, 1e-12);
  EXPECT_NEAR(geom::min_distance(r[2], r[4]), 0.2, 1e-12);
  EXPECT_NEAR(geom::min_distance(r[0], r[4]), 1.0, 1e-12);
}

TEST(Contiguity, NestedUnitTouchesItsContainer) {
  const AreaUnit outer = oracle::box("outer", 0, 0, 10, 10);
  const AreaUnit inner = oracle::box("inner", 4, 4, 5, 5);
  EXPECT_DOUBLE_EQ(geom::min_distance(outer, inner), 0.0);
  EXPECT_TRUE(geom::queen_contiguous(outer, inner));
}

TEST(Contiguity, ToleranceGovernsNearTouching) {
  const AreaUnit a = oracle::box("a", 0, 0, 1, 1);
  const AreaUnit b = oracle::box("b", 1 + 1e-12, 0, 2, 1);
  const AreaUnit c = oracle::box("c", 1 + 1e-6, 0, 2, 1);
  EXPECT_TRUE(geom::queen_contiguous(a, b));
  EXPECT_FALSE(geom::queen_contiguous(a, c));
  EXPECT_TRUE(geom::queen_contiguous(a, c, 1e-5));
}

TEST(Knn, RectangleIslands) {
  const auto coll = oracle::rectangles();
  EXPECT_EQ(geom::knn_units(coll, "Rect4", 1), (std::vector<std::string>{"Rect2"}));
  EXPECT_EQ(geom::knn_units(coll, "Rect5", 1), (std::vector<std::string>{"Rect3"}));
  // Rect4: Rect2 at 1, Rect3 at hypot(1,1); Rect5: Rect3 at 0.2, Rect1 at 1
  EXPECT_EQ(geom::knn_units(coll, "Rect4", 2), (std::vector<std::string>{"Rect2", "Rect3"}));
  EXPECT_EQ(geom::knn_units(coll, "Rect5", 2), (std::vector<std::string>{"Rect3", "Rect1"}));
}

TEST(Knn, TiesFollowCollectionOrder) {
  std::vector<AreaUnit> units{oracle::box("mid", 2, 0, 3, 1), oracle::box("right", 4, 0, 5, 1),
                              oracle::box("left", 0, 0, 1, 1)};
  const AreaCollection coll(std::move(units));
  EXPECT_EQ(geom::knn_units(coll, "mid", 2), (std::vector<std::string>{"right", "left"}));
}

TEST(Knn, RejectsKOutsideRange) {
  const auto coll = oracle::rectangles();
  EXPECT_THROW(geom::knn_indices(coll, 0, 0), InputError);
  EXPECT_THROW(geom::knn_indices(coll, 0, 5), InputError);
  EXPECT_NO_THROW(geom::knn_indices(coll, 0, 4));
}

TEST(Knn, MatchesExhaustiveSearchOnRandomLayouts) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> jitter(0.05, 0.45);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<AreaUnit> units;
    for (int c = 0; c < 6; ++c)
      for (int r = 0; r < 4; ++r) {
        const double x0 = c + jitter(rng) * 0.5, y0 = r + jitter(rng) * 0.5;
        units.push_back(oracle::box("b" + std::to_string(c) + "_" + std::to_string(r), x0, y0,
                                    c + 1 - jitter(rng) * 0.5, r + 1 - jitter(rng) * 0.5));
      }
    const AreaCollection coll(std::move(units));
    for (std::size_t i = 0; i < coll.size(); i += 5)
      for (std::size_t k : {1u, 3u}) EXPECT_EQ(geom::knn_indices(coll, i, k), oracle::brute_knn(coll, i, k));
  }
}

TEST(Hull, MatchesGiftWrapping) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Point> pts(5 + trial);
    for (auto& p : pts) p = {std::round(u(rng) * 4) / 4, std::round(u(rng) * 4) / 4};
    Ring h = geom::convex_hull(pts);
    ASSERT_EQ(h.front(), h.back());
    h.pop_back();
    auto expect = oracle::gift_wrap(pts);
    std::sort(h.begin(), h.end());
    std::sort(expect.begin(), expect.end());
    EXPECT_EQ(h, expect) << "trial " << trial;
  }
}

TEST(Hull, IsCounterClockwise) {
  const Ring h = geom::convex_hull({{0, 0}, {2, 0}, {1, 1}, {2, 2}, {0, 2}});
  EXPECT_GT(geom::signed_area(h), 0.0);
  EXPECT_EQ(h.size(), 5u);
}

TEST(ConcaveOutline, InfiniteConcavityIsTheConvexHull) {
  const AreaUnit l = l_shape();
  std::vector<Point> verts(l.parts[0].outer.begin(), l.parts[0].outer.end() - 1);
  EXPECT_EQ(geom::concave_outline(l, std::numeric_limits<double>::infinity()), geom::convex_hull(verts));
}

TEST(ConcaveOutline, EnclosesEveryVertex) {
  for (double concavity : {0.5, 1.0, 2.0, 5.0}) {
    for (const AreaUnit& u : {l_shape(), framed_box(), oracle::box("sq", 0, 0, 1, 1)}) {
      const Ring r = geom::concave_outline(u, concavity);
      ASSERT_GE(r.size(), 4u);
      EXPECT_EQ(r.front(), r.back());
      for (const auto& poly : u.parts)
        for (const auto& p : poly.outer) EXPECT_TRUE(geom::point_in_ring(p, r)) << u.name << " c=" << concavity;
      std::vector<Point> verts(u.parts[0].outer.begin(), u.parts[0].outer.end());
      EXPECT_LE(std::abs(geom::signed_area(r)), std::abs(geom::signed_area(geom::convex_hull(verts))) + 1e-9);
    }
  }
}

TEST(ConcaveOutline, DenselySampledLShapeHugsTheNotch) {
  // Sample the L boundary every 0.25 so the notch is resolvable.
  AreaUnit dense;
  dense.name = "dense";
  const std::vector<Point> corners{{0, 0}, {3, 0}, {3, 1}, {1, 1}, {1, 3}, {0, 3}, {0, 0}};
  Ring ring;
  for (std::size_t i = 0; i + 1 < corners.size(); ++i) {
    const Point a = corners[i], b = corners[i + 1];
    const int steps = static_cast<int>(std::round(geom::dist(a, b) / 0.25));
    for (int s = 0; s < steps; ++s) ring.push_back({a.x + (b.x - a.x) * s / steps, a.y + (b.y - a.y) * s / steps});
  }
  ring.push_back(ring.front());
  dense.parts.push_back({ring, {}});
  const double hull_area = std::abs(geom::signed_area(geom::concave_outline(dense, std::numeric_limits<double>::infinity())));
  const double tight_area = std::abs(geom::signed_area(geom::concave_outline(dense, 1.5)));
  EXPECT_NEAR(hull_area, 7.0, 1e-9);  // 3x3 square minus the far corner triangle
  EXPECT_LT(tight_area, hull_area - 0.5);
  EXPECT_GE(tight_area, 5.0 - 1e-9);
}

TEST(GeoJson, LoadsFixtureInFileOrder) {
  const auto coll = oracle::rectangles();
  ASSERT_EQ(coll.size(), 5u);
  EXPECT_EQ(coll.names(), (std::vector<std::string>{"Rect1", "Rect2", "Rect3", "Rect4", "Rect5"}));
  EXPECT_EQ(coll.position("Rect4"), 4);
  const BBox b = coll.bbox();
  EXPECT_EQ(b.xmin, 0.0);
  EXPECT_EQ(b.ymin, 0.0);
  EXPECT_EQ(b.xmax, 6.0);
  EXPECT_EQ(b.ymax, 4.0);
}

TEST(GeoJson, RoundTripsPolygonsHolesAndMultiPolygons) {
  std::vector<AreaUnit> units{framed_box(), l_shape()};
  units[1].parts.push_back({{{5, 5}, {6, 5}, {6, 6}, {5, 5}}, {}});
  for (auto& u : units) u.attrs["name"] = u.name;
  const AreaCollection coll(std::move(units));
  const auto text = to_geojson(coll).dump();
  const auto back = load_areas(text, "name");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].parts[0].holes.size(), 1u);
  EXPECT_EQ(back[1].parts.size(), 2u);
  EXPECT_EQ(back[1].parts[1].outer, coll[1].parts[1].outer);
  EXPECT_EQ(geometry_json(back[1])["type"], "MultiPolygon");
  EXPECT_EQ(geometry_json(back[0])["type"], "Polygon");
}

TEST(GeoJson, ClosesOpenRingsAndReadsNumericNames) {
  const std::string text = R"({"type":"FeatureCollection","features":[
    {"type":"Feature","properties":{"code":101},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1]]]}}]})";
  const auto coll = load_areas(text, "code");
  EXPECT_EQ(coll[0].name, "101");
  EXPECT_EQ(coll[0].parts[0].outer.size(), 4u);
  EXPECT_EQ(coll[0].parts[0].outer.front(), coll[0].parts[0].outer.back());
}

TEST(GeoJson, RejectsNonArealAndUnnamedFeatures) {
  const std::string point = R"({"type":"FeatureCollection","features":[
    {"type":"Feature","properties":{"name":"a"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}},
    {"type":"Feature","properties":{"name":"b"},"geometry":{"type":"Point","coordinates":[0,0]}}]})";
  try {
    load_areas(point, "name");
    FAIL() << "expected an error";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("feature 1"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("Point"), std::string::npos) << e.what();
  }

  const std::string unnamed = R"({"type":"FeatureCollection","features":[
    {"type":"Feature","properties":{},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}},
    {"type":"Feature","properties":{"name":""},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}}]})";
  try {
    load_areas(unnamed, "name");
    FAIL() << "expected an error";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find(": 0 1"), std::string::npos) << e.what();
  }

  EXPECT_THROW(load_areas(R"({"type":"Feature"})", "name"), InputError);
  EXPECT_THROW(load_areas("not json", "name"), InputError);
}

TEST(GeoJson, RejectsDuplicateNamesAndDegenerateRings) {
  const std::string dup = R"({"type":"FeatureCollection","features":[
    {"type":"Feature","properties":{"name":"a"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}},
    {"type":"Feature","properties":{"name":"a"},"geometry":{"type":"Polygon","coordinates":[[[2,0],[3,0],[3,1],[2,0]]]}}]})";
  EXPECT_THROW(load_areas(dup, "name"), InputError);
  const std::string thin = R"({"type":"FeatureCollection","features":[
    {"type":"Feature","properties":{"name":"a"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[0,0]]]}}]})";
  EXPECT_THROW(load_areas(thin, "name"), InputError);
}

TEST(Collection, SubsetKeepsOrderAndNames) {
  const auto coll = oracle::rectangles();
  const auto sub = coll.subset({0, 2, 4});
  EXPECT_EQ(sub.names(), (std::vector<std::string>{"Rect1", "Rect3", "Rect5"}));
  EXPECT_EQ(sub.position("Rect5"), 3);
  EXPECT_FALSE(sub.index_of("Rect2").has_value());
}
