#include "geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <utility>

#include "errors.hpp"
#include "rng.hpp"

using namespace bn;

TEST(SegmentTest, LengthOfCornerToCornerDiagonal) {
  // sqrt(29^2 + 29^2) = 29*sqrt(2)
  const Segment s{{1.0, 1.0}, {30.0, 30.0}};
  EXPECT_NEAR(s.length(), 29.0 * std::sqrt(2.0), 1e-12);
  EXPECT_GE(s.length(), 13.0);
}

TEST(SegmentTest, PointAtParameter) {
  const Segment s{{2.0, 4.0}, {10.0, 12.0}};
  const Point mid = s.at(0.5);
  EXPECT_DOUBLE_EQ(mid.x, 6.0);
  EXPECT_DOUBLE_EQ(mid.y, 8.0);
}

TEST(IntersectTest, PerpendicularCrossAtMidpoints) {
  const Segment s1{{5.0, 16.0}, {27.0, 16.0}};
  const Segment s2{{16.0, 5.0}, {16.0, 27.0}};
  const auto r = segments_intersect(s1, s2);
  ASSERT_TRUE(r.params.has_value());
  EXPECT_NEAR(r.params->t1, 0.5, 1e-12);
  EXPECT_NEAR(r.params->t2, 0.5, 1e-12);
}

TEST(IntersectTest, ParallelSegmentsDoNotIntersect) {
  const Segment s1{{1.0, 1.0}, {10.0, 1.0}};
  const Segment s2{{1.0, 2.0}, {10.0, 2.0}};
  const auto r = segments_intersect(s1, s2);
  EXPECT_FALSE(r.params.has_value());
  EXPECT_FALSE(r.collinear_overlap);
}

TEST(IntersectTest, DiagonalCrossSolvedByLinearSystem) {
  // Solving the 2x2 system by hand: the segments meet at (12,12), which is
  // halfway along both.
  const Segment s1{{2.0, 2.0}, {22.0, 22.0}};
  const Segment s2{{2.0, 22.0}, {22.0, 2.0}};
  const auto r = segments_intersect(s1, s2);
  ASSERT_TRUE(r.params.has_value());
  EXPECT_NEAR(r.params->t1, 0.5, 1e-12);
  EXPECT_NEAR(r.params->t2, 0.5, 1e-12);
}

TEST(IntersectTest, CollinearOverlapIsFlaggedWithoutParams) {
  const Segment s1{{1.0, 1.0}, {10.0, 1.0}};
  const Segment s2{{5.0, 1.0}, {15.0, 1.0}};
  const auto r = segments_intersect(s1, s2);
  EXPECT_FALSE(r.params.has_value());
  EXPECT_TRUE(r.collinear_overlap);
}

TEST(IntersectTest, CollinearDisjointIsNotFlagged) {
  const Segment s1{{1.0, 1.0}, {5.0, 1.0}};
  const Segment s2{{7.0, 1.0}, {15.0, 1.0}};
  const auto r = segments_intersect(s1, s2);
  EXPECT_FALSE(r.params.has_value());
  EXPECT_FALSE(r.collinear_overlap);
}

TEST(IntersectTest, EndpointTouchReportsBoundaryParameters) {
  const Segment s1{{2.0, 2.0}, {10.0, 2.0}};
  const Segment s2{{10.0, 2.0}, {15.0, 9.0}};
  const auto r = segments_intersect(s1, s2);
  ASSERT_TRUE(r.params.has_value());
  EXPECT_NEAR(r.params->t1, 1.0, 1e-12);
  EXPECT_NEAR(r.params->t2, 0.0, 1e-12);
}

TEST(AngleTest, PerpendicularArmsGive90Degrees) {
  const Point v{10.0, 10.0};
  const Segment s1{v, {25.0, 10.0}};
  const Segment s2{v, {10.0, 25.0}};
  EXPECT_NEAR(angle_between_deg(s1, s2, v), 90.0, 1e-12);
}

TEST(AngleTest, SixtyDegreeDotProductCase) {
  const Point v{5.0, 5.0};
  const double r = 20.0;
  const Segment s1{v, {5.0 + r, 5.0}};
  const Segment s2{v, {5.0 + r * std::cos(M_PI / 3.0), 5.0 + r * std::sin(M_PI / 3.0)}};
  EXPECT_NEAR(angle_between_deg(s1, s2, v), 60.0, 1e-9);
}

TEST(AngleTest, NearlyStraightArmsApproach180) {
  // arccos of the normalized dot product, computed independently.
  const Point v{0.0, 0.0};
  const Segment s1{v, {1.0, 0.0}};
  const Segment s2{v, {-1.0, 0.0001}};
  const double expected =
      std::acos(-1.0 / std::sqrt(1.0 + 1e-8)) * 180.0 / M_PI;
  const double angle = angle_between_deg(s1, s2, v);
  EXPECT_NEAR(angle, expected, 1e-9);
  EXPECT_GT(angle, 179.99);
  EXPECT_LT(angle, 180.0);
}

TEST(AngleTest, VertexOrderDoesNotMatter) {
  const Point v{12.0, 9.0};
  const Segment s1{{20.0, 3.0}, v};  // vertex as second endpoint
  const Segment s2{v, {4.0, 22.0}};
  EXPECT_NO_THROW(angle_between_deg(s1, s2, v));
}

TEST(AngleTest, MissingSharedVertexThrows) {
  const Segment s1{{1.0, 1.0}, {10.0, 1.0}};
  const Segment s2{{1.0, 2.0}, {10.0, 2.0}};
  EXPECT_THROW(angle_between_deg(s1, s2, Point{1.0, 1.0}), Error);
}

TEST(DistanceTest, PointToSegment) {
  const Segment s{{0.0, 0.0}, {10.0, 0.0}};
  EXPECT_NEAR(point_segment_distance({5.0, 3.0}, s), 3.0, 1e-12);
  EXPECT_NEAR(point_segment_distance({-4.0, 3.0}, s), 5.0, 1e-12);  // clamps to endpoint
}

TEST(DistanceTest, SegmentsAtUnitSeparation) {
  const Segment s1{{1.0, 1.0}, {10.0, 1.0}};
  const Segment s2{{1.0, 2.0}, {10.0, 2.0}};
  EXPECT_NEAR(segment_distance(s1, s2), 1.0, 1e-12);
}

TEST(DistanceTest, CrossingSegmentsHaveZeroDistance) {
  const Segment s1{{2.0, 2.0}, {22.0, 22.0}};
  const Segment s2{{2.0, 22.0}, {22.0, 2.0}};
  EXPECT_DOUBLE_EQ(segment_distance(s1, s2), 0.0);
}

namespace {

// Dense sampling along the segment, collecting every touched integer cell.
// Independent of the parametric solver.
std::set<std::pair<int, int>> supercover_cells(const Segment& s) {
  std::set<std::pair<int, int>> cells;
  const double len = s.length();
  const int steps = std::max(2, static_cast<int>(len / 0.05));
  for (int i = 0; i <= steps; ++i) {
    const Point p = s.at(static_cast<double>(i) / steps);
    cells.insert({static_cast<int>(std::floor(p.x)), static_cast<int>(std::floor(p.y))});
  }
  return cells;
}

bool share_neighborhood(const std::set<std::pair<int, int>>& a,
                        const std::set<std::pair<int, int>>& b) {
  for (const auto& [x, y] : a) {
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        if (b.count({x + dx, y + dy})) return true;
      }
    }
  }
  return false;
}

}  // namespace

TEST(IntersectProperty, ParametricCrossingsShareRasterizedCells) {
  Xoshiro256ss rng(20240817);
  int crossings = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Segment s1{{rng.uniform(1.0, 30.0), rng.uniform(1.0, 30.0)},
                     {rng.uniform(1.0, 30.0), rng.uniform(1.0, 30.0)}};
    const Segment s2{{rng.uniform(1.0, 30.0), rng.uniform(1.0, 30.0)},
                     {rng.uniform(1.0, 30.0), rng.uniform(1.0, 30.0)}};
    const auto r = segments_intersect(s1, s2);
    if (!r.params.has_value()) continue;
    ++crossings;
    const Point p1 = s1.at(r.params->t1);
    const Point p2 = s2.at(r.params->t2);
    EXPECT_NEAR(p1.x, p2.x, 1e-9);
    EXPECT_NEAR(p1.y, p2.y, 1e-9);
    EXPECT_TRUE(share_neighborhood(supercover_cells(s1), supercover_cells(s2)))
        << "trial " << trial;
  }
  // Random pairs in a square cross often; the property must not be vacuous.
  EXPECT_GT(crossings, 100);
}
