#pragma once

#include <optional>

namespace bn {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Segment {
  Point a;
  Point b;

  double length() const;
  /// Point at parameter t along the segment: a + t*(b-a), t in [0,1].
  Point at(double t) const;
};

/// Parameters of a point intersection, t1 along the first segment and t2
/// along the second, both in [0,1].
struct CrossParams {
  double t1 = 0.0;
  double t2 = 0.0;
};

struct IntersectResult {
  /// Set when the segments meet in a single point (including endpoint
  /// touches). Empty for disjoint, parallel, or collinear pairs.
  std::optional<CrossParams> params;
  /// Collinear segments with overlapping extents. params stays empty.
  bool collinear_overlap = false;
};

IntersectResult segments_intersect(const Segment& s1, const Segment& s2);

/// Interior angle in degrees, in (0, 180), between two segments that share
/// an endpoint equal to `vertex` (within 1e-9). Throws
/// Error(invalid_argument) when either segment does not touch the vertex.
double angle_between_deg(const Segment& s1, const Segment& s2, const Point& vertex);

double point_segment_distance(const Point& p, const Segment& s);

/// Minimum distance between the two segments as point sets; 0 when they
/// intersect.
double segment_distance(const Segment& s1, const Segment& s2);

}  // namespace bn
