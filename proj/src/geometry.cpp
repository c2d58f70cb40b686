#include "geometry.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace bn {

namespace {

double cross(double ax, double ay, double bx, double by) {
  return ax * by - ay * bx;
}

constexpr double kVertexTol = 1e-9;

bool same_point(const Point& p, const Point& q) {
  return std::abs(p.x - q.x) <= kVertexTol && std::abs(p.y - q.y) <= kVertexTol;
}

}  // namespace

double Segment::length() const {
  return std::hypot(b.x - a.x, b.y - a.y);
}

Point Segment::at(double t) const {
  return {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
}

IntersectResult segments_intersect(const Segment& s1, const Segment& s2) {
  IntersectResult res;
  const double d1x = s1.b.x - s1.a.x, d1y = s1.b.y - s1.a.y;
  const double d2x = s2.b.x - s2.a.x, d2y = s2.b.y - s2.a.y;
  const double rx = s2.a.x - s1.a.x, ry = s2.a.y - s1.a.y;

  const double denom = cross(d1x, d1y, d2x, d2y);
  const double scale = std::hypot(d1x, d1y) * std::hypot(d2x, d2y);
  if (std::abs(denom) <= 1e-12 * scale) {
    // Parallel. Check for a collinear overlap.
    const double off = cross(d1x, d1y, rx, ry);
    if (std::abs(off) <= 1e-9 * std::max(1.0, scale)) {
      const double len2 = d1x * d1x + d1y * d1y;
      if (len2 > 0.0) {
        double ta = (rx * d1x + ry * d1y) / len2;
        double tb = ((s2.b.x - s1.a.x) * d1x + (s2.b.y - s1.a.y) * d1y) / len2;
        if (ta > tb) std::swap(ta, tb);
        res.collinear_overlap = tb >= 0.0 && ta <= 1.0;
      }
    }
    return res;
  }

  const double t1 = cross(rx, ry, d2x, d2y) / denom;
  const double t2 = cross(rx, ry, d1x, d1y) / denom;
  if (t1 >= 0.0 && t1 <= 1.0 && t2 >= 0.0 && t2 <= 1.0) {
    res.params = CrossParams{t1, t2};
  }
  return res;
}

double angle_between_deg(const Segment& s1, const Segment& s2, const Point& vertex) {
  const Point* far1 = nullptr;
  const Point* far2 = nullptr;
  if (same_point(s1.a, vertex)) {
    far1 = &s1.b;
  } else if (same_point(s1.b, vertex)) {
    far1 = &s1.a;
  }
  if (same_point(s2.a, vertex)) {
    far2 = &s2.b;
  } else if (same_point(s2.b, vertex)) {
    far2 = &s2.a;
  }
  if (far1 == nullptr || far2 == nullptr) {
    fail(ErrorCode::invalid_argument,
         "angle_between_deg: segments do not share the given vertex");
  }
  const double ux = far1->x - vertex.x, uy = far1->y - vertex.y;
  const double vx = far2->x - vertex.x, vy = far2->y - vertex.y;
  const double dot = ux * vx + uy * vy;
  const double crs = std::abs(cross(ux, uy, vx, vy));
  return std::atan2(crs, dot) * 180.0 / M_PI;
}

double point_segment_distance(const Point& p, const Segment& s) {
  const double dx = s.b.x - s.a.x, dy = s.b.y - s.a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) {
    t = ((p.x - s.a.x) * dx + (p.y - s.a.y) * dy) / len2;
    t = std::clamp(t, 0.0, 1.0);
  }
  const Point q = s.at(t);
  return std::hypot(p.x - q.x, p.y - q.y);
}

double segment_distance(const Segment& s1, const Segment& s2) {
  const IntersectResult r = segments_intersect(s1, s2);
  if (r.params.has_value() || r.collinear_overlap) return 0.0;
  double d = point_segment_distance(s1.a, s2);
  d = std::min(d, point_segment_distance(s1.b, s2));
  d = std::min(d, point_segment_distance(s2.a, s1));
  d = std::min(d, point_segment_distance(s2.b, s1));
  return d;
}

}  // namespace bn
