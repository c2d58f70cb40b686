#include "stimulus.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "errors.hpp"

namespace bn {

namespace {

constexpr int kMaxAttempts = 10000;
// Generation keeps extra slack above the verified clearance so float noise
// can never flip a constraint.
constexpr double kGenClearance = 1.5;
constexpr double kRangeTol = 1e-6;
// Sampled angles, crossing parameters and lengths stay this far inside their
// closed ranges; re-measured values (1e-12-scale roundoff) then never fall
// outside them.
constexpr double kGenMargin = 1e-6;
constexpr double kGenMinLen = kMinSegmentLength + kGenMargin;

struct GenBudget {
  int remaining = kMaxAttempts;
  Task task;
  int label;

  void spend(const char* stage) {
    if (--remaining < 0) {
      fail(ErrorCode::generation_failed,
           std::string("gen_spec: attempt budget exhausted at stage '") + stage +
               "' for task " + task_name(task) + " label " + std::to_string(label));
    }
  }
};

Point sample_point(Xoshiro256ss& rng, const Rect& r) {
  return {rng.uniform(r.lo_x, r.hi_x), rng.uniform(r.lo_y, r.hi_y)};
}

/// Largest t >= 0 such that p + t*(ux,uy) stays inside the canvas bounds.
double max_extent(const Point& p, double ux, double uy) {
  double t = std::numeric_limits<double>::infinity();
  if (ux > 0) {
    t = std::min(t, (kCoordHi - p.x) / ux);
  } else if (ux < 0) {
    t = std::min(t, (kCoordLo - p.x) / ux);
  }
  if (uy > 0) {
    t = std::min(t, (kCoordHi - p.y) / uy);
  } else if (uy < 0) {
    t = std::min(t, (kCoordLo - p.y) / uy);
  }
  return std::max(t, 0.0);
}

double min_distance_to_all(const Segment& s, const std::vector<Segment>& others) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& o : others) d = std::min(d, segment_distance(s, o));
  return d;
}

/// Two segments sharing a vertex with an opening angle in [lo_deg, hi_deg].
std::vector<Segment> sample_angle_figure(Xoshiro256ss& rng, double lo_deg,
                                         double hi_deg, GenBudget& budget,
                                         double* angle_out) {
  for (;;) {
    budget.spend("angle");
    const Point v = sample_point(rng, Rect{});
    const double theta1 = rng.uniform(0.0, 2.0 * M_PI);
    const double alpha = rng.uniform(lo_deg + kGenMargin, hi_deg - kGenMargin);
    const double sign = rng.next_bool() ? 1.0 : -1.0;
    const double theta2 = theta1 + sign * alpha * M_PI / 180.0;

    const double u1x = std::cos(theta1), u1y = std::sin(theta1);
    const double u2x = std::cos(theta2), u2y = std::sin(theta2);
    const double m1 = max_extent(v, u1x, u1y);
    const double m2 = max_extent(v, u2x, u2y);
    if (m1 < kGenMinLen || m2 < kGenMinLen) continue;

    const double l1 = rng.uniform(kGenMinLen, m1);
    const double l2 = rng.uniform(kGenMinLen, m2);
    *angle_out = alpha;
    return {Segment{v, {v.x + l1 * u1x, v.y + l1 * u1y}},
            Segment{v, {v.x + l2 * u2x, v.y + l2 * u2y}}};
  }
}

/// Two segments crossing at parameters t1, t2, both in [0.2, 0.8].
std::vector<Segment> sample_crossing_pair(Xoshiro256ss& rng, GenBudget& budget,
                                          CrossParams* params_out) {
  for (;;) {
    budget.spend("crossing");
    const Segment s1 = [&] {
      for (;;) {
        const Point p = sample_point(rng, Rect{});
        const Point q = sample_point(rng, Rect{});
        const Segment s{p, q};
        if (s.length() >= kGenMinLen) return s;
        budget.spend("crossing");
      }
    }();
    const double t1 = rng.uniform(kCrossParamLo + kGenMargin, kCrossParamHi - kGenMargin);
    const Point cp = s1.at(t1);

    const double theta = rng.uniform(0.0, 2.0 * M_PI);
    const double ux = std::cos(theta), uy = std::sin(theta);
    const double len1 = s1.length();
    const double d1x = (s1.b.x - s1.a.x) / len1, d1y = (s1.b.y - s1.a.y) / len1;
    // Reject near-parallel second segments; the crossing would be numerically
    // ill-conditioned and visually ambiguous.
    if (std::abs(d1x * uy - d1y * ux) < 0.05) continue;

    const double t2 = rng.uniform(kCrossParamLo + kGenMargin, kCrossParamHi - kGenMargin);
    const double m_neg = max_extent(cp, -ux, -uy);
    const double m_pos = max_extent(cp, ux, uy);
    const double l_max = std::min(m_neg / t2, m_pos / (1.0 - t2));
    if (l_max < kGenMinLen) continue;

    const double l2 = rng.uniform(kGenMinLen, l_max);
    const Point a2{cp.x - t2 * l2 * ux, cp.y - t2 * l2 * uy};
    const Point b2{cp.x + (1.0 - t2) * l2 * ux, cp.y + (1.0 - t2) * l2 * uy};
    *params_out = CrossParams{t1, t2};
    return {s1, Segment{a2, b2}};
  }
}

std::vector<Segment> sample_noncrossing_pair(Xoshiro256ss& rng, GenBudget& budget) {
  for (;;) {
    budget.spend("noncrossing");
    const Point p1 = sample_point(rng, Rect{});
    const Point q1 = sample_point(rng, Rect{});
    const Segment s1{p1, q1};
    if (s1.length() < kMinSegmentLength) continue;
    const Point p2 = sample_point(rng, Rect{});
    const Point q2 = sample_point(rng, Rect{});
    const Segment s2{p2, q2};
    if (s2.length() < kMinSegmentLength) continue;
    if (segment_distance(s1, s2) >= kGenClearance) return {s1, s2};
  }
}

/// Closed triangle A->B->C->A with sides >= 13 and all interior angles in
/// [20, 160] degrees.
std::vector<Segment> sample_triangle(Xoshiro256ss& rng, GenBudget& budget,
                                     std::array<double, 3>* angles_out) {
  for (;;) {
    budget.spend("triangle");
    const Point a = sample_point(rng, Rect{});
    const Point b = sample_point(rng, Rect{});
    const Point c = sample_point(rng, Rect{});
    const Segment ab{a, b}, bc{b, c}, ca{c, a};
    if (ab.length() < kMinSegmentLength || bc.length() < kMinSegmentLength ||
        ca.length() < kMinSegmentLength) {
      continue;
    }
    const double at_a = angle_between_deg(ab, ca, a);
    const double at_b = angle_between_deg(ab, bc, b);
    const double at_c = angle_between_deg(bc, ca, c);
    if (at_a < kAngleLo || at_a > kAngleHi || at_b < kAngleLo ||
        at_b > kAngleHi || at_c < kAngleLo || at_c > kAngleHi) {
      continue;
    }
    *angles_out = {at_a, at_b, at_c};
    return {ab, bc, ca};
  }
}

bool in_canvas(const Point& p) {
  return p.x >= kCoordLo - kRangeTol && p.x <= kCoordHi + kRangeTol &&
         p.y >= kCoordLo - kRangeTol && p.y <= kCoordHi + kRangeTol;
}

bool find_shared_vertex(const Segment& s1, const Segment& s2, Point* vertex) {
  const Point* c1[2] = {&s1.a, &s1.b};
  const Point* c2[2] = {&s2.a, &s2.b};
  for (const Point* p : c1) {
    for (const Point* q : c2) {
      if (std::abs(p->x - q->x) <= 1e-9 && std::abs(p->y - q->y) <= 1e-9) {
        *vertex = *p;
        return true;
      }
    }
  }
  return false;
}

int expected_segment_count(Task task, int label) {
  switch (task) {
    case Task::ang_crs:
    case Task::blt_srp:
    case Task::crs_ncrs:
      return 2;
    case Task::ang_crs_ln:
    case Task::blt_srp_ln:
      return 3;
    case Task::ang_tri_ln:
      return label == 0 ? 3 : 4;
  }
  return 0;
}

void check_angle_figure(const StimulusSpec& spec, double lo, double hi,
                        bool blunt_sharp, std::vector<std::string>* out) {
  Point vertex;
  if (!find_shared_vertex(spec.segments[0], spec.segments[1], &vertex)) {
    if (out) out->push_back("segments do not share a vertex");
    return;
  }
  const double angle =
      angle_between_deg(spec.segments[0], spec.segments[1], vertex);
  if (angle < lo - kRangeTol || angle > hi + kRangeTol) {
    if (out) {
      out->push_back(blunt_sharp ? "angle outside blunt/sharp ranges"
                                 : "angle outside 20-160 range");
    }
  }
}

void check_crossing_pair(const Segment& s1, const Segment& s2,
                         std::vector<std::string>* out) {
  const IntersectResult r = segments_intersect(s1, s2);
  if (!r.params.has_value()) {
    if (out) out->push_back("segments do not cross");
    return;
  }
  for (const double t : {r.params->t1, r.params->t2}) {
    if (t < kCrossParamLo - kRangeTol) {
      if (out) out->push_back("crossing parameter below 0.2");
    } else if (t > kCrossParamHi + kRangeTol) {
      if (out) out->push_back("crossing parameter above 0.8");
    }
  }
}

void check_noncrossing_pair(const Segment& s1, const Segment& s2,
                            std::vector<std::string>* out) {
  const IntersectResult r = segments_intersect(s1, s2);
  if (r.params.has_value() || r.collinear_overlap) {
    if (out) out->push_back("segments cross");
    return;
  }
  if (segment_distance(s1, s2) < kMinClearance - kRangeTol) {
    if (out) out->push_back("non-crossing pair clearance below 1 px");
  }
}

void check_triangle(const StimulusSpec& spec, std::vector<std::string>* out) {
  const Segment& ab = spec.segments[0];
  const Segment& bc = spec.segments[1];
  const Segment& ca = spec.segments[2];
  const auto closed = [](const Point& p, const Point& q) {
    return std::abs(p.x - q.x) <= 1e-9 && std::abs(p.y - q.y) <= 1e-9;
  };
  if (!closed(ab.b, bc.a) || !closed(bc.b, ca.a) || !closed(ca.b, ab.a)) {
    if (out) out->push_back("triangle not closed");
    return;
  }
  const double at_a = angle_between_deg(ab, ca, ab.a);
  const double at_b = angle_between_deg(ab, bc, ab.b);
  const double at_c = angle_between_deg(bc, ca, bc.b);
  for (const double ang : {at_a, at_b, at_c}) {
    if (ang < kAngleLo - kRangeTol || ang > kAngleHi + kRangeTol) {
      if (out) out->push_back("triangle angle outside 20-160 range");
      return;
    }
  }
}

void check_distractor(const StimulusSpec& spec, size_t figure_count,
                      std::vector<std::string>* out) {
  const Segment& d = spec.segments.back();
  for (size_t i = 0; i < figure_count; ++i) {
    const IntersectResult r = segments_intersect(d, spec.segments[i]);
    if (r.params.has_value() || r.collinear_overlap) {
      if (out) out->push_back("distractor crosses another segment");
      return;
    }
    if (segment_distance(d, spec.segments[i]) < kMinClearance - kRangeTol) {
      if (out) out->push_back("distractor clearance below 1 px");
      return;
    }
  }
}

// --- Wu anti-aliased line into a coverage buffer -------------------------

void plot(std::array<double, kPixelCount>& cov, int x, int y, double c) {
  if (x < 0 || x >= kCanvasSide || y < 0 || y >= kCanvasSide) return;
  double& cell = cov[y * kCanvasSide + x];
  cell = std::max(cell, c);
}

double fpart(double x) { return x - std::floor(x); }
double rfpart(double x) { return 1.0 - fpart(x); }

void wu_line(std::array<double, kPixelCount>& cov, double x0, double y0,
             double x1, double y1) {
  const bool steep = std::abs(y1 - y0) > std::abs(x1 - x0);
  if (steep) {
    std::swap(x0, y0);
    std::swap(x1, y1);
  }
  if (x0 > x1) {
    std::swap(x0, x1);
    std::swap(y0, y1);
  }
  const double dx = x1 - x0;
  const double dy = y1 - y0;
  const double gradient = dx == 0.0 ? 1.0 : dy / dx;

  // First endpoint.
  double xend = std::round(x0);
  double yend = y0 + gradient * (xend - x0);
  double xgap = rfpart(x0 + 0.5);
  const int xpxl1 = static_cast<int>(xend);
  const int ypxl1 = static_cast<int>(std::floor(yend));
  if (steep) {
    plot(cov, ypxl1, xpxl1, rfpart(yend) * xgap);
    plot(cov, ypxl1 + 1, xpxl1, fpart(yend) * xgap);
  } else {
    plot(cov, xpxl1, ypxl1, rfpart(yend) * xgap);
    plot(cov, xpxl1, ypxl1 + 1, fpart(yend) * xgap);
  }
  double intery = yend + gradient;

  // Second endpoint.
  xend = std::round(x1);
  yend = y1 + gradient * (xend - x1);
  xgap = fpart(x1 + 0.5);
  const int xpxl2 = static_cast<int>(xend);
  const int ypxl2 = static_cast<int>(std::floor(yend));
  if (steep) {
    plot(cov, ypxl2, xpxl2, rfpart(yend) * xgap);
    plot(cov, ypxl2 + 1, xpxl2, fpart(yend) * xgap);
  } else {
    plot(cov, xpxl2, ypxl2, rfpart(yend) * xgap);
    plot(cov, xpxl2, ypxl2 + 1, fpart(yend) * xgap);
  }

  for (int x = xpxl1 + 1; x < xpxl2; ++x) {
    const int iy = static_cast<int>(std::floor(intery));
    if (steep) {
      plot(cov, iy, x, rfpart(intery));
      plot(cov, iy + 1, x, fpart(intery));
    } else {
      plot(cov, x, iy, rfpart(intery));
      plot(cov, x, iy + 1, fpart(intery));
    }
    intery += gradient;
  }
}

}  // namespace

const char* task_name(Task task) {
  switch (task) {
    case Task::ang_crs: return "ang_crs";
    case Task::ang_crs_ln: return "ang_crs_ln";
    case Task::ang_tri_ln: return "ang_tri_ln";
    case Task::blt_srp: return "blt_srp";
    case Task::blt_srp_ln: return "blt_srp_ln";
    case Task::crs_ncrs: return "crs_ncrs";
  }
  return "unknown";
}

std::optional<Task> task_from_name(const std::string& name) {
  for (Task t : kAllTasks) {
    if (name == task_name(t)) return t;
  }
  return std::nullopt;
}

Segment sample_segment(Xoshiro256ss& rng, double length_min, const Rect& region) {
  const double max_chord =
      std::hypot(region.hi_x - region.lo_x, region.hi_y - region.lo_y);
  if (length_min > max_chord) {
    fail(ErrorCode::generation_failed,
         "sample_segment: requested minimum length " + std::to_string(length_min) +
             " exceeds the region's maximal chord " + std::to_string(max_chord));
  }
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const Point p = sample_point(rng, region);
    const Point q = sample_point(rng, region);
    const Segment s{p, q};
    if (s.length() >= length_min) return s;
  }
  fail(ErrorCode::generation_failed,
       "sample_segment: attempt budget exhausted (region too constrained)");
}

StimulusSpec gen_spec(Task task, int label, Xoshiro256ss& rng) {
  if (label != 0 && label != 1) {
    fail(ErrorCode::invalid_argument, "gen_spec: label must be 0 or 1");
  }
  GenBudget budget{kMaxAttempts, task, label};
  StimulusSpec spec;
  spec.task = task;
  spec.label = label;
  spec.polarity = rng.next_bool() ? Polarity::black_on_light : Polarity::white_on_dark;

  const auto gen_figure = [&] {
    switch (task) {
      case Task::ang_crs:
      case Task::ang_crs_ln:
        if (label == 0) {
          double angle = 0.0;
          spec.segments = sample_angle_figure(rng, kAngleLo, kAngleHi, budget, &angle);
          spec.angle_deg = angle;
        } else {
          CrossParams params;
          spec.segments = sample_crossing_pair(rng, budget, &params);
          spec.crossing = params;
        }
        break;
      case Task::ang_tri_ln:
        if (label == 0) {
          double angle = 0.0;
          spec.segments = sample_angle_figure(rng, kAngleLo, kAngleHi, budget, &angle);
          spec.angle_deg = angle;
        } else {
          spec.segments = sample_triangle(rng, budget, &spec.triangle_angles);
        }
        break;
      case Task::blt_srp:
      case Task::blt_srp_ln: {
        double angle = 0.0;
        spec.segments = label == 0
            ? sample_angle_figure(rng, kBluntLo, kBluntHi, budget, &angle)
            : sample_angle_figure(rng, kSharpLo, kSharpHi, budget, &angle);
        spec.angle_deg = angle;
        break;
      }
      case Task::crs_ncrs:
        if (label == 0) {
          CrossParams params;
          spec.segments = sample_crossing_pair(rng, budget, &params);
          spec.crossing = params;
        } else {
          spec.segments = sample_noncrossing_pair(rng, budget);
        }
        break;
    }
  };

  const bool with_distractor = task == Task::ang_crs_ln ||
                               task == Task::ang_tri_ln ||
                               task == Task::blt_srp_ln;
  for (;;) {
    gen_figure();
    if (!with_distractor) break;
    // Bounded sub-budget: a cramped figure may leave no room, in which case
    // the whole figure is redrawn.
    bool placed = false;
    for (int i = 0; i < 200 && !placed; ++i) {
      budget.spend("distractor");
      const Point p = sample_point(rng, Rect{});
      const Point q = sample_point(rng, Rect{});
      const Segment s{p, q};
      if (s.length() < kMinSegmentLength) continue;
      if (min_distance_to_all(s, spec.segments) >= kGenClearance) {
        spec.segments.push_back(s);
        placed = true;
      }
    }
    if (placed) break;
  }
  return spec;
}

bool verify_spec(const StimulusSpec& spec, std::vector<std::string>* violations) {
  std::vector<std::string> local;
  std::vector<std::string>* out = violations ? violations : &local;
  const size_t before = out->size();

  if (spec.label != 0 && spec.label != 1) {
    out->push_back("label out of range");
    return false;
  }
  const int expected = expected_segment_count(spec.task, spec.label);
  if (static_cast<int>(spec.segments.size()) != expected) {
    out->push_back("wrong number of segments");
    return false;
  }

  for (const Segment& s : spec.segments) {
    if (!in_canvas(s.a) || !in_canvas(s.b)) {
      out->push_back("endpoint outside canvas margin");
      break;
    }
  }
  for (const Segment& s : spec.segments) {
    if (s.length() < kMinSegmentLength - kRangeTol) {
      out->push_back("segment shorter than minimum length");
      break;
    }
  }

  switch (spec.task) {
    case Task::ang_crs:
    case Task::ang_crs_ln:
      if (spec.label == 0) {
        check_angle_figure(spec, kAngleLo, kAngleHi, false, out);
      } else {
        check_crossing_pair(spec.segments[0], spec.segments[1], out);
      }
      break;
    case Task::ang_tri_ln:
      if (spec.label == 0) {
        check_angle_figure(spec, kAngleLo, kAngleHi, false, out);
      } else {
        check_triangle(spec, out);
      }
      break;
    case Task::blt_srp:
    case Task::blt_srp_ln:
      if (spec.label == 0) {
        check_angle_figure(spec, kBluntLo, kBluntHi, true, out);
      } else {
        check_angle_figure(spec, kSharpLo, kSharpHi, true, out);
      }
      break;
    case Task::crs_ncrs:
      if (spec.label == 0) {
        check_crossing_pair(spec.segments[0], spec.segments[1], out);
      } else {
        check_noncrossing_pair(spec.segments[0], spec.segments[1], out);
      }
      break;
  }

  const bool with_distractor = spec.task == Task::ang_crs_ln ||
                               spec.task == Task::ang_tri_ln ||
                               spec.task == Task::blt_srp_ln;
  if (with_distractor) {
    check_distractor(spec, spec.segments.size() - 1, out);
  }
  return out->size() == before;
}

Image rasterize(const StimulusSpec& spec, Xoshiro256ss& rng) {
  for (const Segment& s : spec.segments) {
    if (!in_canvas(s.a) || !in_canvas(s.b)) {
      fail(ErrorCode::invalid_argument,
           "rasterize: segment endpoint outside the canvas margin");
    }
  }

  Image img;
  const bool dark = spec.polarity == Polarity::white_on_dark;
  const double bg_lo = dark ? kDarkBgLo : kLightBgLo;
  const double bg_hi = dark ? kDarkBgHi : kLightBgHi;
  for (double& px : img.pixels) px = rng.uniform(bg_lo, bg_hi);

  std::array<double, kPixelCount> cov{};
  for (const Segment& s : spec.segments) {
    wu_line(cov, s.a.x, s.a.y, s.b.x, s.b.y);
  }

  const double ink = dark ? 1.0 : 0.0;
  for (int i = 0; i < kPixelCount; ++i) {
    const double v = img.pixels[i] * (1.0 - cov[i]) + ink * cov[i];
    img.pixels[i] = std::clamp(v, 0.0, 1.0);
  }
  return img;
}

}  // namespace bn
