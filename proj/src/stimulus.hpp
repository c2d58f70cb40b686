#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "rng.hpp"

namespace bn {

// 32x32 canvas; continuous coordinates stay >= 1 px away from the border.
inline constexpr int kCanvasSide = 32;
inline constexpr int kPixelCount = kCanvasSide * kCanvasSide;
inline constexpr double kCoordLo = 1.0;
inline constexpr double kCoordHi = 31.0 - 1.0;
inline constexpr double kMinSegmentLength = 13.0;

// Figures in the "crossing" classes must cross between 20% and 80% along
// each segment; distractors and non-crossing pairs must keep at least this
// clearance so anti-aliased renders never touch.
inline constexpr double kCrossParamLo = 0.2;
inline constexpr double kCrossParamHi = 0.8;
inline constexpr double kMinClearance = 1.0;

// Angle ranges in degrees.
inline constexpr double kAngleLo = 20.0;
inline constexpr double kAngleHi = 160.0;
inline constexpr double kBluntLo = 100.0;
inline constexpr double kBluntHi = 160.0;
inline constexpr double kSharpLo = 20.0;
inline constexpr double kSharpHi = 80.0;

// Background noise bands. Full ink intensity is 1.0 (white on dark) or 0.0
// (black on light), leaving an intensity gap of at least 0.85 to the
// foreground.
inline constexpr double kDarkBgLo = 0.0;
inline constexpr double kDarkBgHi = 0.15;
inline constexpr double kLightBgLo = 0.85;
inline constexpr double kLightBgHi = 1.0;

enum class Task : uint8_t {
  ang_crs = 0,
  ang_crs_ln = 1,
  ang_tri_ln = 2,
  blt_srp = 3,
  blt_srp_ln = 4,
  crs_ncrs = 5,
};

inline constexpr int kTaskCount = 6;
inline constexpr std::array<Task, kTaskCount> kAllTasks = {
    Task::ang_crs, Task::ang_crs_ln, Task::ang_tri_ln,
    Task::blt_srp, Task::blt_srp_ln, Task::crs_ncrs};

const char* task_name(Task task);
std::optional<Task> task_from_name(const std::string& name);

enum class Polarity : uint8_t {
  white_on_dark = 0,
  black_on_light = 1,
};

struct Rect {
  double lo_x = kCoordLo, lo_y = kCoordLo;
  double hi_x = kCoordHi, hi_y = kCoordHi;
};

/// Exact vector geometry of one stimulus, generated before rasterization and
/// independently checkable by verify_spec.
struct StimulusSpec {
  Task task = Task::ang_crs;
  int label = 0;
  std::vector<Segment> segments;
  Polarity polarity = Polarity::white_on_dark;

  // Figure metadata recorded at generation time.
  std::optional<double> angle_deg;           // vertex angle of an angle figure
  std::array<double, 3> triangle_angles{};   // interior angles (triangle figures)
  std::optional<CrossParams> crossing;       // parameters of the crossing pair
};

struct Image {
  std::array<double, kPixelCount> pixels{};  // row-major, values in [0,1]
  double& at(int x, int y) { return pixels[y * kCanvasSide + x]; }
  double at(int x, int y) const { return pixels[y * kCanvasSide + x]; }
};

/// Uniform random segment with both endpoints inside `region` and length at
/// least `length_min`. Throws Error(generation_failed) when the region cannot
/// host such a segment or rejection sampling exhausts its attempt budget.
Segment sample_segment(Xoshiro256ss& rng, double length_min, const Rect& region);

/// Generates a stimulus for (task, label) whose geometry satisfies every
/// task constraint; the result always passes verify_spec. Throws
/// Error(generation_failed) after a bounded number of rejected draws.
StimulusSpec gen_spec(Task task, int label, Xoshiro256ss& rng);

/// Re-checks every constraint of spec.task/spec.label directly from the
/// segment geometry. Returns true iff all hold; failed constraints are
/// appended to `violations` when given.
bool verify_spec(const StimulusSpec& spec, std::vector<std::string>* violations = nullptr);

/// Renders the spec on a random background (per-pixel uniform noise in the
/// dark or light band by polarity) with Wu anti-aliased segments at full ink
/// intensity 1.0 (white) or 0.0 (black). Deterministic for a fixed
/// (spec, rng state).
Image rasterize(const StimulusSpec& spec, Xoshiro256ss& rng);

}  // namespace bn
