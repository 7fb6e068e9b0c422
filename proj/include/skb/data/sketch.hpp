#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace skb::data {

// Pen state class of a point: p1 (drawing), p2 (end of stroke), p3 (end of sketch).
enum class PenState : int { Draw = 0, StrokeEnd = 1, SketchEnd = 2 };

// Stroke-5 point: relative offset plus one-hot pen state. A point whose state
// has been masked carries p1 = p2 = p3 = 0.
struct Point5 {
  float dx = 0;
  float dy = 0;
  float p1 = 0;
  float p2 = 0;
  float p3 = 0;

  static Point5 make(float dx, float dy, PenState s) {
    return {dx, dy, s == PenState::Draw ? 1.f : 0.f, s == PenState::StrokeEnd ? 1.f : 0.f,
            s == PenState::SketchEnd ? 1.f : 0.f};
  }

  // True when the state is exactly one-hot.
  bool valid() const;
  // State class; requires valid().
  PenState state() const;
  std::array<float, 5> as_array() const { return {dx, dy, p1, p2, p3}; }

  bool operator==(const Point5&) const = default;
};

struct Sketch {
  std::vector<Point5> points;
  std::vector<int> stroke_ids;
  std::optional<int> label;
  // Largest absolute raw offset divided out by normalize_offsets (1 if never normalized).
  double scale = 1.0;
  // Absolute coordinate of the dropped first point, in raw units.
  double origin_x = 0.0;
  double origin_y = 0.0;

  std::size_t size() const noexcept { return points.size(); }
};

struct DatasetSplit {
  std::vector<Sketch> train;
  std::vector<Sketch> validation;
  std::vector<Sketch> test;
  std::vector<std::string> class_names;
};

struct Point2 {
  double x = 0;
  double y = 0;
  bool operator==(const Point2&) const = default;
};

using Stroke = std::vector<Point2>;

// One QuickDraw "simplified" record: the class word and absolute strokes.
struct Drawing {
  std::string word;
  std::vector<Stroke> strokes;
};

// Parses {"word": ..., "drawing": [[[x...],[y...]], ...]}. Malformed JSON
// raises ParseError with the byte offset; structural problems raise FormatError.
Drawing parse_drawing(std::string_view line);

// Converts absolute strokes to stroke-5 offsets. The first absolute coordinate
// is the origin and is not emitted as a point.
Sketch sketch_from_strokes(std::span<const Stroke> strokes);

// parse_drawing + sketch_from_strokes, with RDP applied to every stroke first
// when rdp_epsilon is set.
Sketch parse_quickdraw_record(std::string_view line, std::optional<double> rdp_epsilon = std::nullopt);

// Ramer-Douglas-Peucker: keeps both endpoints and every point whose
// perpendicular distance to the current chord exceeds epsilon.
Stroke rdp_simplify(std::span<const Point2> stroke, double epsilon);

// Divides offsets by the largest absolute offset; the divisor becomes `scale`.
Sketch normalize_offsets(Sketch sketch);

// Recomputes stroke ids from pen states (0-based, incremented after each p2).
std::vector<int> stroke_ids_from_states(std::span<const Point5> points);

// Integrates offsets back into absolute coordinates: origin + scale * cumsum.
std::vector<Point2> absolute_points(const Sketch& sketch);

struct PaddedSketch {
  std::vector<Point5> points;
  std::vector<std::uint8_t> mask;
  std::vector<int> stroke_ids;
  std::size_t length = 0;  // number of real points
};

inline constexpr std::size_t kDefaultMaxLen = 250;
inline constexpr std::size_t kDefaultStrokeCap = 50;

PaddedSketch truncate_pad(const Sketch& sketch, std::size_t max_len, std::size_t stroke_cap = kDefaultStrokeCap);

struct DatasetStats {
  std::size_t p1 = 0;
  std::size_t p2 = 0;
  std::size_t p3 = 0;
  std::size_t stroke_start = 0;
  std::size_t in_stroke = 0;

  bool operator==(const DatasetStats&) const = default;
};

// True for the first point and for every point following a p2.
bool is_stroke_start(std::span<const Point5> points, std::size_t i);

DatasetStats dataset_stats(std::span<const Sketch> split);

}  // namespace skb::data
