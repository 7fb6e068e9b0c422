#include "skb/data/sketch.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "skb/error.hpp"

namespace skb::data {

bool Point5::valid() const {
  const auto bit = [](float v) { return v == 0.f || v == 1.f; };
  return bit(p1) && bit(p2) && bit(p3) && p1 + p2 + p3 == 1.f;
}

PenState Point5::state() const {
  if (!valid()) throw ContractViolation("point state is not one-hot");
  if (p1 == 1.f) return PenState::Draw;
  return p2 == 1.f ? PenState::StrokeEnd : PenState::SketchEnd;
}

Drawing parse_drawing(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed drawing record: ") + e.what(), e.byte);
  }
  if (!j.is_object() || !j.contains("drawing") || !j["drawing"].is_array())
    throw FormatError("drawing record has no \"drawing\" array");
  Drawing d;
  if (j.contains("word") && j["word"].is_string()) d.word = j["word"].get<std::string>();
  const auto& strokes = j["drawing"];
  if (strokes.empty()) throw FormatError("drawing record has no strokes");
  for (std::size_t s = 0; s < strokes.size(); ++s) {
    const auto& st = strokes[s];
    if (!st.is_array() || st.size() < 2 || !st[0].is_array() || !st[1].is_array())
      throw FormatError("stroke " + std::to_string(s) + " is not a pair of coordinate arrays");
    const auto& xs = st[0];
    const auto& ys = st[1];
    if (xs.size() != ys.size())
      throw FormatError("stroke " + std::to_string(s) + " has " + std::to_string(xs.size()) + " x and " +
                        std::to_string(ys.size()) + " y coordinates");
    if (xs.empty()) throw FormatError("stroke " + std::to_string(s) + " is empty");
    Stroke stroke;
    stroke.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!xs[i].is_number() || !ys[i].is_number())
        throw FormatError("stroke " + std::to_string(s) + " has a non-numeric coordinate");
      stroke.push_back({xs[i].get<double>(), ys[i].get<double>()});
    }
    d.strokes.push_back(std::move(stroke));
  }
  return d;
}

Sketch sketch_from_strokes(std::span<const Stroke> strokes) {
  if (strokes.empty()) throw FormatError("drawing has no strokes");
  Sketch sk;
  const Point2 origin = strokes.front().front();
  sk.origin_x = origin.x;
  sk.origin_y = origin.y;
  Point2 prev = origin;
  bool first = true;
  int stroke_id = 0;
  for (const auto& stroke : strokes) {
    if (stroke.empty()) throw FormatError("drawing contains an empty stroke");
    bool emitted = false;
    for (std::size_t i = 0; i < stroke.size(); ++i) {
      if (first) {
        first = false;
        continue;
      }
      const auto& p = stroke[i];
      const PenState s = i + 1 == stroke.size() ? PenState::StrokeEnd : PenState::Draw;
      sk.points.push_back(Point5::make(static_cast<float>(p.x - prev.x), static_cast<float>(p.y - prev.y), s));
      sk.stroke_ids.push_back(stroke_id);
      prev = p;
      emitted = true;
    }
    if (emitted) ++stroke_id;
  }
  if (sk.points.empty()) throw FormatError("drawing has fewer than two points");
  auto& last = sk.points.back();
  last = Point5::make(last.dx, last.dy, PenState::SketchEnd);
  return sk;
}

Sketch parse_quickdraw_record(std::string_view line, std::optional<double> rdp_epsilon) {
  Drawing d = parse_drawing(line);
  if (rdp_epsilon) {
    for (auto& s : d.strokes) s = rdp_simplify(s, *rdp_epsilon);
  }
  return sketch_from_strokes(d.strokes);
}

namespace {

double chord_distance(const Point2& a, const Point2& b, const Point2& p) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len = std::hypot(vx, vy);
  if (len == 0.0) return std::hypot(p.x - a.x, p.y - a.y);
  return std::abs(vx * (a.y - p.y) - vy * (a.x - p.x)) / len;
}

}  // namespace

Stroke rdp_simplify(std::span<const Point2> stroke, double epsilon) {
  const std::size_t n = stroke.size();
  if (n < 3) return Stroke(stroke.begin(), stroke.end());
  std::vector<bool> keep(n, false);
  keep.front() = keep.back() = true;
  std::vector<std::pair<std::size_t, std::size_t>> work{{0, n - 1}};
  while (!work.empty()) {
    const auto [lo, hi] = work.back();
    work.pop_back();
    if (hi <= lo + 1) continue;
    std::size_t best = lo;
    double best_d = -1.0;
    for (std::size_t i = lo + 1; i < hi; ++i) {
      const double d = chord_distance(stroke[lo], stroke[hi], stroke[i]);
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    if (best_d > epsilon) {
      keep[best] = true;
      work.push_back({best, hi});
      work.push_back({lo, best});
    }
  }
  Stroke out;
  for (std::size_t i = 0; i < n; ++i)
    if (keep[i]) out.push_back(stroke[i]);
  return out;
}

Sketch normalize_offsets(Sketch sketch) {
  float scale = 0.f;
  for (const auto& p : sketch.points) scale = std::max({scale, std::abs(p.dx), std::abs(p.dy)});
  if (!(scale > 0.f)) throw DegenerateSketchError("sketch has no nonzero offset to normalize by");
  for (auto& p : sketch.points) {
    p.dx /= scale;
    p.dy /= scale;
  }
  sketch.scale = scale;
  return sketch;
}

std::vector<int> stroke_ids_from_states(std::span<const Point5> points) {
  std::vector<int> ids(points.size());
  int id = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    ids[i] = id;
    if (points[i].p2 == 1.f) ++id;
  }
  return ids;
}

std::vector<Point2> absolute_points(const Sketch& sketch) {
  std::vector<Point2> out;
  out.reserve(sketch.points.size());
  double x = sketch.origin_x, y = sketch.origin_y;
  for (const auto& p : sketch.points) {
    x += static_cast<double>(p.dx) * sketch.scale;
    y += static_cast<double>(p.dy) * sketch.scale;
    out.push_back({x, y});
  }
  return out;
}

PaddedSketch truncate_pad(const Sketch& sketch, std::size_t max_len, std::size_t stroke_cap) {
  if (max_len == 0) throw ContractViolation("truncate_pad: max_len must be at least 1");
  if (stroke_cap == 0) throw ContractViolation("truncate_pad: stroke cap must be at least 1");
  PaddedSketch out;
  out.length = std::min(sketch.points.size(), max_len);
  out.points.assign(max_len, Point5{});
  out.mask.assign(max_len, 0);
  out.stroke_ids.assign(max_len, 0);
  const auto ids = sketch.stroke_ids.size() == sketch.points.size() ? sketch.stroke_ids
                                                                     : stroke_ids_from_states(sketch.points);
  const int cap = static_cast<int>(stroke_cap) - 1;
  int last_id = 0;
  for (std::size_t i = 0; i < out.length; ++i) {
    out.points[i] = sketch.points[i];
    out.mask[i] = 1;
    last_id = std::min(ids[i], cap);
    out.stroke_ids[i] = last_id;
  }
  for (std::size_t i = out.length; i < max_len; ++i) out.stroke_ids[i] = last_id;
  return out;
}

bool is_stroke_start(std::span<const Point5> points, std::size_t i) {
  return i == 0 || points[i - 1].p2 == 1.f;
}

DatasetStats dataset_stats(std::span<const Sketch> split) {
  if (split.empty()) throw ContractViolation("dataset_stats: empty split");
  DatasetStats st;
  for (const auto& sk : split) {
    for (std::size_t i = 0; i < sk.points.size(); ++i) {
      const auto& p = sk.points[i];
      if (p.p1 == 1.f) ++st.p1;
      if (p.p2 == 1.f) ++st.p2;
      if (p.p3 == 1.f) ++st.p3;
      if (is_stroke_start(sk.points, i))
        ++st.stroke_start;
      else
        ++st.in_stroke;
    }
  }
  return st;
}

}  // namespace skb::data
