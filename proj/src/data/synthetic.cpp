#include "skb/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

namespace skb::data {
namespace {

using std::numbers::pi;

struct Pen {
  std::mt19937_64& rng;
  const SyntheticOptions& opts;

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  double normal(double sd) { return std::normal_distribution<double>(0.0, sd)(rng); }
  bool coin() { return std::bernoulli_distribution(0.5)(rng); }
};

// Resamples a polyline at roughly `step` canvas units.
Stroke densify(const std::vector<Point2>& vertices, double step) {
  Stroke out;
  for (std::size_t i = 0; i + 1 < vertices.size(); ++i) {
    const auto& a = vertices[i];
    const auto& b = vertices[i + 1];
    const int n = std::max(1, static_cast<int>(std::hypot(b.x - a.x, b.y - a.y) / step));
    for (int k = 0; k < n; ++k) out.push_back({a.x + (b.x - a.x) * k / n, a.y + (b.y - a.y) * k / n});
  }
  out.push_back(vertices.back());
  return out;
}

std::vector<Point2> arc(double cx, double cy, double rx, double ry, double a0, double a1, int n) {
  std::vector<Point2> v;
  for (int i = 0; i <= n; ++i) {
    const double a = a0 + (a1 - a0) * i / n;
    v.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
  return v;
}

std::vector<Point2> jitter_vertices(Pen& pen, std::vector<Point2> v, double size) {
  for (auto& p : v) {
    p.x += pen.normal(pen.opts.vertex_jitter * size);
    p.y += pen.normal(pen.opts.vertex_jitter * size);
  }
  return v;
}

std::vector<Stroke> shape_strokes(int cls, Pen& pen) {
  std::vector<std::vector<Point2>> polys;
  const double s = 1.0;  // shapes are drawn in a unit box, then posed
  switch (cls % kSyntheticClassCount) {
    case 0: {  // circle
      const double a0 = pen.uniform(0, 2 * pi);
      polys.push_back(arc(0, 0, s, s * pen.uniform(0.8, 1.2), a0, a0 + 2 * pi * pen.uniform(0.95, 1.08), 40));
      break;
    }
    case 1:  // square
      polys.push_back(jitter_vertices(pen, {{-s, -s}, {s, -s}, {s, s}, {-s, s}, {-s, -s}}, s));
      break;
    case 2:  // triangle
      polys.push_back(jitter_vertices(pen, {{0, -s}, {s, s * 0.8}, {-s, s * 0.8}, {0, -s}}, s));
      break;
    case 3: {  // five-pointed star
      std::vector<Point2> v;
      for (int i = 0; i <= 5; ++i) {
        const double a = -pi / 2 + i * 4 * pi / 5;
        v.push_back({s * std::cos(a), s * std::sin(a)});
      }
      polys.push_back(jitter_vertices(pen, v, s * 0.5));
      break;
    }
    case 4: {  // spiral
      std::vector<Point2> v;
      const double turns = pen.uniform(1.8, 2.6);
      for (int i = 0; i <= 60; ++i) {
        const double t = static_cast<double>(i) / 60;
        const double a = t * turns * 2 * pi;
        v.push_back({s * t * std::cos(a), s * t * std::sin(a)});
      }
      polys.push_back(v);
      break;
    }
    case 5: {  // zigzag
      std::vector<Point2> v;
      const int teeth = 4 + static_cast<int>(pen.uniform(0, 3));
      for (int i = 0; i <= teeth; ++i) v.push_back({-s + 2 * s * i / teeth, (i % 2 ? s : -s) * 0.5});
      polys.push_back(jitter_vertices(pen, v, s * 0.5));
      break;
    }
    case 6:  // house: walls then roof
      polys.push_back(jitter_vertices(pen, {{-s, 0}, {-s, s}, {s, s}, {s, 0}, {-s, 0}}, s * 0.6));
      polys.push_back(jitter_vertices(pen, {{-s, 0}, {0, -s}, {s, 0}}, s * 0.6));
      break;
    case 7: {  // face: outline, two eyes, mouth
      polys.push_back(arc(0, 0, s, s, 0, 2 * pi, 36));
      polys.push_back(arc(-0.4 * s, -0.3 * s, 0.12 * s, 0.12 * s, 0, 2 * pi, 8));
      polys.push_back(arc(0.4 * s, -0.3 * s, 0.12 * s, 0.12 * s, 0, 2 * pi, 8));
      polys.push_back(arc(0, 0.1 * s, 0.5 * s, 0.45 * s, 0.15 * pi, 0.85 * pi, 12));
      break;
    }
    case 8:  // plus sign
      polys.push_back(jitter_vertices(pen, {{0, -s}, {0, s}}, s * 0.6));
      polys.push_back(jitter_vertices(pen, {{-s, 0}, {s, 0}}, s * 0.6));
      break;
    case 9: {  // wave
      std::vector<Point2> v;
      const double periods = pen.uniform(1.5, 2.5);
      for (int i = 0; i <= 48; ++i) {
        const double t = static_cast<double>(i) / 48;
        v.push_back({-s + 2 * s * t, 0.4 * s * std::sin(t * periods * 2 * pi)});
      }
      polys.push_back(v);
      break;
    }
  }
  // Pose: rotation, anisotropic scale, placement on the canvas.
  const double rot = pen.uniform(-1, 1) * pen.opts.max_rotation_deg * pi / 180;
  const double size = pen.uniform(55, 110);
  const double sx = size * pen.uniform(0.8, 1.2), sy = size * pen.uniform(0.8, 1.2);
  const double cx = 128 + pen.uniform(-10, 10), cy = 128 + pen.uniform(-10, 10);
  const double c = std::cos(rot), sn = std::sin(rot);
  std::vector<Stroke> strokes;
  for (auto& poly : polys) {
    if (pen.coin()) std::reverse(poly.begin(), poly.end());
    std::vector<Point2> posed;
    for (const auto& p : poly) {
      const double x = p.x * sx, y = p.y * sy;
      posed.push_back({cx + c * x - sn * y, cy + sn * x + c * y});
    }
    Stroke st = densify(posed, 4.0);
    for (auto& p : st) {
      p.x = std::clamp(std::round(p.x + pen.normal(pen.opts.jitter)), 0.0, 255.0);
      p.y = std::clamp(std::round(p.y + pen.normal(pen.opts.jitter)), 0.0, 255.0);
    }
    strokes.push_back(std::move(st));
  }
  return strokes;
}

}  // namespace

const std::vector<std::string>& synthetic_class_names() {
  static const std::vector<std::string> names{"circle", "square", "triangle", "star", "spiral",
                                              "zigzag", "house",  "face",     "plus", "wave"};
  return names;
}

Drawing synthesize_drawing(int class_id, std::mt19937_64& rng, const SyntheticOptions& opts) {
  Pen pen{rng, opts};
  Drawing d;
  d.word = synthetic_class_names()[static_cast<std::size_t>(class_id % kSyntheticClassCount)];
  d.strokes = shape_strokes(class_id, pen);
  return d;
}

std::string to_ndjson(const Drawing& d) {
  nlohmann::json strokes = nlohmann::json::array();
  for (const auto& s : d.strokes) {
    nlohmann::json xs = nlohmann::json::array(), ys = nlohmann::json::array();
    for (const auto& p : s) {
      xs.push_back(static_cast<long>(std::lround(p.x)));
      ys.push_back(static_cast<long>(std::lround(p.y)));
    }
    strokes.push_back({xs, ys});
  }
  return nlohmann::json{{"word", d.word}, {"drawing", strokes}}.dump();
}

SketchCache synthesize_cache(int classes, int per_class, std::uint64_t seed, const IngestOptions& ingest,
                             const SyntheticOptions& opts) {
  std::mt19937_64 rng(seed);
  SketchCache cache;
  const auto& names = synthetic_class_names();
  cache.class_names.assign(names.begin(), names.begin() + std::min<int>(classes, kSyntheticClassCount));
  for (int i = 0; i < per_class; ++i) {
    for (int c = 0; c < classes; ++c) {
      Drawing d = synthesize_drawing(c, rng, opts);
      if (ingest.rdp_epsilon)
        for (auto& s : d.strokes) s = rdp_simplify(s, *ingest.rdp_epsilon);
      Sketch sk = normalize_offsets(sketch_from_strokes(d.strokes));
      if (sk.points.size() > ingest.max_len) {
        sk.points.resize(ingest.max_len);
        sk.stroke_ids.resize(ingest.max_len);
      }
      sk.label = c;
      cache.sketches.push_back(std::move(sk));
    }
  }
  return cache;
}

}  // namespace skb::data
