#include "skb/train/render.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "skb/error.hpp"

namespace skb::train {
namespace {

constexpr double kPanel = 256.0;
constexpr double kMargin = 12.0;
constexpr double kCaption = 20.0;

struct Segment {
  data::Point2 a, b;
  bool masked = false;
};

// Drawn segments in order; `masked` flags the ones whose end point is in `marked`.
std::vector<Segment> segments(const data::Sketch& s, const std::set<std::size_t>& marked) {
  std::vector<Segment> out;
  data::Point2 at{s.origin_x, s.origin_y};
  bool pen_down = true;
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    const auto& p = s.points[i];
    const data::Point2 next{at.x + p.dx * s.scale, at.y + p.dy * s.scale};
    if (pen_down) out.push_back({at, next, marked.count(i) > 0});
    at = next;
    if (p.p3 > 0.5f) break;
    pen_down = !(p.p2 > 0.5f);
  }
  return out;
}

struct Box {
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
  double x1 = -std::numeric_limits<double>::infinity(), y1 = x1;

  void add(const data::Point2& p) {
    x0 = std::min(x0, p.x);
    y0 = std::min(y0, p.y);
    x1 = std::max(x1, p.x);
    y1 = std::max(y1, p.y);
  }
};

struct Fit {
  double scale = 1.0, dx = 0.0, dy = 0.0;
  data::Point2 operator()(const data::Point2& p) const { return {p.x * scale + dx, p.y * scale + dy}; }
};

Fit fit_panel(const Box& b, double left, double top) {
  Fit f;
  if (!(b.x1 >= b.x0)) return f;
  const double w = std::max(b.x1 - b.x0, 1e-9), h = std::max(b.y1 - b.y0, 1e-9);
  f.scale = (kPanel - 2 * kMargin) / std::max(w, h);
  f.dx = left + kMargin - b.x0 * f.scale + ((kPanel - 2 * kMargin) - w * f.scale) / 2;
  f.dy = top + kMargin - b.y0 * f.scale + ((kPanel - 2 * kMargin) - h * f.scale) / 2;
  return f;
}

void write_panel(std::ostringstream& out, const data::Sketch& s, const std::set<std::size_t>& marked, double left,
                 const std::string& caption) {
  const auto segs = segments(s, marked);
  Box box;
  for (const auto& g : segs) {
    box.add(g.a);
    box.add(g.b);
  }
  const Fit fit = fit_panel(box, left, caption.empty() ? 0.0 : kCaption);
  if (!caption.empty())
    out << "<text x=\"" << left + kPanel / 2 << "\" y=\"15\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"13\">" << caption << "</text>\n";
  // Unmasked runs become one path per stroke; masked segments are emitted separately.
  std::string path;
  data::Point2 last{std::numeric_limits<double>::quiet_NaN(), 0};
  auto flush = [&] {
    if (!path.empty()) out << "<path d=\"" << path << "\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>\n";
    path.clear();
  };
  for (const auto& g : segs) {
    const auto a = fit(g.a), b = fit(g.b);
    if (g.masked) {
      flush();
      out << "<path d=\"M " << a.x << ' ' << a.y << " L " << b.x << ' ' << b.y
          << "\" fill=\"none\" stroke=\"red\" stroke-width=\"2\" stroke-dasharray=\"4 3\"/>\n";
      last.x = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    if (!(g.a.x == last.x && g.a.y == last.y)) {
      flush();
      path = "M " + std::to_string(a.x) + ' ' + std::to_string(a.y);
    }
    path += " L " + std::to_string(b.x) + ' ' + std::to_string(b.y);
    last = g.b;
  }
  flush();
}

std::string document(double width, double height, const std::string& body) {
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << body << "</svg>\n";
  return out.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f || !(f << text)) throw IoError("cannot write SVG", path.string());
}

}  // namespace

std::vector<std::vector<data::Point2>> stroke_polylines(const data::Sketch& sketch) {
  std::vector<std::vector<data::Point2>> out;
  for (const auto& g : segments(sketch, {})) {
    if (out.empty() || !(out.back().back().x == g.a.x && out.back().back().y == g.a.y)) out.push_back({g.a});
    out.back().push_back(g.b);
  }
  return out;
}

std::string sketch_svg(const data::Sketch& sketch) {
  std::ostringstream body;
  write_panel(body, sketch, {}, 0.0, "");
  return document(kPanel, kPanel, body.str());
}

void render_svg(const data::Sketch& sketch, const std::filesystem::path& path) { write_file(path, sketch_svg(sketch)); }

std::string completion_svg(const data::Sketch& gt, const data::Sketch& masked, const data::Sketch& completed,
                           const model::MaskPlan& plan) {
  std::set<std::size_t> marked;
  for (auto i : plan.positions()) marked.insert(i);
  for (auto i : plan.states()) marked.insert(i);
  std::ostringstream body;
  write_panel(body, gt, {}, 0.0, "ground truth");
  write_panel(body, masked, marked, kPanel, "masked input");
  write_panel(body, completed, {}, 2 * kPanel, "completed");
  return document(3 * kPanel, kPanel + kCaption, body.str());
}

void render_completion(const data::Sketch& gt, const data::Sketch& masked, const data::Sketch& completed,
                       const model::MaskPlan& plan, const std::filesystem::path& path) {
  write_file(path, completion_svg(gt, masked, completed, plan));
}

}  // namespace skb::train
