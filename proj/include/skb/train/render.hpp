#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "skb/data/sketch.hpp"
#include "skb/model/gestalt.hpp"

namespace skb::train {

// Absolute polylines, one per stroke. The first stroke starts at the sketch
// origin; a point in state p2 ends its stroke; drawing stops after p3.
std::vector<std::vector<data::Point2>> stroke_polylines(const data::Sketch& sketch);

std::string sketch_svg(const data::Sketch& sketch);
void render_svg(const data::Sketch& sketch, const std::filesystem::path& path);

// Ground truth, masked input and completion side by side. In the middle panel
// every segment that ends in a masked point is drawn dashed in red.
std::string completion_svg(const data::Sketch& gt, const data::Sketch& masked, const data::Sketch& completed,
                           const model::MaskPlan& plan);
void render_completion(const data::Sketch& gt, const data::Sketch& masked, const data::Sketch& completed,
                       const model::MaskPlan& plan, const std::filesystem::path& path);

}  // namespace skb::train
