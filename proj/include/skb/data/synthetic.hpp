#pragma once

// Procedural QuickDraw-style drawings for tests, demos and the toy-scale
// experiments: ten shape families drawn with random pose, proportions,
// stroke direction and hand jitter on a 256x256 canvas.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "skb/data/cache.hpp"
#include "skb/data/sketch.hpp"

namespace skb::data {

inline constexpr int kSyntheticClassCount = 10;

struct SyntheticOptions {
  double jitter = 1.0;          // per-point hand noise, canvas units
  double vertex_jitter = 0.12;  // relative displacement of shape vertices
  double max_rotation_deg = 30.0;
};

const std::vector<std::string>& synthetic_class_names();

Drawing synthesize_drawing(int class_id, std::mt19937_64& rng, const SyntheticOptions& opts = {});

// Serializes a drawing as one QuickDraw ndjson line (integer coordinates).
std::string to_ndjson(const Drawing& d);

// `per_class` sketches of each of the first `classes` families, interleaved by
// class, passed through the ingest pipeline (RDP, offsets, normalization).
SketchCache synthesize_cache(int classes, int per_class, std::uint64_t seed, const IngestOptions& ingest = {},
                             const SyntheticOptions& opts = {});

}  // namespace skb::data
