#pragma once

// Compact binary sketch cache, all integers little-endian:
//
//   magic "SKB5" | u32 version (1) | u32 count
//   per sketch: u16 label (0xFFFF = unlabelled) | u16 length | length x 5 f32
//
// Class names travel in a JSON sidecar "<cache>.classes.json".

#include <filesystem>
#include <string>
#include <vector>

#include "skb/data/sketch.hpp"

namespace skb::data {

inline constexpr std::uint32_t kCacheVersion = 1;
inline constexpr std::uint16_t kNoLabel = 0xFFFF;

struct SketchCache {
  std::vector<Sketch> sketches;
  std::vector<std::string> class_names;
};

std::vector<char> encode_cache(std::span<const Sketch> sketches);
std::vector<Sketch> decode_cache(const std::vector<char>& bytes);

void save_cache(const std::filesystem::path& path, const SketchCache& cache);
SketchCache load_cache(const std::filesystem::path& path);

struct IngestOptions {
  std::optional<double> rdp_epsilon = 2.0;
  std::size_t max_len = kDefaultMaxLen;
};

struct IngestReport {
  std::size_t records = 0;
  std::size_t skipped = 0;
  std::size_t max_length = 0;
};

// Reads line-delimited QuickDraw JSON, simplifies, converts, normalizes and
// truncates to max_len. Labels follow first appearance of each word unless
// `class_names` is pre-populated. Degenerate drawings are skipped and counted.
IngestReport ingest_ndjson(const std::filesystem::path& in, const IngestOptions& opts, SketchCache& out);

}  // namespace skb::data
