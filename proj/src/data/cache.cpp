#include "skb/data/cache.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "skb/error.hpp"

namespace skb::data {
namespace {

constexpr char kMagic[4] = {'S', 'K', 'B', '5'};

template <typename U>
void put_le(std::vector<char>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const std::vector<char>& in, std::size_t& pos) {
  if (pos + sizeof(U) > in.size()) throw FormatError("sketch cache truncated at byte " + std::to_string(pos));
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(U);
  return v;
}

std::filesystem::path sidecar(const std::filesystem::path& p) { return p.string() + ".classes.json"; }

}  // namespace

std::vector<char> encode_cache(std::span<const Sketch> sketches) {
  std::vector<char> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kCacheVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(sketches.size()));
  for (const auto& sk : sketches) {
    if (sk.points.size() > 0xFFFF) throw FormatError("sketch longer than 65535 points");
    if (sk.label && (*sk.label < 0 || *sk.label >= kNoLabel)) throw FormatError("label out of u16 range");
    put_le<std::uint16_t>(out, sk.label ? static_cast<std::uint16_t>(*sk.label) : kNoLabel);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(sk.points.size()));
    for (const auto& p : sk.points)
      for (float v : p.as_array()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

std::vector<Sketch> decode_cache(const std::vector<char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not a sketch cache (bad magic)");
  std::size_t pos = 4;
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kCacheVersion) throw FormatError("unsupported sketch cache version " + std::to_string(version));
  const auto count = get_le<std::uint32_t>(bytes, pos);
  std::vector<Sketch> out;
  out.reserve(count);
  for (std::uint32_t s = 0; s < count; ++s) {
    Sketch sk;
    const auto label = get_le<std::uint16_t>(bytes, pos);
    if (label != kNoLabel) sk.label = label;
    const auto len = get_le<std::uint16_t>(bytes, pos);
    sk.points.resize(len);
    for (auto& p : sk.points) {
      std::array<float, 5> v{};
      for (auto& f : v) f = std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos));
      p = {v[0], v[1], v[2], v[3], v[4]};
    }
    sk.stroke_ids = stroke_ids_from_states(sk.points);
    out.push_back(std::move(sk));
  }
  if (pos != bytes.size()) throw FormatError("trailing bytes after sketch cache records");
  return out;
}

void save_cache(const std::filesystem::path& path, const SketchCache& cache) {
  const auto bytes = encode_cache(cache.sketches);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write sketch cache", path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing sketch cache", path.string());
  std::ofstream names(sidecar(path), std::ios::trunc);
  if (!names) throw IoError("cannot write class names", sidecar(path).string());
  names << nlohmann::json(cache.class_names).dump() << "\n";
}

SketchCache load_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open sketch cache", path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  SketchCache cache;
  cache.sketches = decode_cache(bytes);
  if (std::ifstream names(sidecar(path)); names) {
    try {
      cache.class_names = nlohmann::json::parse(names).get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad class-name sidecar: ") + e.what());
    }
  }
  return cache;
}

IngestReport ingest_ndjson(const std::filesystem::path& in_path, const IngestOptions& opts, SketchCache& out) {
  std::ifstream in(in_path);
  if (!in) throw IoError("cannot open drawing file", in_path.string());
  IngestReport report;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Drawing d;
    try {
      d = parse_drawing(line);
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what(), e.byte_offset());
    }
    if (opts.rdp_epsilon)
      for (auto& s : d.strokes) s = rdp_simplify(s, *opts.rdp_epsilon);
    Sketch sk;
    try {
      sk = normalize_offsets(sketch_from_strokes(d.strokes));
    } catch (const FormatError&) {
      ++report.skipped;
      continue;
    } catch (const DegenerateSketchError&) {
      ++report.skipped;
      continue;
    }
    if (sk.points.size() > opts.max_len) {
      sk.points.resize(opts.max_len);
      sk.stroke_ids.resize(opts.max_len);
    }
    auto it = std::find(out.class_names.begin(), out.class_names.end(), d.word);
    if (it == out.class_names.end()) {
      out.class_names.push_back(d.word);
      it = out.class_names.end() - 1;
    }
    sk.label = static_cast<int>(it - out.class_names.begin());
    report.max_length = std::max(report.max_length, sk.points.size());
    out.sketches.push_back(std::move(sk));
    ++report.records;
  }
  return report;
}

}  // namespace skb::data
