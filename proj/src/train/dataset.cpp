#include "skb/train/dataset.hpp"

#include <algorithm>
#include <regex>

#include "skb/data/synthetic.hpp"
#include "skb/error.hpp"

namespace skb::train {

bool Dataset::labelled() const {
  return std::none_of(labels.begin(), labels.end(), [](int l) { return l < 0; });
}

Dataset make_dataset(const data::SketchCache& cache, const model::EmbeddingConfig& emb) {
  Dataset d;
  d.class_names = cache.class_names;
  d.originals = cache.sketches;
  d.sketches.reserve(cache.sketches.size());
  d.labels.reserve(cache.sketches.size());
  for (const auto& s : cache.sketches) {
    d.sketches.push_back(data::truncate_pad(s, emb.max_len, emb.stroke_cap));
    d.labels.push_back(s.label ? static_cast<int>(*s.label) : -1);
  }
  return d;
}

Dataset load_dataset(const std::string& spec, const model::EmbeddingConfig& emb) {
  static const std::regex synthetic(R"(synthetic:(\d+)x(\d+)(?::(\d+))?)");
  std::smatch m;
  if (std::regex_match(spec, m, synthetic)) {
    const int classes = std::stoi(m[1]);
    const int per_class = std::stoi(m[2]);
    const std::uint64_t seed = m[3].matched ? std::stoull(m[3]) : 0;
    if (classes < 1 || classes > data::kSyntheticClassCount || per_class < 1)
      throw ConfigError("synthetic data spec '" + spec + "' out of range");
    data::IngestOptions ingest;
    ingest.max_len = emb.max_len;
    return make_dataset(data::synthesize_cache(classes, per_class, seed, ingest), emb);
  }
  if (spec.empty()) throw ConfigError("no dataset given");
  return make_dataset(data::load_cache(spec), emb);
}

}  // namespace skb::train
