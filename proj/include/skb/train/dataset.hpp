#pragma once

#include <string>
#include <vector>

#include "skb/data/cache.hpp"
#include "skb/data/sketch.hpp"
#include "skb/model/config.hpp"

namespace skb::train {

// Padded, labelled sketches ready for batching.
struct Dataset {
  std::vector<data::PaddedSketch> sketches;
  std::vector<int> labels;  // -1 when unlabelled
  std::vector<std::string> class_names;
  std::vector<data::Sketch> originals;

  std::size_t size() const noexcept { return sketches.size(); }
  std::size_t num_classes() const noexcept { return class_names.size(); }
  bool labelled() const;
};

Dataset make_dataset(const data::SketchCache& cache, const model::EmbeddingConfig& emb);

// `spec` is a cache path or "synthetic:<classes>x<per_class>[:seed]".
Dataset load_dataset(const std::string& spec, const model::EmbeddingConfig& emb);

}  // namespace skb::train
