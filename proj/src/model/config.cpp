#include "skb/model/config.hpp"

#include <sstream>

#include "skb/error.hpp"

namespace skb::model {

void EncoderConfig::validate() const {
  if (num_layers == 0 || num_heads == 0 || hidden == 0) throw ConfigError("encoder extents must be positive");
  if (hidden % num_heads != 0) {
    throw ConfigError("hidden size " + std::to_string(hidden) + " is not divisible by " + std::to_string(num_heads) +
                      " heads");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
}

std::string EncoderConfig::label() const {
  return std::to_string(num_layers) + "-" + std::to_string(num_heads) + "-" + std::to_string(hidden);
}

EncoderConfig EncoderConfig::from_label(const std::string& lah) {
  EncoderConfig c;
  std::istringstream in(lah);
  char d1 = 0, d2 = 0;
  if (!(in >> c.num_layers >> d1 >> c.num_heads >> d2 >> c.hidden) || d1 != '-' || d2 != '-' || !in.eof())
    throw ConfigError("expected an L-A-H label such as 8-12-768, got '" + lah + "'");
  c.validate();
  return c;
}

void ModelConfig::validate() const {
  encoder.validate();
  if (embedding.embed_dim == 0 || embedding.max_len == 0 || embedding.stroke_cap == 0)
    throw ConfigError("embedding extents must be positive");
  for (auto w : embedding.refine_hidden)
    if (w == 0) throw ConfigError("refine widths must be positive");
  if (retrieval_head && retrieval_dim == 0) throw ConfigError("retrieval_dim must be positive");
  if (classifier_head && num_classes == 0) throw ConfigError("the classification head needs num_classes > 0");
  if (retrieval_head && num_classes == 0) throw ConfigError("the retrieval head needs num_classes for its auxiliary classifier");
}

ModelConfig paper_scale_config() { return ModelConfig{}; }

ModelConfig toy_config() {
  ModelConfig c;
  c.encoder = {4, 4, 128, 0.1};
  c.embedding.embed_dim = 64;
  c.embedding.max_len = 64;
  c.embedding.refine_hidden = {96, 128};
  return c;
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"num_layers", c.num_layers}, {"num_heads", c.num_heads}, {"hidden", c.hidden}, {"dropout", c.dropout}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  EncoderConfig d;
  c.num_layers = j.value("num_layers", d.num_layers);
  c.num_heads = j.value("num_heads", d.num_heads);
  c.hidden = j.value("hidden", d.hidden);
  c.dropout = j.value("dropout", d.dropout);
}

void to_json(nlohmann::json& j, const EmbeddingConfig& c) {
  j = {{"embed_dim", c.embed_dim}, {"max_len", c.max_len}, {"stroke_cap", c.stroke_cap}, {"refine_hidden", c.refine_hidden}};
}

void from_json(const nlohmann::json& j, EmbeddingConfig& c) {
  EmbeddingConfig d;
  c.embed_dim = j.value("embed_dim", d.embed_dim);
  c.max_len = j.value("max_len", d.max_len);
  c.stroke_cap = j.value("stroke_cap", d.stroke_cap);
  c.refine_hidden = j.value("refine_hidden", d.refine_hidden);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"embedding", c.embedding},       {"encoder", c.encoder},
       {"num_classes", c.num_classes},   {"classifier_head", c.classifier_head}, {"retrieval_head", c.retrieval_head},
       {"retrieval_dim", c.retrieval_dim}, {"gestalt_head", c.gestalt_head},
       {"init_std", c.init_std},         {"layer_norm_eps", c.layer_norm_eps}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.embedding = j.value("embedding", d.embedding);
  c.encoder = j.value("encoder", d.encoder);
  c.num_classes = j.value("num_classes", d.num_classes);
  c.classifier_head = j.value("classifier_head", d.classifier_head);
  c.retrieval_head = j.value("retrieval_head", d.retrieval_head);
  c.retrieval_dim = j.value("retrieval_dim", d.retrieval_dim);
  c.gestalt_head = j.value("gestalt_head", d.gestalt_head);
  c.init_std = j.value("init_std", d.init_std);
  c.layer_norm_eps = j.value("layer_norm_eps", d.layer_norm_eps);
}

}  // namespace skb::model
