#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

namespace skb::model {

// L-A-H transformer hyperparameters. The feed-forward width is always 4H.
struct EncoderConfig {
  std::size_t num_layers = 8;
  std::size_t num_heads = 12;
  std::size_t hidden = 768;
  double dropout = 0.1;

  std::size_t ff_width() const noexcept { return 4 * hidden; }
  std::size_t head_dim() const noexcept { return hidden / num_heads; }
  void validate() const;

  // "8-12-768" style label and its parser.
  std::string label() const;
  static EncoderConfig from_label(const std::string& lah);
};

struct EmbeddingConfig {
  std::size_t embed_dim = 128;
  std::size_t max_len = 250;
  std::size_t stroke_cap = 50;
  // Hidden widths of the refine network between embed_dim and the encoder width.
  std::vector<std::size_t> refine_hidden{256, 512};
};

struct ModelConfig {
  EmbeddingConfig embedding;
  EncoderConfig encoder;
  std::size_t num_classes = 0;
  bool classifier_head = false;
  bool retrieval_head = false;
  std::size_t retrieval_dim = 256;
  bool gestalt_head = false;        // reconstruction network for pre-training
  double init_std = 0.02;           // embedding tables and special tokens
  double layer_norm_eps = 1e-5;

  void validate() const;
};

// Reference configuration: 8-12-768, d_E 128, refine 128-256-512-768.
ModelConfig paper_scale_config();
// Desk-scale configuration used by tests: 4-4-128, max_len 64.
ModelConfig toy_config();

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);
void to_json(nlohmann::json& j, const EmbeddingConfig& c);
void from_json(const nlohmann::json& j, EmbeddingConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace skb::model
