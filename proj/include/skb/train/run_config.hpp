#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <json.hpp>

#include "skb/model/config.hpp"
#include "skb/model/gestalt.hpp"
#include "skb/model/heads.hpp"

namespace skb::train {

enum class Task { Pretrain, FinetuneCls, FinetuneRet, Eval, Complete, Render };

Task parse_task(const std::string& s);
std::string to_string(Task t);

// Each path names a sketch cache, or "synthetic:<classes>x<per_class>[:seed]".
struct DataPaths {
  std::string train;
  std::string val;
  std::string test;
};

struct RunConfig {
  Task task = Task::Pretrain;
  model::ModelConfig model = model::toy_config();
  model::MaskMode mask_mode = model::MaskMode::Full;
  double mask_ratio = model::kDefaultMaskRatio;
  double lambda_pos = 1.0;
  double lambda_state = 1.0;
  double learning_rate = 1e-4;
  std::size_t batch_size = 64;
  std::size_t eval_batch_size = 128;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  DataPaths data;
  std::string checkpoint;  // where the best checkpoint is written; empty: not saved
  std::string init_from;   // empty: train from scratch
  double target_accuracy = 0.6;
  bool stop_at_target = false;
  // Evaluate train-set top-1 in inference mode after every fine-tuning epoch.
  bool track_train_accuracy = false;
  double triplet_margin = model::kDefaultTripletMargin;

  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

// Flattens the config and, for every leaf, looks up SKB_<PATH> where PATH is
// the key path joined by '_' in upper case (e.g. SKB_LEARNING_RATE,
// SKB_MODEL_ENCODER_NUM_LAYERS). Values are parsed as JSON, falling back to a
// plain string.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
void apply_env_overrides(nlohmann::json& j, const EnvLookup& lookup);
std::optional<std::string> process_env(const std::string& name);

// Defaults, then the file (when given), then SKB_ variables.
RunConfig load_run_config(const std::optional<std::filesystem::path>& path, const EnvLookup& lookup = process_env);

// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const RunConfig& c);

}  // namespace skb::train
