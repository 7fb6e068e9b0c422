#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "skb/core/adam.hpp"
#include "skb/core/checkpoint.hpp"
#include "skb/model/sketch_bert.hpp"
#include "skb/train/dataset.hpp"
#include "skb/train/run_config.hpp"

namespace skb::train {

using Model = model::SketchBert<float>;

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = kNaN;
  double position_loss = kNaN;  // pre-training only
  double state_loss = kNaN;     // pre-training only
  double train_accuracy = kNaN;
  // Pre-training: validation SGM loss. Classification: validation top-1.
  // Retrieval: validation nearest-neighbour top-1.
  double val_metric = kNaN;
  double seconds = 0.0;
};

struct TrainingCurve {
  std::vector<EpochRecord> epochs;

  // First epoch whose validation metric reaches `target`.
  std::optional<std::size_t> epochs_to_target(double target) const;
};

void to_json(nlohmann::json& j, const EpochRecord& r);
void to_json(nlohmann::json& j, const TrainingCurve& c);

using EpochHook = std::function<void(const EpochRecord&)>;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Model for `task` with the matching heads; the seed comes from the config.
std::unique_ptr<Model> build_model(const RunConfig& cfg, Task task, std::size_t num_classes);

// Copies every same-named parameter from a checkpoint; ConfigError when the
// checkpoint shares no parameter with the model or a shape disagrees.
std::size_t init_from_checkpoint(Model& model, const std::string& path);

AdamConfig adam_config(const RunConfig& cfg);

TrainingCurve pretrain(Model& model, Adam<float>& adam, const RunConfig& cfg, const Dataset& train,
                       const Dataset* val, const EpochHook& hook = {});

// task is FinetuneCls or FinetuneRet.
TrainingCurve finetune(Model& model, Adam<float>& adam, const RunConfig& cfg, Task task, const Dataset& train,
                       const Dataset* val, const EpochHook& hook = {});

struct SgmEval {
  double loss = 0.0;
  double position_loss = 0.0;
  double state_loss = 0.0;
  double state_accuracy = 0.0;  // argmax over masked states
  std::size_t masked_states = 0;
};

// Inference-mode SGM metrics with masks drawn from `seed`.
SgmEval evaluate_sgm(const Model& model, const Dataset& ds, const RunConfig& cfg, std::uint64_t seed);

// [N x C] classifier logits in inference mode.
Tensor<double> class_scores(const Model& model, const Dataset& ds, std::size_t batch_size);
// [N x D] retrieval embeddings, or [CLS] encoder rows for models without a retrieval head.
Tensor<double> embeddings(const Model& model, const Dataset& ds, std::size_t batch_size);

struct EvalReport {
  double top1 = 0.0;
  double top5 = 0.0;
  double map = 0.0;
  std::size_t num_queries = 0;
  std::string config_hash;
  std::string protocol;
};

void to_json(nlohmann::json& j, const EvalReport& r);

// Classification models: top-k of the classifier; retrieval models: top-k of
// the nearest neighbours. mAP always ranks the test set against itself with the
// query left out.
EvalReport evaluate(const Model& model, const Dataset& test, std::size_t batch_size, const std::string& hash);

Checkpoint make_checkpoint(const Model& model, const Adam<float>* adam, const RunConfig& cfg,
                           const std::vector<std::string>& class_names, std::size_t epoch);

struct LoadedModel {
  RunConfig config;
  std::vector<std::string> class_names;
  std::unique_ptr<Model> model;
  std::unique_ptr<Adam<float>> adam;
  std::size_t epoch = 0;
};

LoadedModel load_model(const std::filesystem::path& path);

struct Completion {
  model::GestaltSample sample;
  data::Sketch completed;
};

// Masks `sketch` with `plan` and fills the masked attributes from the model.
Completion complete(const Model& model, const data::PaddedSketch& sketch, const model::MaskPlan& plan);

// Loads data per config, trains, and writes the best checkpoint to cfg.checkpoint.
struct RunResult {
  TrainingCurve curve;
  std::size_t best_epoch = 0;
};

RunResult run_pretrain(const RunConfig& cfg, const EpochHook& hook = {});
RunResult run_finetune(const RunConfig& cfg, Task task, const EpochHook& hook = {});

}  // namespace skb::train
