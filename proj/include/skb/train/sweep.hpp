#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "skb/train/run_config.hpp"

namespace skb::train {

// One axis of ablation: pre-training mask strategy, encoder shape (L-A-H
// labels), or pre-training data volume ("<classes>x<per_class>").
enum class SweepAxis { MaskMode, Architecture, Volume };

struct SweepSpec {
  RunConfig base;
  SweepAxis axis = SweepAxis::MaskMode;
  std::vector<std::string> values;
  std::size_t pretrain_epochs = 5;
  std::size_t finetune_epochs = 5;
};

// {"base": RunConfig, "axis": "mask_mode"|"architecture"|"volume",
//  "values": [...], "pretrain_epochs": n, "finetune_epochs": n}
// A missing "values" selects the standard grid for the axis.
SweepSpec parse_sweep(const nlohmann::json& j);
SweepSpec load_sweep(const std::filesystem::path& path);

std::vector<std::string> default_sweep_values(SweepAxis axis);

struct SweepRow {
  std::string cell;
  double pretrain_loss = 0.0;
  double cls_top1 = 0.0;
  double cls_top5 = 0.0;
  double ret_top1 = 0.0;
  double ret_top5 = 0.0;
  double ret_map = 0.0;
};

void to_json(nlohmann::json& j, const SweepRow& r);

// Every cell pre-trains with the base seed, then fine-tunes a classifier and a
// retrieval model from that checkpoint and evaluates both on the test split.
std::vector<SweepRow> run_sweep(const SweepSpec& spec, const std::function<void(const std::string&)>& log = {});

std::string sweep_table(const SweepSpec& spec, const std::vector<SweepRow>& rows);

}  // namespace skb::train
