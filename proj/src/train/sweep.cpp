#include "skb/train/sweep.hpp"

#include <cstdio>
#include <fstream>
#include <regex>

#include "skb/error.hpp"
#include "skb/train/trainer.hpp"

namespace skb::train {
namespace {

SweepAxis parse_axis(const std::string& s) {
  if (s == "mask_mode") return SweepAxis::MaskMode;
  if (s == "architecture") return SweepAxis::Architecture;
  if (s == "volume") return SweepAxis::Volume;
  throw ConfigError("unknown sweep axis '" + s + "'");
}

const char* axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::MaskMode: return "mask_mode";
    case SweepAxis::Architecture: return "architecture";
    case SweepAxis::Volume: return "volume";
  }
  return "mask_mode";
}

std::pair<std::size_t, std::size_t> parse_volume(const std::string& v) {
  static const std::regex re(R"((\d+)x(\d+))");
  std::smatch m;
  if (!std::regex_match(v, m, re)) throw ConfigError("volume '" + v + "' is not of the form <classes>x<per_class>");
  return {std::stoul(m[1]), std::stoul(m[2])};
}

// First `per_class` sketches of each of the first `classes` labels.
Dataset subset(const Dataset& ds, std::size_t classes, std::size_t per_class) {
  Dataset out;
  out.class_names.assign(ds.class_names.begin(),
                         ds.class_names.begin() + static_cast<std::ptrdiff_t>(std::min(classes, ds.num_classes())));
  std::vector<std::size_t> taken(classes, 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int y = ds.labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= classes || taken[static_cast<std::size_t>(y)] >= per_class) continue;
    ++taken[static_cast<std::size_t>(y)];
    out.sketches.push_back(ds.sketches[i]);
    out.labels.push_back(y);
    if (i < ds.originals.size()) out.originals.push_back(ds.originals[i]);
  }
  return out;
}

}  // namespace

std::vector<std::string> default_sweep_values(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::MaskMode: return {"single", "position", "state", "full"};
    case SweepAxis::Architecture: return {"6-8-256", "12-8-256", "12-16-1024", "8-12-768"};
    case SweepAxis::Volume: return {"5x100", "10x100", "10x200"};
  }
  return {};
}

SweepSpec parse_sweep(const nlohmann::json& j) {
  SweepSpec s;
  try {
    nlohmann::json base = RunConfig{};
    if (j.contains("base")) base.merge_patch(j.at("base"));
    apply_env_overrides(base, process_env);
    s.base = base.get<RunConfig>();
    s.base.validate();
    s.axis = parse_axis(j.value("axis", std::string("mask_mode")));
    s.values = j.value("values", default_sweep_values(s.axis));
    s.pretrain_epochs = j.value("pretrain_epochs", s.pretrain_epochs);
    s.finetune_epochs = j.value("finetune_epochs", s.finetune_epochs);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sweep grid: ") + e.what());
  }
  if (s.values.empty()) throw ConfigError("sweep grid has no values");
  for (const auto& v : s.values) {
    if (s.axis == SweepAxis::MaskMode) model::parse_mask_mode(v);
    if (s.axis == SweepAxis::Architecture) model::EncoderConfig::from_label(v);
    if (s.axis == SweepAxis::Volume) parse_volume(v);
  }
  return s;
}

SweepSpec load_sweep(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open sweep grid", path.string());
  try {
    return parse_sweep(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("sweep grid " + path.string() + ": " + e.what(), e.byte);
  }
}

void to_json(nlohmann::json& j, const SweepRow& r) {
  j = {{"cell", r.cell},         {"pretrain_loss", r.pretrain_loss}, {"cls_top1", r.cls_top1},
       {"cls_top5", r.cls_top5}, {"ret_top1", r.ret_top1},           {"ret_top5", r.ret_top5},
       {"ret_map", r.ret_map}};
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec, const std::function<void(const std::string&)>& log) {
  const auto say = [&](const std::string& m) {
    if (log) log(m);
  };
  std::vector<SweepRow> rows;
  for (const auto& value : spec.values) {
    RunConfig cfg = spec.base;
    if (spec.axis == SweepAxis::MaskMode) cfg.mask_mode = model::parse_mask_mode(value);
    if (spec.axis == SweepAxis::Architecture) {
      const double dropout = cfg.model.encoder.dropout;
      cfg.model.encoder = model::EncoderConfig::from_label(value);
      cfg.model.encoder.dropout = dropout;
    }
    const auto train = load_dataset(cfg.data.train, cfg.model.embedding);
    const auto test = load_dataset(cfg.data.test, cfg.model.embedding);
    Dataset pretrain_data = train;
    if (spec.axis == SweepAxis::Volume) {
      const auto [c, n] = parse_volume(value);
      pretrain_data = subset(train, c, n);
    }
    say("cell " + value + ": pre-training on " + std::to_string(pretrain_data.size()) + " sketches");

    SweepRow row;
    row.cell = value;
    cfg.epochs = spec.pretrain_epochs;
    auto pre = build_model(cfg, Task::Pretrain, 0);
    Adam<float> pre_adam(pre->store(), adam_config(cfg));
    const auto curve = pretrain(*pre, pre_adam, cfg, pretrain_data, nullptr);
    row.pretrain_loss = curve.epochs.empty() ? 0.0 : curve.epochs.back().loss;
    const auto snapshot = make_checkpoint(*pre, nullptr, cfg, train.class_names, curve.epochs.size());

    cfg.epochs = spec.finetune_epochs;
    for (Task task : {Task::FinetuneCls, Task::FinetuneRet}) {
      auto m = build_model(cfg, task, train.num_classes());
      load_parameters(snapshot, m->store());
      Adam<float> adam(m->store(), adam_config(cfg));
      finetune(*m, adam, cfg, task, train, nullptr);
      const auto report = evaluate(*m, test, cfg.eval_batch_size, config_hash(cfg));
      if (task == Task::FinetuneCls) {
        row.cls_top1 = report.top1;
        row.cls_top5 = report.top5;
      } else {
        row.ret_top1 = report.top1;
        row.ret_top5 = report.top5;
        row.ret_map = report.map;
      }
    }
    say("cell " + value + ": cls top-1 " + std::to_string(row.cls_top1) + ", retrieval mAP " +
        std::to_string(row.ret_map));
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_table(const SweepSpec& spec, const std::vector<SweepRow>& rows) {
  std::string out = std::string("| ") + axis_name(spec.axis) +
                    " | cls T-1 | cls T-5 | ret T-1 | ret T-5 | ret mAP | pretrain loss |\n"
                    "|---|---|---|---|---|---|---|\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "| %s | %.2f | %.2f | %.2f | %.2f | %.2f | %.4f |\n", r.cell.c_str(),
                  100 * r.cls_top1, 100 * r.cls_top5, 100 * r.ret_top1, 100 * r.ret_top5, 100 * r.ret_map,
                  r.pretrain_loss);
    out += buf;
  }
  return out;
}

}  // namespace skb::train
