// Command-line front end: ingest, pretrain, finetune, eval, complete, sweep,
// plus synth for generating QuickDraw-format toy data.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "skb/data/cache.hpp"
#include "skb/data/synthetic.hpp"
#include "skb/error.hpp"
#include "skb/train/render.hpp"
#include "skb/train/run_config.hpp"
#include "skb/train/sweep.hpp"
#include "skb/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace skb;
using namespace skb::train;

namespace {

void print_epoch(const EpochRecord& r) {
  std::fprintf(stderr, "epoch %3zu  loss %.5f", r.epoch, r.loss);
  if (!std::isnan(r.position_loss)) std::fprintf(stderr, "  pos-L1 %.5f  state-CE %.5f", r.position_loss, r.state_loss);
  if (!std::isnan(r.train_accuracy)) std::fprintf(stderr, "  train %.4f", r.train_accuracy);
  if (!std::isnan(r.val_metric)) std::fprintf(stderr, "  val %.5f", r.val_metric);
  std::fprintf(stderr, "  (%.1fs)\n", r.seconds);
}

std::optional<fs::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

void write_json(const std::string& path, const nlohmann::json& j) {
  if (path.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(path);
  if (!f || !(f << j.dump(2) << '\n')) throw IoError("cannot write", path);
}

const std::string& split_spec(const RunConfig& cfg, const std::string& split) {
  if (split == "train") return cfg.data.train;
  if (split == "val") return cfg.data.val;
  if (split == "test") return cfg.data.test;
  throw ConfigError("unknown split '" + split + "' (expected train, val or test)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sketch-BERT: stroke-5 sketch pre-training, fine-tuning and completion"};
  app.require_subcommand(1);

  auto* ingest = app.add_subcommand("ingest", "Convert QuickDraw ndjson into a sketch cache");
  std::string in_path, out_path;
  double rdp_eps = 2.0;
  std::size_t max_len = data::kDefaultMaxLen;
  ingest->add_option("--in", in_path, "ndjson drawings")->required();
  ingest->add_option("--out", out_path, "cache file to write")->required();
  ingest->add_option("--rdp-eps", rdp_eps, "RDP tolerance in canvas units (<= 0 disables)");
  ingest->add_option("--max-len", max_len, "truncate sketches to this many points");

  auto* synth = app.add_subcommand("synth", "Write procedural toy drawings as QuickDraw ndjson");
  int classes = data::kSyntheticClassCount, per_class = 100;
  std::uint64_t seed = 0;
  synth->add_option("--out", out_path, "ndjson file to write")->required();
  synth->add_option("--classes", classes, "number of shape families (1-10)");
  synth->add_option("--per-class", per_class, "drawings per family");
  synth->add_option("--seed", seed, "random seed");

  auto* pre = app.add_subcommand("pretrain", "Self-supervised sketch gestalt pre-training");
  std::string config_path;
  pre->add_option("--config", config_path, "RunConfig JSON");

  auto* fine = app.add_subcommand("finetune", "Fine-tune for classification or retrieval");
  std::string task = "cls", init_from;
  fine->add_option("--task", task, "cls or ret")->check(CLI::IsMember({"cls", "ret"}));
  fine->add_option("--config", config_path, "RunConfig JSON");
  fine->add_option("--init-from", init_from, "pre-trained checkpoint");

  auto* eval = app.add_subcommand("eval", "Evaluate a fine-tuned checkpoint");
  std::string ckpt_path, split = "test", data_spec, report_path;
  eval->add_option("--ckpt", ckpt_path, "checkpoint")->required();
  eval->add_option("--split", split, "train, val or test");
  eval->add_option("--data", data_spec, "override the split's data (cache or synthetic:CxN[:seed])");
  eval->add_option("--out", report_path, "write the JSON report here instead of stdout");

  auto* comp = app.add_subcommand("complete", "Mask sketches and render the model's completions");
  double mask_ratio = model::kDefaultMaskRatio;
  std::string out_dir, mask_mode;
  std::size_t count = 8;
  comp->add_option("--ckpt", ckpt_path, "pre-trained checkpoint")->required();
  comp->add_option("--mask-ratio", mask_ratio, "fraction of points to mask");
  comp->add_option("--out", out_dir, "directory for SVG files")->required();
  comp->add_option("--split", split, "train, val or test");
  comp->add_option("--data", data_spec, "override the split's data");
  comp->add_option("--count", count, "number of sketches");
  comp->add_option("--mode", mask_mode, "mask strategy (default: the checkpoint's)");
  comp->add_option("--seed", seed, "mask seed");

  auto* sweep = app.add_subcommand("sweep", "Ablation grid over mask mode, architecture or data volume");
  std::string grid_path;
  sweep->add_option("--grid", grid_path, "grid JSON")->required();
  sweep->add_option("--out", report_path, "write rows as JSON here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      data::IngestOptions opts;
      opts.rdp_epsilon = rdp_eps > 0 ? std::optional<double>(rdp_eps) : std::nullopt;
      opts.max_len = max_len;
      data::SketchCache cache;
      const auto rep = data::ingest_ndjson(in_path, opts, cache);
      data::save_cache(out_path, cache);
      std::fprintf(stderr, "%zu sketches in %zu classes, %zu skipped, longest %zu points\n", rep.records,
                   cache.class_names.size(), rep.skipped, rep.max_length);
    } else if (*synth) {
      if (classes < 1 || classes > data::kSyntheticClassCount) throw ConfigError("--classes must lie in 1..10");
      std::ofstream f(out_path);
      if (!f) throw IoError("cannot write", out_path);
      std::mt19937_64 rng(seed);
      for (int i = 0; i < per_class; ++i)
        for (int c = 0; c < classes; ++c) f << data::to_ndjson(data::synthesize_drawing(c, rng)) << '\n';
    } else if (*pre) {
      const auto cfg = load_run_config(opt_path(config_path));
      const auto res = run_pretrain(cfg, print_epoch);
      std::fprintf(stderr, "best epoch %zu%s\n", res.best_epoch,
                   cfg.checkpoint.empty() ? " (no checkpoint path configured)" : "");
    } else if (*fine) {
      auto cfg = load_run_config(opt_path(config_path));
      if (!init_from.empty()) cfg.init_from = init_from;
      const Task t = task == "cls" ? Task::FinetuneCls : Task::FinetuneRet;
      const auto res = run_finetune(cfg, t, print_epoch);
      if (const auto e = res.curve.epochs_to_target(cfg.target_accuracy))
        std::fprintf(stderr, "validation reached %.3f at epoch %zu\n", cfg.target_accuracy, *e);
      std::fprintf(stderr, "best epoch %zu\n", res.best_epoch);
    } else if (*eval) {
      const auto loaded = load_model(ckpt_path);
      const auto& spec = data_spec.empty() ? split_spec(loaded.config, split) : data_spec;
      const auto ds = load_dataset(spec, loaded.model->config().embedding);
      const auto report = evaluate(*loaded.model, ds, loaded.config.eval_batch_size, config_hash(loaded.config));
      write_json(report_path, report);
    } else if (*comp) {
      const auto loaded = load_model(ckpt_path);
      auto cfg = loaded.config;
      if (!mask_mode.empty()) cfg.mask_mode = model::parse_mask_mode(mask_mode);
      const auto& spec = data_spec.empty() ? split_spec(cfg, split) : data_spec;
      const auto ds = load_dataset(spec, loaded.model->config().embedding);
      fs::create_directories(out_dir);
      std::mt19937_64 rng(seed);
      const std::size_t n = std::min(count, ds.size());
      for (std::size_t i = 0; i < n; ++i) {
        const auto& s = ds.sketches[i];
        const auto plan =
            model::sample_mask({s.points.data(), s.length}, cfg.mask_mode, mask_ratio, rng);
        const auto c = complete(*loaded.model, s, plan);
        data::Sketch gt, masked;
        gt.points.assign(s.points.begin(), s.points.begin() + static_cast<std::ptrdiff_t>(s.length));
        masked.points.assign(c.sample.masked.points.begin(),
                             c.sample.masked.points.begin() + static_cast<std::ptrdiff_t>(s.length));
        const auto path = fs::path(out_dir) / ("completion_" + std::to_string(i) + ".svg");
        render_completion(gt, masked, c.completed, plan, path);
        std::fprintf(stderr, "%s\n", path.string().c_str());
      }
    } else if (*sweep) {
      const auto spec = load_sweep(grid_path);
      const auto rows = run_sweep(spec, [](const std::string& m) { std::fprintf(stderr, "%s\n", m.c_str()); });
      std::cout << sweep_table(spec, rows);
      if (!report_path.empty()) write_json(report_path, rows);
    }
  } catch (const skb::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
