#include "skb/train/run_config.hpp"

#include <cctype>
#include <cstdlib>
#include <cstdio>
#include <fstream>

#include "skb/error.hpp"

namespace skb::train {

Task parse_task(const std::string& s) {
  if (s == "pretrain") return Task::Pretrain;
  if (s == "finetune_cls" || s == "cls") return Task::FinetuneCls;
  if (s == "finetune_ret" || s == "ret") return Task::FinetuneRet;
  if (s == "eval") return Task::Eval;
  if (s == "complete") return Task::Complete;
  if (s == "render") return Task::Render;
  throw ConfigError("unknown task '" + s + "'");
}

std::string to_string(Task t) {
  switch (t) {
    case Task::Pretrain: return "pretrain";
    case Task::FinetuneCls: return "finetune_cls";
    case Task::FinetuneRet: return "finetune_ret";
    case Task::Eval: return "eval";
    case Task::Complete: return "complete";
    case Task::Render: return "render";
  }
  return "pretrain";
}

void RunConfig::validate() const {
  model.validate();
  if (mask_ratio < 0.0 || mask_ratio > 1.0) throw ConfigError("mask_ratio must lie in [0, 1]");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0 || eval_batch_size == 0) throw ConfigError("batch sizes must be positive");
  if (lambda_pos < 0.0 || lambda_state < 0.0) throw ConfigError("loss weights must be non-negative");
  if (triplet_margin < 0.0) throw ConfigError("triplet_margin must be non-negative");
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"task", to_string(c.task)},
       {"model", c.model},
       {"mask_mode", model::to_string(c.mask_mode)},
       {"mask_ratio", c.mask_ratio},
       {"lambda_pos", c.lambda_pos},
       {"lambda_state", c.lambda_state},
       {"learning_rate", c.learning_rate},
       {"batch_size", c.batch_size},
       {"eval_batch_size", c.eval_batch_size},
       {"epochs", c.epochs},
       {"seed", c.seed},
       {"data", {{"train", c.data.train}, {"val", c.data.val}, {"test", c.data.test}}},
       {"checkpoint", c.checkpoint},
       {"init_from", c.init_from},
       {"target_accuracy", c.target_accuracy},
       {"stop_at_target", c.stop_at_target},
       {"track_train_accuracy", c.track_train_accuracy},
       {"triplet_margin", c.triplet_margin}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  const RunConfig d;
  try {
    c.task = parse_task(j.value("task", to_string(d.task)));
    c.model = j.contains("model") ? j.at("model").get<model::ModelConfig>() : d.model;
    c.mask_mode = model::parse_mask_mode(j.value("mask_mode", model::to_string(d.mask_mode)));
    c.mask_ratio = j.value("mask_ratio", d.mask_ratio);
    c.lambda_pos = j.value("lambda_pos", d.lambda_pos);
    c.lambda_state = j.value("lambda_state", d.lambda_state);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.eval_batch_size = j.value("eval_batch_size", d.eval_batch_size);
    c.epochs = j.value("epochs", d.epochs);
    c.seed = j.value("seed", d.seed);
    if (j.contains("data")) {
      const auto& p = j.at("data");
      c.data.train = p.value("train", std::string{});
      c.data.val = p.value("val", std::string{});
      c.data.test = p.value("test", std::string{});
    }
    c.checkpoint = j.value("checkpoint", d.checkpoint);
    c.init_from = j.value("init_from", d.init_from);
    c.target_accuracy = j.value("target_accuracy", d.target_accuracy);
    c.stop_at_target = j.value("stop_at_target", d.stop_at_target);
    c.track_train_accuracy = j.value("track_train_accuracy", d.track_train_accuracy);
    c.triplet_margin = j.value("triplet_margin", d.triplet_margin);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
}

namespace {

std::string env_name(const std::string& path) {
  std::string out = "SKB";
  for (char ch : path) out += ch == '/' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return out;
}

}  // namespace

void apply_env_overrides(nlohmann::json& j, const EnvLookup& lookup) {
  const auto flat = j.flatten();
  auto patch = nlohmann::json::object();
  for (const auto& [path, value] : flat.items()) {
    const auto v = lookup(env_name(path));
    if (!v) continue;
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(*v);
    } catch (const nlohmann::json::parse_error&) {
      parsed = *v;
    }
    if (value.is_string() && !parsed.is_string()) parsed = *v;
    patch[path] = parsed;
  }
  if (patch.empty()) return;
  auto merged = flat;
  for (const auto& [path, value] : patch.items()) merged[path] = value;
  j = merged.unflatten();
}

std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& path, const EnvLookup& lookup) {
  nlohmann::json j = RunConfig{};
  if (path) {
    std::ifstream in(*path);
    if (!in) throw IoError("cannot open config", path->string());
    nlohmann::json file;
    try {
      file = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("config " + path->string() + ": " + e.what(), e.byte);
    }
    if (!file.is_object()) throw ConfigError("config " + path->string() + " is not a JSON object");
    j.merge_patch(file);
  }
  apply_env_overrides(j, lookup);
  auto c = j.get<RunConfig>();
  c.validate();
  return c;
}

std::string config_hash(const RunConfig& c) {
  const std::string s = nlohmann::json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace skb::train
