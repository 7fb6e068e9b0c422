#include "skb/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "skb/core/ops.hpp"

namespace skb::train {

using model::GestaltSample;
using model::MaskPlan;
using model::SequenceBatch;

std::optional<std::size_t> TrainingCurve::epochs_to_target(double target) const {
  for (const auto& r : epochs) {
    if (!std::isnan(r.val_metric) && r.val_metric >= target) return r.epoch;
  }
  return std::nullopt;
}

namespace {

nlohmann::json number_or_null(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

}  // namespace

void to_json(nlohmann::json& j, const EpochRecord& r) {
  j = {{"epoch", r.epoch},
       {"loss", number_or_null(r.loss)},
       {"position_loss", number_or_null(r.position_loss)},
       {"state_loss", number_or_null(r.state_loss)},
       {"train_accuracy", number_or_null(r.train_accuracy)},
       {"val_metric", number_or_null(r.val_metric)},
       {"seconds", r.seconds}};
}

void to_json(nlohmann::json& j, const TrainingCurve& c) { j = c.epochs; }

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 of the pair
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::unique_ptr<Model> build_model(const RunConfig& cfg, Task task, std::size_t num_classes) {
  auto mc = cfg.model;
  mc.gestalt_head = task == Task::Pretrain;
  mc.classifier_head = task == Task::FinetuneCls;
  mc.retrieval_head = task == Task::FinetuneRet;
  mc.num_classes = task == Task::Pretrain ? 0 : num_classes;
  return std::make_unique<Model>(mc, cfg.seed);
}

std::size_t init_from_checkpoint(Model& model, const std::string& path) {
  const auto ckpt = load_checkpoint(path);
  const auto n = load_parameters(ckpt, model.store());
  if (n == 0) throw ConfigError("checkpoint " + path + " shares no parameters with the model");
  return n;
}

AdamConfig adam_config(const RunConfig& cfg) {
  AdamConfig a;
  a.learning_rate = cfg.learning_rate;
  return a;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<std::size_t> shuffled(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

// Shuffled batches of similar length: the shuffled order is cut into windows of
// eight batches, each window is sorted by length and split, and the batch order
// is shuffled once more.
std::vector<std::vector<std::size_t>> make_batches(const Dataset& ds, std::size_t batch_size, std::mt19937_64& rng) {
  auto order = shuffled(ds.size(), rng);
  const std::size_t window = 8 * batch_size;
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t w = 0; w < order.size(); w += window) {
    const auto first = order.begin() + static_cast<std::ptrdiff_t>(w);
    const auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), w + window));
    std::stable_sort(first, last, [&](std::size_t a, std::size_t b) {
      return ds.sketches[a].length < ds.sketches[b].length;
    });
    for (auto at = first; at < last; at += static_cast<std::ptrdiff_t>(std::min<std::size_t>(batch_size, last - at)))
      batches.emplace_back(at, at + static_cast<std::ptrdiff_t>(std::min<std::size_t>(batch_size, last - at)));
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

std::vector<data::PaddedSketch> gather(const Dataset& ds, std::span<const std::size_t> idx) {
  std::vector<data::PaddedSketch> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(ds.sketches[i]);
  return out;
}

std::span<const data::Point5> valid_points(const data::PaddedSketch& s) { return {s.points.data(), s.length}; }

std::vector<GestaltSample> mask_batch(const std::vector<data::PaddedSketch>& sketches, const RunConfig& cfg,
                                      std::mt19937_64& rng) {
  std::vector<GestaltSample> out;
  out.reserve(sketches.size());
  for (const auto& s : sketches)
    out.push_back(model::apply_mask(s, model::sample_mask(valid_points(s), cfg.mask_mode, cfg.mask_ratio, rng)));
  return out;
}

struct SgmStep {
  model::SgmLoss<float> loss;
  Var<float> state_logits;
  model::SgmTargets<float> targets;
};

SgmStep sgm_forward(Tape<float>& tape, const Model& m, const std::vector<GestaltSample>& samples,
                    const RunConfig& cfg) {
  std::vector<data::PaddedSketch> masked;
  masked.reserve(samples.size());
  for (const auto& s : samples) masked.push_back(s.masked);
  const auto batch = model::make_batch<float>(masked);
  auto targets = model::SgmTargets<float>::build(samples, batch.len);
  auto [pos, state] = m.reconstruct(tape, batch);
  auto loss = model::sgm_loss(targets, pos, state, static_cast<float>(cfg.lambda_pos),
                              static_cast<float>(cfg.lambda_state));
  return {loss, state, std::move(targets)};
}

void require_labels(const Dataset& ds, std::size_t classes) {
  if (!ds.labelled()) throw ConfigError("fine-tuning needs labelled sketches");
  for (int l : ds.labels) {
    if (static_cast<std::size_t>(l) >= classes)
      throw ConfigError("label " + std::to_string(l) + " outside the model's " + std::to_string(classes) + " classes");
  }
}

void require_data(const Dataset& ds, const char* what) {
  if (ds.size() == 0) throw ConfigError(std::string(what) + " set is empty");
}

}  // namespace

TrainingCurve pretrain(Model& model, Adam<float>& adam, const RunConfig& cfg, const Dataset& train,
                       const Dataset* val, const EpochHook& hook) {
  if (!model.has_gestalt()) throw ConfigError("pre-training needs a model with the reconstruction network");
  require_data(train, "training");
  std::mt19937_64 order_rng(derive_seed(cfg.seed, 1));
  std::mt19937_64 mask_rng(derive_seed(cfg.seed, 2));
  TrainingCurve curve;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = Clock::now();
    double total = 0.0, pos = 0.0, state = 0.0;
    std::size_t batches = 0;
    for (const auto& idx : make_batches(train, cfg.batch_size, order_rng)) {
      const auto samples = mask_batch(gather(train, idx), cfg, mask_rng);
      Tape<float> tape(true, derive_seed(cfg.seed, 1000 + adam.steps()));
      auto step = sgm_forward(tape, model, samples, cfg);
      model.store().zero_grads();
      tape.backward(step.loss.total);
      adam.step();
      total += step.loss.total.value().item();
      pos += step.loss.position.value().item();
      state += step.loss.state.value().item();
      ++batches;
    }
    EpochRecord r;
    r.epoch = epoch;
    r.loss = total / static_cast<double>(batches);
    r.position_loss = pos / static_cast<double>(batches);
    r.state_loss = state / static_cast<double>(batches);
    if (val && val->size() > 0) r.val_metric = evaluate_sgm(model, *val, cfg, derive_seed(cfg.seed, 3)).loss;
    r.seconds = seconds_since(t0);
    curve.epochs.push_back(r);
    if (hook) hook(r);
  }
  return curve;
}

namespace {

double batch_accuracy(const Tensor<float>& logits, std::span<const int> labels) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = logits.row(i);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    hits += best == labels[i];
  }
  return static_cast<double>(hits);
}

// Positive: another sketch of the anchor's class (the anchor itself when it is
// alone). Negative: uniform over sketches of the other classes.
model::TripletBatch sample_triplets(const Dataset& ds, std::span<const std::size_t> anchors,
                                    const std::vector<std::vector<std::size_t>>& by_class, std::mt19937_64& rng) {
  model::TripletBatch b;
  for (auto a : anchors) {
    const int y = ds.labels[a];
    const auto& same = by_class[static_cast<std::size_t>(y)];
    std::size_t p = a;
    if (same.size() > 1) {
      std::uniform_int_distribution<std::size_t> pick(0, same.size() - 2);
      p = same[pick(rng)];
      if (p == a) p = same.back();
    }
    std::uniform_int_distribution<std::size_t> pick_neg(0, ds.size() - same.size() - 1);
    std::size_t k = pick_neg(rng), n = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.labels[i] == y) continue;
      if (k-- == 0) {
        n = i;
        break;
      }
    }
    b.anchor.push_back(ds.sketches[a]);
    b.positive.push_back(ds.sketches[p]);
    b.negative.push_back(ds.sketches[n]);
    b.anchor_labels.push_back(y);
    b.negative_labels.push_back(ds.labels[n]);
  }
  return b;
}

double classification_top1(const Model& model, const Dataset& ds, std::size_t batch_size) {
  return model::top_k_accuracy(class_scores(model, ds, batch_size), ds.labels, 1);
}

double retrieval_top1(const Model& model, const Dataset& ds, std::size_t batch_size) {
  if (ds.size() < 2) return kNaN;
  const auto e = embeddings(model, ds, batch_size);
  std::vector<std::ptrdiff_t> self(ds.size());
  std::iota(self.begin(), self.end(), std::ptrdiff_t{0});
  return model::retrieval_top_k(e, ds.labels, e, ds.labels, 1, self);
}

}  // namespace

TrainingCurve finetune(Model& model, Adam<float>& adam, const RunConfig& cfg, Task task, const Dataset& train,
                       const Dataset* val, const EpochHook& hook) {
  const bool cls = task == Task::FinetuneCls;
  if (!cls && task != Task::FinetuneRet) throw ConfigError("finetune expects finetune_cls or finetune_ret");
  if (cls && !model.has_classifier()) throw ConfigError("model has no classification head");
  if (!cls && !model.has_retrieval()) throw ConfigError("model has no retrieval head");
  require_data(train, "training");
  require_labels(train, model.config().num_classes);
  if (val && val->size() > 0) require_labels(*val, model.config().num_classes);

  std::vector<std::vector<std::size_t>> by_class(model.config().num_classes);
  for (std::size_t i = 0; i < train.size(); ++i) by_class[static_cast<std::size_t>(train.labels[i])].push_back(i);
  if (!cls) {
    const auto populated = std::count_if(by_class.begin(), by_class.end(), [](const auto& c) { return !c.empty(); });
    if (populated < 2) throw ConfigError("retrieval fine-tuning needs at least two classes in the training set");
  }

  std::mt19937_64 order_rng(derive_seed(cfg.seed, 1));
  std::mt19937_64 triplet_rng(derive_seed(cfg.seed, 4));
  TrainingCurve curve;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = Clock::now();
    double total = 0.0, hits = 0.0;
    std::size_t batches = 0;
    for (const auto& idx : make_batches(train, cfg.batch_size, order_rng)) {
      Tape<float> tape(true, derive_seed(cfg.seed, 1000 + adam.steps()));
      Var<float> loss;
      if (cls) {
        std::vector<int> labels;
        for (auto i : idx) labels.push_back(train.labels[i]);
        auto logits = model.class_logits(tape, model::make_batch<float>(gather(train, idx)));
        loss = ops::cross_entropy(logits, std::span<const int>(labels));
        hits += batch_accuracy(logits.value(), labels);
      } else {
        auto triplets = sample_triplets(train, idx, by_class, triplet_rng);
        loss = model::retrieval_objective(tape, model, triplets, static_cast<float>(cfg.triplet_margin)).total;
      }
      model.store().zero_grads();
      tape.backward(loss);
      adam.step();
      total += loss.value().item();
      ++batches;
    }
    EpochRecord r;
    r.epoch = epoch;
    r.loss = total / static_cast<double>(batches);
    if (cls) {
      r.train_accuracy = cfg.track_train_accuracy ? classification_top1(model, train, cfg.eval_batch_size)
                                                  : hits / static_cast<double>(train.size());
    } else if (cfg.track_train_accuracy) {
      r.train_accuracy = retrieval_top1(model, train, cfg.eval_batch_size);
    }
    if (val && val->size() > 0)
      r.val_metric = cls ? classification_top1(model, *val, cfg.eval_batch_size)
                         : retrieval_top1(model, *val, cfg.eval_batch_size);
    r.seconds = seconds_since(t0);
    curve.epochs.push_back(r);
    if (hook) hook(r);
    if (cfg.stop_at_target && !std::isnan(r.val_metric) && r.val_metric >= cfg.target_accuracy) break;
  }
  return curve;
}

SgmEval evaluate_sgm(const Model& model, const Dataset& ds, const RunConfig& cfg, std::uint64_t seed) {
  if (!model.has_gestalt()) throw ConfigError("model has no reconstruction network");
  require_data(ds, "evaluation");
  std::mt19937_64 rng(seed);
  SgmEval out;
  double weight = 0.0;
  std::size_t correct = 0;
  for (std::size_t at = 0; at < ds.size(); at += cfg.eval_batch_size) {
    const std::size_t end = std::min(ds.size(), at + cfg.eval_batch_size);
    std::vector<std::size_t> idx(end - at);
    std::iota(idx.begin(), idx.end(), at);
    const auto samples = mask_batch(gather(ds, idx), cfg, rng);
    Tape<float> tape(false);
    auto step = sgm_forward(tape, model, samples, cfg);
    const double w = static_cast<double>(end - at);
    out.loss += w * step.loss.total.value().item();
    out.position_loss += w * step.loss.position.value().item();
    out.state_loss += w * step.loss.state.value().item();
    weight += w;
    const auto& logits = step.state_logits.value();
    for (std::size_t r = 0; r < step.targets.states.size(); ++r) {
      if (step.targets.state_mask[r] == 0.f) continue;
      const auto row = logits.row(r);
      const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      correct += best == step.targets.states[r];
      ++out.masked_states;
    }
  }
  out.loss /= weight;
  out.position_loss /= weight;
  out.state_loss /= weight;
  out.state_accuracy = out.masked_states ? static_cast<double>(correct) / static_cast<double>(out.masked_states) : 0.0;
  return out;
}

namespace {

// Runs `forward` over length-sorted batches and returns its rows in dataset order.
template <typename F>
Tensor<double> stack_batches(const Dataset& ds, std::size_t batch_size, F&& forward) {
  require_data(ds, "evaluation");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ds.sketches[a].length < ds.sketches[b].length; });
  std::vector<double> rows;
  std::size_t width = 0;
  for (std::size_t at = 0; at < ds.size(); at += batch_size) {
    const std::size_t end = std::min(ds.size(), at + batch_size);
    const auto idx = std::span(order).subspan(at, end - at);
    Tape<float> tape(false);
    const auto out = forward(tape, model::make_batch<float>(gather(ds, idx)));
    if (width == 0) {
      width = out.cols();
      rows.assign(ds.size() * width, 0.0);
    }
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto src = out.row(r);
      std::copy(src.begin(), src.end(), rows.begin() + static_cast<std::ptrdiff_t>(idx[r] * width));
    }
  }
  return Tensor<double>({ds.size(), width}, std::move(rows));
}

}  // namespace

Tensor<double> class_scores(const Model& model, const Dataset& ds, std::size_t batch_size) {
  return stack_batches(ds, batch_size, [&](Tape<float>& tape, const SequenceBatch<float>& b) {
    return model.class_logits(tape, b).value();
  });
}

Tensor<double> embeddings(const Model& model, const Dataset& ds, std::size_t batch_size) {
  return stack_batches(ds, batch_size, [&](Tape<float>& tape, const SequenceBatch<float>& b) {
    if (model.has_retrieval()) return model.retrieval(tape, b).embedding.value();
    return model.token_features(tape, b, model::SpecialToken::Cls).value();
  });
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = {{"top1", r.top1},
       {"top5", r.top5},
       {"map", r.map},
       {"num_queries", r.num_queries},
       {"config_hash", r.config_hash},
       {"protocol", r.protocol}};
}

EvalReport evaluate(const Model& model, const Dataset& test, std::size_t batch_size, const std::string& hash) {
  require_data(test, "test");
  if (!test.labelled()) throw ConfigError("evaluation needs labelled sketches");
  EvalReport r;
  r.num_queries = test.size();
  r.config_hash = hash;
  std::vector<std::ptrdiff_t> self(test.size());
  std::iota(self.begin(), self.end(), std::ptrdiff_t{0});
  const auto emb = embeddings(model, test, batch_size);
  if (model.has_classifier()) {
    const auto scores = class_scores(model, test, batch_size);
    r.top1 = model::top_k_accuracy(scores, test.labels, 1);
    r.top5 = model::top_k_accuracy(scores, test.labels, std::min<std::size_t>(5, scores.cols()));
    r.protocol = "classification top-k; mAP over [CLS] features, test vs test excluding the query";
  } else {
    const std::size_t k5 = std::min<std::size_t>(5, test.size() - 1);
    if (k5 == 0) throw ContractViolation("retrieval evaluation needs at least two test sketches");
    r.top1 = model::retrieval_top_k(emb, test.labels, emb, test.labels, 1, self);
    r.top5 = model::retrieval_top_k(emb, test.labels, emb, test.labels, k5, self);
    r.protocol = "nearest-neighbour top-k and mAP, test vs test excluding the query";
  }
  if (test.size() > 1) r.map = model::mean_average_precision(emb, test.labels, emb, test.labels, self);
  return r;
}

Checkpoint make_checkpoint(const Model& model, const Adam<float>* adam, const RunConfig& cfg,
                           const std::vector<std::string>& class_names, std::size_t epoch) {
  Checkpoint ckpt;
  ckpt.header["format"] = "sketch-bert";
  ckpt.header["run_config"] = cfg;
  ckpt.header["model"] = model.config();
  ckpt.header["class_names"] = class_names;
  ckpt.header["epoch"] = epoch;
  append_parameters(ckpt, model.store());
  if (adam) append_optimizer(ckpt, *adam);
  return ckpt;
}

LoadedModel load_model(const std::filesystem::path& path) {
  const auto ckpt = load_checkpoint(path);
  LoadedModel out;
  try {
    out.config = ckpt.header.at("run_config").get<RunConfig>();
    out.class_names = ckpt.header.value("class_names", std::vector<std::string>{});
    out.epoch = ckpt.header.value("epoch", std::size_t{0});
    const auto mc = ckpt.header.at("model").get<model::ModelConfig>();
    out.model = std::make_unique<Model>(mc, out.config.seed);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint " + path.string() + " header: " + e.what());
  }
  const auto loaded = load_parameters(ckpt, out.model->store());
  if (loaded != out.model->store().size())
    throw FormatError("checkpoint " + path.string() + " is missing model parameters");
  out.adam = std::make_unique<Adam<float>>(out.model->store(), adam_config(out.config));
  load_optimizer(ckpt, out.model->store(), *out.adam);
  return out;
}

Completion complete(const Model& model, const data::PaddedSketch& sketch, const MaskPlan& plan) {
  Completion c;
  c.sample = model::apply_mask(sketch, plan);
  const std::vector<data::PaddedSketch> one{c.sample.masked};
  Tape<float> tape(false);
  auto [pos, state] = model.reconstruct(tape, model::make_batch<float>(one));
  c.completed = model::complete_sketch(c.sample.masked, plan, pos.value().data(), state.value().data());
  return c;
}

namespace {

Dataset load_split(const std::string& spec, const RunConfig& cfg, const char* what) {
  if (spec.empty()) throw ConfigError(std::string("config names no ") + what + " data");
  return load_dataset(spec, cfg.model.embedding);
}

void save_if(const std::string& path, const Checkpoint& ckpt) {
  if (!path.empty()) save_checkpoint(path, ckpt);
}

}  // namespace

RunResult run_pretrain(const RunConfig& cfg, const EpochHook& hook) {
  const auto train = load_split(cfg.data.train, cfg, "training");
  std::optional<Dataset> val;
  if (!cfg.data.val.empty()) val = load_split(cfg.data.val, cfg, "validation");
  auto model = build_model(cfg, Task::Pretrain, 0);
  if (!cfg.init_from.empty()) init_from_checkpoint(*model, cfg.init_from);
  Adam<float> adam(model->store(), adam_config(cfg));
  RunResult out;
  double best = std::numeric_limits<double>::infinity();
  out.curve = pretrain(*model, adam, cfg, train, val ? &*val : nullptr, [&](const EpochRecord& r) {
    const double metric = std::isnan(r.val_metric) ? r.loss : r.val_metric;
    if (metric < best) {
      best = metric;
      out.best_epoch = r.epoch;
      save_if(cfg.checkpoint, make_checkpoint(*model, &adam, cfg, train.class_names, r.epoch));
    }
    if (hook) hook(r);
  });
  return out;
}

RunResult run_finetune(const RunConfig& cfg, Task task, const EpochHook& hook) {
  const auto train = load_split(cfg.data.train, cfg, "training");
  std::optional<Dataset> val;
  if (!cfg.data.val.empty()) val = load_split(cfg.data.val, cfg, "validation");
  auto model = build_model(cfg, task, train.num_classes());
  if (!cfg.init_from.empty()) init_from_checkpoint(*model, cfg.init_from);
  Adam<float> adam(model->store(), adam_config(cfg));
  auto run_cfg = cfg;
  run_cfg.task = task;
  RunResult out;
  double best = -std::numeric_limits<double>::infinity();
  out.curve = finetune(*model, adam, run_cfg, task, train, val ? &*val : nullptr, [&](const EpochRecord& r) {
    const double metric = std::isnan(r.val_metric) ? r.train_accuracy : r.val_metric;
    if (std::isnan(metric) || metric > best) {
      if (!std::isnan(metric)) best = metric;
      out.best_epoch = r.epoch;
      save_if(cfg.checkpoint, make_checkpoint(*model, &adam, run_cfg, train.class_names, r.epoch));
    }
    if (hook) hook(r);
  });
  return out;
}

}  // namespace skb::train
