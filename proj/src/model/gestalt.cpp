#include "skb/model/gestalt.hpp"

#include <algorithm>
#include <cmath>

#include "skb/core/ops.hpp"

namespace skb::model {

MaskMode parse_mask_mode(const std::string& s) {
  if (s == "single") return MaskMode::Single;
  if (s == "position") return MaskMode::Position;
  if (s == "state") return MaskMode::State;
  if (s == "full") return MaskMode::Full;
  throw ConfigError("unknown mask mode '" + s + "' (expected single, position, state or full)");
}

std::string to_string(MaskMode m) {
  switch (m) {
    case MaskMode::Single: return "single";
    case MaskMode::Position: return "position";
    case MaskMode::State: return "state";
    case MaskMode::Full: return "full";
  }
  return "full";
}

std::vector<std::size_t> MaskPlan::positions() const {
  std::vector<std::size_t> out(pos_in_stroke);
  out.insert(out.end(), pos_stroke_start.begin(), pos_stroke_start.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> MaskPlan::states() const {
  std::vector<std::size_t> out;
  for (const auto& c : state_by_class) out.insert(out.end(), c.begin(), c.end());
  std::sort(out.begin(), out.end());
  return out;
}

bool MaskPlan::empty() const {
  return pos_in_stroke.empty() && pos_stroke_start.empty() &&
         std::all_of(state_by_class.begin(), state_by_class.end(), [](const auto& c) { return c.empty(); });
}

std::size_t mask_budget(std::size_t n, double ratio) {
  if (ratio < 0.0 || ratio > 1.0) throw ConfigError("mask ratio must lie in [0, 1]");
  return std::min(n, static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 0.5)));
}

std::vector<std::size_t> largest_remainder(std::size_t total, std::span<const std::size_t> counts) {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  std::vector<std::size_t> share(counts.size(), 0);
  if (n == 0 || total == 0) return share;
  if (total > n) throw ContractViolation("largest_remainder: cannot place more units than items");
  std::vector<std::size_t> rem(counts.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    share[i] = total * counts[i] / n;
    rem[i] = total * counts[i] % n;
    assigned += share[i];
  }
  std::vector<std::size_t> order(counts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t j = 0; assigned < total; ++j, ++assigned) ++share[order[j]];
  return share;
}

namespace {

std::vector<std::size_t> draw(std::vector<std::size_t> pool, std::size_t k, std::mt19937_64& rng) {
  // Partial Fisher-Yates; the result is returned in ascending order.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

void require_points(std::span<const data::Point5> points) {
  if (points.empty()) throw ContractViolation("mask sampling needs at least one valid point");
}

}  // namespace

MaskPlan sample_position_mask(std::span<const data::Point5> points, double ratio, std::mt19937_64& rng) {
  require_points(points);
  std::vector<std::size_t> in_stroke, starts;
  for (std::size_t i = 0; i < points.size(); ++i) (data::is_stroke_start(points, i) ? starts : in_stroke).push_back(i);
  const std::size_t k = mask_budget(points.size(), ratio);
  const std::array<std::size_t, 2> counts{in_stroke.size(), starts.size()};
  const auto split = largest_remainder(k, counts);
  MaskPlan plan;
  plan.ratio = ratio;
  plan.pos_in_stroke = draw(std::move(in_stroke), split[0], rng);
  plan.pos_stroke_start = draw(std::move(starts), split[1], rng);
  return plan;
}

MaskPlan sample_state_mask(std::span<const data::Point5> points, double ratio, std::mt19937_64& rng) {
  require_points(points);
  std::array<std::vector<std::size_t>, 3> by_state;
  for (std::size_t i = 0; i < points.size(); ++i) by_state[static_cast<int>(points[i].state())].push_back(i);
  const std::size_t k = mask_budget(points.size(), ratio);
  const std::array<std::size_t, 3> counts{by_state[0].size(), by_state[1].size(), by_state[2].size()};
  const auto split = largest_remainder(k, counts);
  MaskPlan plan;
  plan.ratio = ratio;
  for (std::size_t c = 0; c < 3; ++c) plan.state_by_class[c] = draw(std::move(by_state[c]), split[c], rng);
  return plan;
}

MaskPlan sample_single_mask(std::span<const data::Point5> points, double ratio, std::mt19937_64& rng) {
  require_points(points);
  std::vector<std::size_t> all(points.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto chosen = draw(std::move(all), mask_budget(points.size(), ratio), rng);
  MaskPlan plan;
  plan.ratio = ratio;
  for (auto i : chosen) {
    (data::is_stroke_start(points, i) ? plan.pos_stroke_start : plan.pos_in_stroke).push_back(i);
    plan.state_by_class[static_cast<int>(points[i].state())].push_back(i);
  }
  return plan;
}

MaskPlan sample_mask(std::span<const data::Point5> points, MaskMode mode, double ratio, std::mt19937_64& rng) {
  switch (mode) {
    case MaskMode::Single: return sample_single_mask(points, ratio, rng);
    case MaskMode::Position: return sample_position_mask(points, ratio, rng);
    case MaskMode::State: return sample_state_mask(points, ratio, rng);
    case MaskMode::Full: {
      MaskPlan plan = sample_position_mask(points, ratio, rng);
      plan.state_by_class = sample_state_mask(points, ratio, rng).state_by_class;
      return plan;
    }
  }
  throw ConfigError("unknown mask mode");
}

GestaltSample apply_mask(const data::PaddedSketch& gt, const MaskPlan& plan) {
  GestaltSample s{gt, gt, plan};
  for (auto i : plan.positions()) {
    if (i >= gt.length) throw ContractViolation("mask index " + std::to_string(i) + " beyond sketch length " + std::to_string(gt.length));
    s.masked.points[i].dx = 0.f;
    s.masked.points[i].dy = 0.f;
  }
  for (auto i : plan.states()) {
    if (i >= gt.length) throw ContractViolation("mask index " + std::to_string(i) + " beyond sketch length " + std::to_string(gt.length));
    auto& p = s.masked.points[i];
    p.p1 = p.p2 = p.p3 = 0.f;
  }
  return s;
}

namespace {

std::vector<std::size_t> recon_widths(const EmbeddingConfig& emb, std::size_t hidden) {
  std::vector<std::size_t> w{hidden};
  w.insert(w.end(), emb.refine_hidden.rbegin(), emb.refine_hidden.rend());
  w.push_back(emb.embed_dim);
  w.push_back(5);
  return w;
}

}  // namespace

template <typename T>
ReconstructionNetwork<T>::ReconstructionNetwork(ParameterStore<T>& store, const EmbeddingConfig& emb,
                                                std::size_t hidden, std::mt19937_64& rng)
    : mlp_(store, "sgm.recon", recon_widths(emb, hidden), rng) {}

template <typename T>
std::pair<Var<T>, Var<T>> ReconstructionNetwork<T>::reconstruct(Tape<T>& tape, Var<T> encoder_out) const {
  auto out = mlp_(tape, encoder_out);
  return {ops::slice_cols(out, 0, 2), ops::slice_cols(out, 2, 5)};
}

template <typename T>
SgmTargets<T> SgmTargets<T>::build(std::span<const GestaltSample> samples, std::size_t len) {
  const std::size_t rows = samples.size() * len;
  SgmTargets t{Tensor<T>({rows, 2}), Tensor<T>({rows, 2}), std::vector<int>(rows, -1), std::vector<T>(rows, T{0})};
  for (std::size_t b = 0; b < samples.size(); ++b) {
    const auto& s = samples[b];
    const std::size_t n = std::min(s.gt.length, len);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = s.gt.points[i];
      t.offsets.at(b * len + i, 0) = p.dx;
      t.offsets.at(b * len + i, 1) = p.dy;
      t.states[b * len + i] = static_cast<int>(p.state());
    }
    for (auto i : s.plan.positions()) {
      t.offset_mask.at(b * len + i, 0) = T{1};
      t.offset_mask.at(b * len + i, 1) = T{1};
    }
    for (auto i : s.plan.states()) t.state_mask[b * len + i] = T{1};
  }
  return t;
}

template <typename T>
SgmLoss<T> sgm_loss(const SgmTargets<T>& targets, Var<T> pos_pred, Var<T> state_logits, T lambda_pos,
                    T lambda_state) {
  auto& tape = *pos_pred.tape;
  auto position = ops::l1_loss(pos_pred, tape.constant(targets.offsets), targets.offset_mask);
  auto state = ops::cross_entropy(state_logits, std::span<const int>(targets.states),
                                  std::span<const T>(targets.state_mask));
  auto total = ops::add(ops::scale(position, lambda_pos), ops::scale(state, lambda_state));
  return {total, position, state};
}

data::Sketch complete_sketch(const data::PaddedSketch& masked, const MaskPlan& plan, std::span<const float> pos_pred,
                             std::span<const float> state_logits) {
  const std::size_t n = masked.length;
  if (pos_pred.size() < 2 * n || state_logits.size() < 3 * n)
    throw DimensionError("complete_sketch: predictions cover fewer than " + std::to_string(n) + " points");
  data::Sketch out;
  out.points.assign(masked.points.begin(), masked.points.begin() + static_cast<std::ptrdiff_t>(n));
  for (auto i : plan.positions()) {
    if (i >= n) throw ContractViolation("mask index beyond sketch length");
    out.points[i].dx = pos_pred[2 * i];
    out.points[i].dy = pos_pred[2 * i + 1];
  }
  for (auto i : plan.states()) {
    if (i >= n) throw ContractViolation("mask index beyond sketch length");
    const float* l = state_logits.data() + 3 * i;
    const auto best = static_cast<int>(std::max_element(l, l + 3) - l);
    auto& p = out.points[i];
    p = data::Point5::make(p.dx, p.dy, static_cast<data::PenState>(best));
  }
  out.stroke_ids = data::stroke_ids_from_states(out.points);
  return out;
}

template class ReconstructionNetwork<float>;
template class ReconstructionNetwork<double>;
template struct SgmTargets<float>;
template struct SgmTargets<double>;
template SgmLoss<float> sgm_loss(const SgmTargets<float>&, Var<float>, Var<float>, float, float);
template SgmLoss<double> sgm_loss(const SgmTargets<double>&, Var<double>, Var<double>, double, double);

}  // namespace skb::model
