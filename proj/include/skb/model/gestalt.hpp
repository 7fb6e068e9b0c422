#pragma once

// Sketch Gestalt Model: class-proportional masking of point offsets and pen
// states, the reconstruction network, the masked-only L1 + cross-entropy
// objective, and completion of masked sketches.

#include <array>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "skb/core/tape.hpp"
#include "skb/data/sketch.hpp"
#include "skb/model/config.hpp"
#include "skb/model/layers.hpp"

namespace skb::model {

// Pre-training mask strategies: Single is BERT-style uniform masking of whole
// points; Position/State mask only one attribute class-proportionally; Full
// masks both independently.
enum class MaskMode { Single, Position, State, Full };

MaskMode parse_mask_mode(const std::string& s);
std::string to_string(MaskMode m);

inline constexpr double kDefaultMaskRatio = 0.15;

struct MaskPlan {
  // Position-masked indices by offset class.
  std::vector<std::size_t> pos_in_stroke;
  std::vector<std::size_t> pos_stroke_start;
  // State-masked indices by true state (p1, p2, p3).
  std::array<std::vector<std::size_t>, 3> state_by_class;
  double ratio = kDefaultMaskRatio;

  std::vector<std::size_t> positions() const;  // sorted union of both offset classes
  std::vector<std::size_t> states() const;     // sorted union of the three state classes
  bool empty() const;
};

// round(ratio * n), halves rounded up.
std::size_t mask_budget(std::size_t n, double ratio);

// Splits `total` across classes in proportion to `counts`: floors first, then
// the leftover units go to the largest remainders (ties: lower class index).
std::vector<std::size_t> largest_remainder(std::size_t total, std::span<const std::size_t> counts);

// `points` are the valid (unpadded) points of one sketch.
MaskPlan sample_position_mask(std::span<const data::Point5> points, double ratio, std::mt19937_64& rng);
MaskPlan sample_state_mask(std::span<const data::Point5> points, double ratio, std::mt19937_64& rng);
// Uniform whole-point mask without class proportionality (the Single strategy).
MaskPlan sample_single_mask(std::span<const data::Point5> points, double ratio, std::mt19937_64& rng);
MaskPlan sample_mask(std::span<const data::Point5> points, MaskMode mode, double ratio, std::mt19937_64& rng);

struct GestaltSample {
  data::PaddedSketch gt;
  data::PaddedSketch masked;
  MaskPlan plan;
};

// Zeroes dx, dy of position-masked points and p1..p3 of state-masked points.
GestaltSample apply_mask(const data::PaddedSketch& gt, const MaskPlan& plan);

// Mirror of the refine network: H -> reversed(refine hidden) -> d_E -> 5,
// registered as "sgm.recon.{i}.{w,b}".
template <typename T>
class ReconstructionNetwork {
 public:
  ReconstructionNetwork(ParameterStore<T>& store, const EmbeddingConfig& emb, std::size_t hidden,
                        std::mt19937_64& rng);

  // encoder_out [n x H] -> (offset predictions [n x 2], state logits [n x 3])
  std::pair<Var<T>, Var<T>> reconstruct(Tape<T>& tape, Var<T> encoder_out) const;

  const Mlp<T>& mlp() const noexcept { return mlp_; }

 private:
  Mlp<T> mlp_;
};

// Ground truth and masks of a padded batch, flattened to [batch*len] rows.
template <typename T>
struct SgmTargets {
  Tensor<T> offsets;        // [rows x 2]
  Tensor<T> offset_mask;    // [rows x 2], 1 where the position was masked
  std::vector<int> states;  // true state class, -1 on padding
  std::vector<T> state_mask;

  static SgmTargets build(std::span<const GestaltSample> samples, std::size_t len);
};

template <typename T>
struct SgmLoss {
  Var<T> total;
  Var<T> position;
  Var<T> state;
};

template <typename T>
SgmLoss<T> sgm_loss(const SgmTargets<T>& targets, Var<T> pos_pred, Var<T> state_logits, T lambda_pos,
                    T lambda_state);

// Fills masked offsets from `pos_pred` [>=n x 2] and masked states with the
// one-hot argmax of `state_logits` [>=n x 3]; everything else is copied from
// the masked input.
data::Sketch complete_sketch(const data::PaddedSketch& masked, const MaskPlan& plan, std::span<const float> pos_pred,
                             std::span<const float> state_logits);

}  // namespace skb::model
