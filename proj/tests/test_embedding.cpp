#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "skb/model/embedding.hpp"
#include "skb/model/gestalt.hpp"
#include "skb/model/sketch_bert.hpp"

using namespace skb;
using namespace skb::model;

namespace {

struct Fixture {
  EmbeddingConfig cfg;
  ParameterStore<double> store;
  std::mt19937_64 rng{5};
  SketchEmbedding<double> emb;
  explicit Fixture(EmbeddingConfig c = {}, std::size_t hidden = 768) : cfg(c), emb(store, cfg, hidden, 0.02, rng) {}
};

std::vector<std::pair<const Tensor<double>*, const Tensor<double>*>> layers_of(const Mlp<double>& m) {
  std::vector<std::pair<const Tensor<double>*, const Tensor<double>*>> out;
  for (const auto& l : m.layers) out.push_back({&l.w->value, &l.b->value});
  return out;
}

}  // namespace

TEST_CASE("default extents") {
  Fixture f;
  CHECK(f.cfg.embed_dim == 128);
  CHECK(f.emb.w_pt().value.shape() == Shape{128, 5});
  CHECK(f.emb.w_ps().value.shape() == Shape{250, 128});
  CHECK(f.emb.w_str().value.shape() == Shape{50, 128});
  CHECK(f.emb.refine().widths() == std::vector<std::size_t>{128, 256, 512, 768});
  CHECK(f.store.find("refine.2.w") != nullptr);
  CHECK(f.store.find("emb.cls") != nullptr);
}

TEST_CASE("embed_points") {
  Fixture f;
  Tape<double> t;
  auto zero = f.emb.embed_points(t, Tensor<double>({1, 5})).value();
  CHECK(zero.shape() == Shape{1, 128});
  for (double v : zero.vec()) CHECK(v == 0.0);

  const std::vector<double> p{0.3, -0.7, 0, 1, 0};
  auto got = f.emb.embed_points(t, Tensor<double>({1, 5}, p)).value();
  const auto& w = f.emb.w_pt().value;
  for (std::size_t j = 0; j < 128; ++j) {
    double want = 0.0;
    for (std::size_t i = 0; i < 5; ++i) want += w.at(j, i) * p[i];
    CHECK(std::abs(got[j] - want) <= 1e-15 * (1 + std::abs(want)));
  }

  const std::vector<double> q{-0.1, 0.4, 1, 0, 0};
  const double a = 0.6, b = -1.3;
  std::vector<double> mix(5);
  for (std::size_t i = 0; i < 5; ++i) mix[i] = a * p[i] + b * q[i];
  auto eq = f.emb.embed_points(t, Tensor<double>({1, 5}, q)).value();
  auto emix = f.emb.embed_points(t, Tensor<double>({1, 5}, mix)).value();
  for (std::size_t j = 0; j < 128; ++j) CHECK(std::abs(emix[j] - (a * got[j] + b * eq[j])) < 1e-5);
  CHECK_THROWS_AS(f.emb.embed_points(t, Tensor<double>({2, 4})), DimensionError);
}

TEST_CASE("embed_positions and embed_strokes are table lookups") {
  Fixture f;
  Tape<double> t;
  auto a = f.emb.embed_positions(t, 7).value(), b = f.emb.embed_positions(t, 7).value();
  CHECK(a == b);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 128; ++j) CHECK(a.at(i, j) == f.emb.w_ps().value.at(i, j));
  CHECK_THROWS_AS(f.emb.embed_positions(t, 251), ContractViolation);

  const std::vector<std::size_t> single(4, 0);
  auto s = f.emb.embed_strokes(t, single).value();
  for (std::size_t i = 1; i < 4; ++i)
    for (std::size_t j = 0; j < 128; ++j) CHECK(s.at(i, j) == s.at(0, j));
  const std::vector<std::size_t> ids{0, 0, 1};
  auto r = f.emb.embed_strokes(t, ids).value();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 128; ++j) CHECK(r.at(i, j) == f.emb.w_str().value.at(ids[i], j));
  const std::vector<std::size_t> over{50};
  CHECK_THROWS_AS(f.emb.embed_strokes(t, over), ContractViolation);
}

TEST_CASE("combine_and_refine matches an explicit add-then-MLP") {
  Fixture f;
  Tape<double> t;
  const auto layers = layers_of(f.emb.refine());
  auto zero = t.constant(Tensor<double>({1, 128}));
  auto z = f.emb.combine_and_refine(t, zero, zero, zero).value();
  CHECK(z.shape() == Shape{1, 768});
  const auto z_want = oracle::mlp(std::vector<double>(128, 0.0), layers);
  for (std::size_t j = 0; j < 768; ++j) CHECK(std::abs(z[j] - z_want[j]) <= 1e-6 * std::max(1e-12, std::abs(z_want[j])) + 1e-15);

  std::mt19937_64 rng(2);
  auto a = Tensor<double>::randn({1, 128}, 1.0, rng), b = Tensor<double>::randn({1, 128}, 1.0, rng),
       c = Tensor<double>::randn({1, 128}, 1.0, rng);
  auto y = f.emb.combine_and_refine(t, t.constant(a), t.constant(b), t.constant(c)).value();
  std::vector<double> sum(128);
  for (std::size_t i = 0; i < 128; ++i) sum[i] = a[i] + b[i] + c[i];
  const auto want = oracle::mlp(sum, layers);
  for (std::size_t j = 0; j < 768; ++j) CHECK(oracle::rel_error(y[j], want[j], 1e-9) < 1e-6);
}

TEST_CASE("prepend_special") {
  Fixture f(EmbeddingConfig{}, 16);
  Tape<double> t;
  auto alone = f.emb.prepend_special(t, SpecialToken::Cls, std::nullopt, {}, 1);
  CHECK(alone.seq.shape() == Shape{1, 16});
  CHECK(alone.mask == std::vector<std::uint8_t>{1});

  std::mt19937_64 rng(3);
  auto body = t.constant(Tensor<double>::randn({6, 16}, 1.0, rng));
  const std::vector<std::uint8_t> mask{1, 1, 0, 1, 0, 0};
  auto out = f.emb.prepend_special(t, SpecialToken::Ret, body, mask, 2);
  CHECK(out.seq.shape() == Shape{8, 16});
  CHECK(out.mask == std::vector<std::uint8_t>{1, 1, 1, 0, 1, 1, 0, 0});
  for (std::size_t j = 0; j < 16; ++j) {
    CHECK(out.seq.value().at(0, j) == f.emb.token(SpecialToken::Ret).value[j]);
    CHECK(out.seq.value().at(4, j) == f.emb.token(SpecialToken::Ret).value[j]);
    CHECK(out.seq.value().at(5, j) == body.value().at(3, j));
  }
  CHECK(f.emb.token(SpecialToken::Cls).value != f.emb.token(SpecialToken::Ret).value);
}

TEST_CASE("swapping two points swaps their point embeddings but not their position embeddings") {
  Fixture f(EmbeddingConfig{}, 32);
  Tape<double> t;
  Tensor<double> pts({3, 5}, std::vector<double>{0.1, 0.2, 1, 0, 0, -0.5, 0.3, 0, 1, 0, 0.9, -0.1, 0, 0, 1});
  Tensor<double> swapped = pts;
  for (std::size_t c = 0; c < 5; ++c) std::swap(swapped.at(0, c), swapped.at(2, c));
  auto e1 = f.emb.embed_points(t, pts).value(), e2 = f.emb.embed_points(t, swapped).value();
  for (std::size_t j = 0; j < 128; ++j) {
    CHECK(e1.at(0, j) == e2.at(2, j));
    CHECK(e1.at(2, j) == e2.at(0, j));
  }
  auto pos = f.emb.embed_positions(t, 3).value();
  bool rows_differ = false;
  for (std::size_t j = 0; j < 128; ++j) rows_differ = rows_differ || pos.at(0, j) != pos.at(2, j);
  CHECK(rows_differ);
}

TEST_CASE("an SGM backward pass reaches exactly the used table rows") {
  ModelConfig cfg;
  cfg.encoder = {2, 2, 8, 0.0};
  cfg.embedding = {6, 10, 5, {8}};
  cfg.gestalt_head = true;
  SketchBert<double> m(cfg, 3);
  data::PaddedSketch s;
  s.length = 4;
  s.points = {data::Point5::make(0.2f, 0.1f, data::PenState::Draw), data::Point5::make(-0.3f, 0.4f, data::PenState::StrokeEnd),
              data::Point5::make(0.5f, -0.2f, data::PenState::Draw), data::Point5::make(0.1f, 0.6f, data::PenState::SketchEnd)};
  s.mask.assign(4, 1);
  s.stroke_ids = {0, 0, 1, 1};
  MaskPlan plan;
  plan.pos_in_stroke = {1, 3};
  plan.state_by_class[0] = {2};
  const GestaltSample gs = apply_mask(s, plan);
  std::vector<data::PaddedSketch> masked{gs.masked};
  auto batch = make_batch<double>(masked);
  Tape<double> t(true);
  auto [pos, logits] = m.reconstruct(t, batch);
  auto targets = SgmTargets<double>::build(std::span(&gs, 1), batch.len);
  t.backward(sgm_loss(targets, pos, logits, 1.0, 1.0).total);
  auto row_norm = [](const Tensor<double>& g, std::size_t r) {
    double s = 0.0;
    for (std::size_t j = 0; j < g.cols(); ++j) s += std::abs(g.at(r, j));
    return s;
  };
  const auto& gps = m.embedding().w_ps().grad;
  const auto& gstr = m.embedding().w_str().grad;
  for (std::size_t r = 0; r < 10; ++r) CHECK((row_norm(gps, r) > 0) == (r < 4));
  for (std::size_t r = 0; r < 5; ++r) CHECK((row_norm(gstr, r) > 0) == (r < 2));
  for (const auto& p : m.store()) {
    CAPTURE(p.name);
    if (p.name.rfind("emb.cls", 0) == 0 || p.name.rfind("emb.ret", 0) == 0) continue;
    double n = 0.0;
    for (double g : p.grad.vec()) n += std::abs(g);
    CHECK(n > 0.0);
  }
}
