#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "oracles.hpp"
#include "skb/core/adam.hpp"
#include "skb/core/checkpoint.hpp"
#include "skb/core/kernels.hpp"
#include "skb/core/ops.hpp"
#include "skb/core/reference.hpp"

using namespace skb;
using oracle::Mat;

namespace {

using VarD = Var<double>;

Tensor<double> randn(Shape s, std::mt19937_64& rng, double sd = 1.0) { return Tensor<double>::randn(std::move(s), sd, rng); }

// sum(y * R) for a fixed random R, so every output entry carries a distinct weight.
VarD project(Tape<double>& t, VarD y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return ops::sum(ops::mul(y, t.constant(randn(y.shape(), rng))));
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST_CASE("matmul examples") {
  Tape<float> t;
  Tensor<float> eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.f;
  std::mt19937_64 rng(1);
  auto b = Tensor<float>::randn({3, 4}, 1.f, rng);
  CHECK(ops::matmul(t.constant(eye), t.constant(b)).value() == b);
  CHECK(ops::matmul(t.constant(b), t.constant(Tensor<float>({4, 2}))).value() == Tensor<float>({3, 2}));

  Tape<double> td;
  auto a = oracle::random_mat(4, 3, rng), c = oracle::random_mat(3, 2, rng);
  auto got = ops::matmul(td.constant(oracle::to_tensor<double>(a)), td.constant(oracle::to_tensor<double>(c))).value();
  auto want = oracle::matmul(a, c);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(got.at(i, j) == want[i][j]);
  CHECK_THROWS_AS(ops::matmul(td.constant(Tensor<double>({2, 3})), td.constant(Tensor<double>({2, 3}))), DimensionError);
}

TEST_CASE("softmax examples and invariants") {
  Tape<double> t;
  auto u = ops::softmax(t.constant(Tensor<double>({3}, 0.0)), 0).value();
  for (std::size_t i = 0; i < 3; ++i) CHECK(u[i] == doctest::Approx(1.0 / 3));
  auto big = ops::softmax(t.constant(Tensor<double>({2}, std::vector<double>{1000, 0})), 0).value();
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] == doctest::Approx(0.0));

  std::mt19937_64 rng(2);
  auto x = oracle::random_mat(1, 5, rng)[0];
  auto got = ops::softmax(t.constant(Tensor<double>({5}, x)), 0).value();
  auto want = oracle::softmax(x);
  for (std::size_t i = 0; i < 5; ++i) CHECK(rel(got[i], want[i]) < 1e-6);

  Tape<float> tf;
  auto m = Tensor<float>::randn({6, 7}, 3.f, rng);
  for (std::size_t axis : {0u, 1u}) {
    auto s = ops::softmax(tf.constant(m), axis).value();
    auto shifted = m;
    if (axis == 1)
      for (std::size_t r = 0; r < 6; ++r)
        for (std::size_t c = 0; c < 7; ++c) shifted.at(r, c) += static_cast<float>(r) * 10.f;
    else
      for (std::size_t r = 0; r < 6; ++r)
        for (std::size_t c = 0; c < 7; ++c) shifted.at(r, c) += static_cast<float>(c) * 10.f;
    auto s2 = ops::softmax(tf.constant(shifted), axis).value();
    const std::size_t slices = axis == 1 ? 6 : 7, len = axis == 1 ? 7 : 6;
    for (std::size_t a = 0; a < slices; ++a) {
      double sum = 0.0;
      for (std::size_t b = 0; b < len; ++b) {
        const auto r = axis == 1 ? a : b, c = axis == 1 ? b : a;
        sum += s.at(r, c);
        CHECK(std::abs(s.at(r, c) - s2.at(r, c)) < 1e-6);
      }
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("layer norm examples") {
  Tape<double> t;
  auto g = t.constant(Tensor<double>({4}, 1.0)), b = t.constant(Tensor<double>({4}));
  auto z = ops::layer_norm(t.constant(Tensor<double>({1, 4}, 3.0)), g, b, 1e-5).value();
  for (std::size_t i = 0; i < 4; ++i) CHECK(z[i] == 0.0);
  Tensor<double> std_in({1, 4}, std::vector<double>{1, -1, 1, -1});
  auto y = ops::layer_norm(t.constant(std_in), g, b, 1e-12).value();
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(y[i] - std_in[i]) < 1e-5);

  std::mt19937_64 rng(3);
  auto x = oracle::random_mat(1, 6, rng)[0], gg = oracle::random_mat(1, 6, rng)[0], bb = oracle::random_mat(1, 6, rng)[0];
  auto got = ops::layer_norm(t.constant(Tensor<double>({1, 6}, x)), t.constant(Tensor<double>({6}, gg)),
                             t.constant(Tensor<double>({6}, bb)), 1e-5)
                 .value();
  auto want = oracle::layer_norm(x, gg, bb, 1e-5);
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(got[i] - want[i]) < 1e-6);
}

TEST_CASE("gelu examples") {
  Tape<double> t;
  auto y = ops::gelu(t.constant(Tensor<double>({3}, std::vector<double>{0.0, 1.0, 12.0}))).value();
  CHECK(y[0] == 0.0);
  CHECK(std::abs(y[1] - oracle::gelu(1.0)) < 1e-6);
  CHECK(y[2] == doctest::Approx(12.0));
  Tape<float> tf;
  auto yf = ops::gelu(tf.constant(Tensor<float>({1}, 1.f))).value();
  CHECK(std::abs(yf[0] - oracle::gelu(1.0)) < 1e-6);
}

TEST_CASE("l1 loss examples") {
  Tape<double> t;
  std::mt19937_64 rng(4);
  auto target = randn({3, 2}, rng);
  Tensor<double> full({3, 2}, 1.0);
  CHECK(ops::l1_loss(t.constant(target), t.constant(target), full).value().item() == 0.0);
  auto shifted = target;
  for (auto& v : shifted.vec()) v += 0.5;
  CHECK(ops::l1_loss(t.constant(shifted), t.constant(target), full).value().item() == doctest::Approx(0.5));
  auto pred = randn({3, 2}, rng);
  Tensor<double> half({3, 2}, std::vector<double>{1, 0, 0, 1, 1, 0});
  const double got = ops::l1_loss(t.constant(pred), t.constant(target), half).value().item();
  CHECK(got == oracle::l1_loss(pred.vec(), target.vec(), half.vec()));
  CHECK(ops::l1_loss(t.constant(pred), t.constant(target), Tensor<double>({3, 2})).value().item() == 0.0);
}

TEST_CASE("cross entropy examples") {
  Tape<double> t;
  std::vector<int> labels{0, 2, 1, 1};
  CHECK(ops::cross_entropy(t.constant(Tensor<double>({4, 3})), labels).value().item() ==
        doctest::Approx(std::log(3.0)));
  Tensor<double> sure({1, 3}, std::vector<double>{0, 1000, 0});
  CHECK(ops::cross_entropy(t.constant(sure), std::vector<int>{1}).value().item() < 1e-12);
  std::mt19937_64 rng(5);
  auto logits = oracle::random_mat(4, 3, rng);
  std::vector<double> mask{1, 0, 1, 1};
  const double got =
      ops::cross_entropy(t.constant(oracle::to_tensor<double>(logits)), labels, std::span<const double>(mask))
          .value()
          .item();
  CHECK(rel(got, oracle::cross_entropy(logits, labels, mask)) < 1e-6);
  CHECK_THROWS_AS(ops::cross_entropy(t.constant(Tensor<double>({1, 3})), std::vector<int>{3}), IndexError);
}

TEST_CASE("backward: hand-derived and disconnected gradients") {
  ParameterStore<double> store;
  std::mt19937_64 rng(6);
  auto& w = store.add("w", randn({3, 2}, rng));
  auto& unused = store.add("unused", randn({2}, rng));
  auto x = randn({4, 3}, rng);
  Tape<double> t(true);
  t.backward(ops::sum(ops::matmul(t.constant(x), t.param(w))));
  for (std::size_t i = 0; i < 3; ++i) {
    double col = 0.0;
    for (std::size_t r = 0; r < 4; ++r) col += x.at(r, i);
    for (std::size_t j = 0; j < 2; ++j) CHECK(w.grad.at(i, j) == doctest::Approx(col));
  }
  for (auto g : unused.grad.vec()) CHECK(g == 0.0);
}

TEST_CASE("gradients accumulate across backward passes") {
  ParameterStore<double> store;
  std::mt19937_64 rng(7);
  auto& w = store.add("w", randn({3, 3}, rng));
  auto run = [&] {
    Tape<double> t(true);
    t.backward(project(t, ops::gelu(ops::matmul(t.param(w), t.param(w)))));
  };
  run();
  const auto once = w.grad;
  run();
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(w.grad[i] == 2 * once[i]);
  store.zero_grads();
  for (auto g : w.grad.vec()) CHECK(g == 0.0);
}

TEST_CASE("every operation passes the finite-difference check") {
  std::mt19937_64 rng(8);
  ParameterStore<double> s;
  auto& a = s.add("a", randn({4, 3}, rng));
  auto& b = s.add("b", randn({3, 5}, rng));
  auto& c = s.add("c", randn({4, 3}, rng));
  auto& bias = s.add("bias", randn({5}, rng));
  auto& gain = s.add("gain", randn({3}, rng));
  auto& shift = s.add("shift", randn({3}, rng));
  auto& tok = s.add("tok", randn({1, 3}, rng));

  std::vector<std::pair<const char*, std::function<VarD(Tape<double>&)>>> cases{
      {"matmul", [&](auto& t) { return project(t, ops::matmul(t.param(a), t.param(b))); }},
      {"matmul_nt", [&](auto& t) { return project(t, ops::matmul_nt(t.param(a), t.param(c))); }},
      {"linear", [&](auto& t) { return project(t, ops::linear(t.param(a), t.param(b), t.param(bias))); }},
      {"add", [&](auto& t) { return project(t, ops::add(t.param(a), t.param(c))); }},
      {"sub", [&](auto& t) { return project(t, ops::sub(t.param(a), t.param(c))); }},
      {"mul", [&](auto& t) { return project(t, ops::mul(t.param(a), t.param(c))); }},
      {"scale", [&](auto& t) { return project(t, ops::scale(t.param(a), 1.7)); }},
      {"add_scalar", [&](auto& t) { return project(t, ops::mul(ops::add_scalar(t.param(a), 0.3), t.param(a))); }},
      {"gelu", [&](auto& t) { return project(t, ops::gelu(t.param(a))); }},
      {"relu", [&](auto& t) { return project(t, ops::relu(t.param(a))); }},
      {"layer_norm", [&](auto& t) { return project(t, ops::layer_norm(t.param(a), t.param(gain), t.param(shift), 1e-5)); }},
      {"softmax rows", [&](auto& t) { return project(t, ops::softmax(t.param(a), 1)); }},
      {"softmax cols", [&](auto& t) { return project(t, ops::softmax(t.param(a), 0)); }},
      {"dropout", [&](auto& t) { return project(t, ops::dropout(t.param(a), 0.3)); }},
      {"gather_rows",
       [&](auto& t) {
         const std::vector<std::size_t> ids{2, 0, 2, 3, 1};
         return project(t, ops::gather_rows(t.param(a), ids));
       }},
      {"prepend_rows", [&](auto& t) { return project(t, ops::prepend_rows(t.param(tok), t.param(a), 2)); }},
      {"slice_cols", [&](auto& t) { return project(t, ops::slice_cols(t.param(b), 1, 4)); }},
      {"sum", [&](auto& t) { return ops::sum(ops::mul(t.param(a), t.param(a))); }},
      {"mean", [&](auto& t) { return ops::mean(ops::mul(t.param(a), t.param(c))); }},
      {"squared_distance", [&](auto& t) { return project(t, ops::squared_distance(t.param(a), t.param(c))); }},
      {"l1_loss",
       [&](auto& t) {
         Tensor<double> m({4, 3}, std::vector<double>{1, 0, 1, 1, 1, 0, 0, 1, 1, 1, 0, 1});
         return ops::l1_loss(t.param(a), t.param(c), m);
       }},
      {"cross_entropy",
       [&](auto& t) {
         const std::vector<int> labels{0, 4, 2, 1};
         const std::vector<double> m{1, 1, 0, 1};
         return ops::cross_entropy(ops::matmul(t.param(a), t.param(b)), labels, std::span<const double>(m));
       }},
  };
  for (auto& [name, fn] : cases) {
    CAPTURE(name);
    const auto res = oracle::check_gradients(s, fn);
    CHECK(res.max_rel < 1e-4);
  }
}

TEST_CASE("attention passes the finite-difference check with padding and dropout") {
  std::mt19937_64 rng(9);
  ParameterStore<double> s;
  auto& q = s.add("q", randn({8, 4}, rng));
  auto& k = s.add("k", randn({8, 4}, rng));
  auto& v = s.add("v", randn({8, 4}, rng));
  const std::vector<std::uint8_t> valid{1, 1, 1, 0, 1, 1, 0, 0};
  for (double p : {0.0, 0.25}) {
    CAPTURE(p);
    auto res = oracle::check_gradients(s, [&](auto& t) {
      return project(t, ops::attention(t.param(q), t.param(k), t.param(v), valid, 2, 2, p));
    });
    CHECK(res.max_rel < 1e-4);
  }
}

TEST_CASE("adam examples") {
  ParameterStore<double> s;
  auto& p = s.add("p", Tensor<double>({1}, 2.0));
  AdamState<double> st(p.value.shape(), {1e-3, 0.9, 0.999, 1e-8});
  p.grad[0] = -0.37;
  adam_step(p, st);
  CHECK(std::abs(p.value[0] - (2.0 + 1e-3)) < 1e-9);
  CHECK(st.step_count == 1);

  const double before = p.value[0], m0 = st.first_moment[0], v0 = st.second_moment[0];
  p.grad[0] = 0.0;
  adam_step(p, st);
  CHECK(st.step_count == 2);
  CHECK(std::abs(st.first_moment[0]) < std::abs(m0));
  CHECK(st.second_moment[0] < v0);
  CHECK(p.value[0] != before);  // momentum keeps moving a parameter with zero gradient

  auto& fresh = s.add("fresh", Tensor<double>({2}, 1.0));
  AdamState<double> fs(fresh.value.shape(), {});
  fresh.grad.fill(0.0);
  adam_step(fresh, fs);
  CHECK(fresh.value == Tensor<double>({2}, 1.0));

  // f(x) = (x - 3)^2 stepped by hand
  auto& x = s.add("x", Tensor<double>({1}, 0.5));
  AdamState<double> xs(x.value.shape(), {0.1, 0.9, 0.999, 1e-8});
  double hx = 0.5, m = 0, vv = 0;
  for (int step = 1; step <= 3; ++step) {
    const double g = 2 * (hx - 3);
    x.grad[0] = 2 * (x.value[0] - 3);
    adam_step(x, xs);
    m = 0.9 * m + 0.1 * g;
    vv = 0.999 * vv + 0.001 * g * g;
    hx -= 0.1 * (m / (1 - std::pow(0.9, step))) / (std::sqrt(vv / (1 - std::pow(0.999, step))) + 1e-8);
    CHECK(std::abs(x.value[0] - hx) < 1e-10);
  }
  CHECK_THROWS_AS(adam_step(x, fs), DimensionError);
}

TEST_CASE("parallel kernels agree with the serial reference") {
  std::mt19937_64 rng(10);
  using kernels::Trans;
  for (auto [m, n, k] : {std::tuple{1ul, 1ul, 1ul}, {7ul, 13ul, 5ul}, {33ul, 17ul, 40ul}, {65ul, 129ul, 31ul}}) {
    for (auto ta : {Trans::No, Trans::Yes})
      for (auto tb : {Trans::No, Trans::Yes})
        for (bool acc : {false, true}) {
          auto a = Tensor<float>::randn({m * k}, 1.f, rng), b = Tensor<float>::randn({k * n}, 1.f, rng);
          auto c0 = Tensor<float>::randn({m * n}, 1.f, rng);
          auto c1 = c0;
          kernels::gemm<float>(ta, tb, m, n, k, a.data(), b.data(), c0.data(), acc);
          reference::gemm<float>(ta, tb, m, n, k, a.data(), b.data(), c1.data(), acc);
          CAPTURE(m);
          CAPTURE(n);
          CAPTURE(k);
          // same summation order; only FMA contraction may differ, so bound by sum |a||b|
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              double mag = std::abs(c1[i * n + j]);
              for (std::size_t p = 0; p < k; ++p) {
                const float av = ta == Trans::Yes ? a[p * m + i] : a[i * k + p];
                const float bv = tb == Trans::Yes ? b[j * k + p] : b[p * n + j];
                mag += std::abs(av * bv);
              }
              CHECK(std::abs(c0[i * n + j] - c1[i * n + j]) <= 1e-6 * mag);
            }
        }
  }
  auto x = Tensor<float>::randn({37 * 23}, 2.f, rng);
  Tensor<float> y0({37 * 23}), y1({37 * 23});
  kernels::softmax_rows<float>(37, 23, x.data(), y0.data());
  reference::softmax_rows<float>(37, 23, x.data(), y1.data());
  for (std::size_t i = 0; i < y0.size(); ++i) CHECK(std::abs(y0[i] - y1[i]) <= 1e-6f * std::max(1.f, y1[i]));
  auto g = Tensor<float>::randn({23}, 1.f, rng), bb = Tensor<float>::randn({23}, 1.f, rng);
  Tensor<float> mean({37}), rstd({37});
  kernels::layer_norm_rows<float>(37, 23, x.data(), g.data(), bb.data(), 1e-5f, y0.data(), mean.data(), rstd.data());
  reference::layer_norm_rows<float>(37, 23, x.data(), g.data(), bb.data(), 1e-5f, y1.data());
  for (std::size_t i = 0; i < y0.size(); ++i) CHECK(std::abs(y0[i] - y1[i]) < 1e-5f);
  kernels::gelu<float>(x.data(), y0.data());
  reference::gelu<float>(x.data(), y1.data());
  for (std::size_t i = 0; i < y0.size(); ++i) CHECK(std::abs(y0[i] - y1[i]) < 1e-6f * std::max(1.f, std::abs(y1[i])));
}

TEST_CASE("fast exp matches std::exp") {
  for (float x = -87.f; x <= 0.f; x += 0.01f) {
    const float want = std::exp(x);
    CHECK(std::abs(kernels::exp_nonpositive(x) - want) <= 4e-7f * want + 1e-38f);
  }
  CHECK(kernels::exp_nonpositive(0.f) == 1.f);
  CHECK(kernels::exp_nonpositive(-88.f) == 0.f);
  CHECK(kernels::exp_nonpositive(-1e9f) == 0.f);
}

TEST_CASE("forward passes are deterministic and finite") {
  std::mt19937_64 rng(11);
  auto a = Tensor<float>::randn({64, 32}, 1.f, rng), b = Tensor<float>::randn({32, 48}, 1.f, rng);
  auto run = [&] {
    Tape<float> t;
    return ops::softmax(ops::gelu(ops::matmul(t.constant(a), t.constant(b))), 1).value();
  };
  auto y = run();
  CHECK(y == run());
  for (float v : y.vec()) CHECK(std::isfinite(v));
}

TEST_CASE("tensor and tape contracts") {
  CHECK_THROWS_AS(Tensor<float>({2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}), DimensionError);
  ParameterStore<float> s;
  s.add("x", Tensor<float>({2}));
  CHECK_THROWS_AS(s.add("x", Tensor<float>({2})), ConfigError);
  CHECK_THROWS_AS(s.get("y"), ConfigError);
  Tape<float> t(true);
  CHECK_THROWS_AS(t.backward(t.param(s.get("x"))), ContractViolation);
  auto& p = s.get("x");
  CHECK(t.param(p).id == t.param(p).id);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  std::mt19937_64 rng(12);
  ParameterStore<float> s;
  s.add("enc.w", Tensor<float>::randn({3, 4}, 1.f, rng));
  s.add("enc.b", Tensor<float>::randn({4}, 1.f, rng));
  s.add("special", Tensor<float>({3}, std::vector<float>{-0.f, 1e-45f, 3.4e38f}));
  Adam<float> adam(s, {});
  for (auto& p : s) p.grad.fill(0.1f);
  adam.step();
  Checkpoint ck;
  ck.header["step"] = 1;
  append_parameters(ck, s);
  append_optimizer(ck, adam);
  const auto bytes = encode_checkpoint(ck);
  const auto back = decode_checkpoint(bytes);
  CHECK(encode_checkpoint(back) == bytes);

  ParameterStore<float> s2;
  s2.add("enc.w", Tensor<float>({3, 4}));
  s2.add("enc.b", Tensor<float>({4}));
  s2.add("special", Tensor<float>({3}));
  CHECK(load_parameters(back, s2) == 3);
  for (auto& p : s2) {
    const auto& orig = s.get(p.name).value.vec();
    CHECK(std::memcmp(orig.data(), p.value.vec().data(), orig.size() * sizeof(float)) == 0);
  }
  Adam<float> adam2(s2, {});
  load_optimizer(back, s2, adam2);
  CHECK(adam2.steps() == adam.steps());

  ParameterStore<float> bad;
  bad.add("enc.b", Tensor<float>({5}));
  CHECK_THROWS_AS(load_parameters(back, bad), ConfigError);
  auto trunc = bytes;
  trunc.resize(bytes.size() - 3);
  CHECK_THROWS(decode_checkpoint(trunc));
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/x.ckpt"), IoError);
}
