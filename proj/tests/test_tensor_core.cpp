#include "doctest.h"

#include <cmath>
#include <random>

#include "lrpabn/gradcheck.hpp"
#include "lrpabn/ops.hpp"
#include "test_util.hpp"

using namespace lrpabn;
using lrpabn::testing::random_tensor;

namespace {

// Direct six-loop cross-correlation kept independent of the im2col path.
Tensor naive_conv(const Tensor& x, const Tensor& k, const Tensor& b, int pad) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), O = k.dim(0);
  const std::size_t Ho = H + 2 * pad - 2, Wo = W + 2 * pad - 2;
  Tensor y({B, O, Ho, Wo});
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t oy = 0; oy < Ho; ++oy)
        for (std::size_t ox = 0; ox < Wo; ++ox) {
          double s = b[o];
          for (std::size_t c = 0; c < C; ++c)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const long iy = long(oy) + ky - pad, ix = long(ox) + kx - pad;
                if (iy < 0 || ix < 0 || iy >= long(H) || ix >= long(W)) continue;
                s += x.at({n, c, std::size_t(iy), std::size_t(ix)}) *
                     k.at({o, c, std::size_t(ky), std::size_t(kx)});
              }
          y.at({n, o, oy, ox}) = s;
        }
  return y;
}

// Weighted sum with fixed random weights, so gradient checks see a
// non-uniform upstream gradient.
Var probe_loss(Tape& tape, Var y, std::uint64_t seed) {
  Var w = tape.constant(random_tensor(y.shape(), seed));
  return ops::sum(ops::hadamard(y, w));
}

void check_grad(const char* what, const LossProgram& f, ModelParams& params) {
  auto report = finite_diff_check(f, params, 1e-4, 64, 11);
  INFO(what << " worst " << report.worst_relative_error << " at " << report.worst_coordinate);
  CHECK(report.passed());
}

}  // namespace

TEST_CASE("tensor rejects inconsistent shapes") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.at({1, 2}) == 6.0);
  CHECK_THROWS_AS(t.reshaped({4}), ShapeError);
}

TEST_CASE("conv2d") {
  SUBCASE("zero input with zero bias gives zeros") {
    Tape tape;
    auto y = ops::conv2d(tape.constant(Tensor({1, 2, 5, 5})), tape.constant(random_tensor({3, 2, 3, 3}, 1)),
                         tape.constant(Tensor({3})), 1);
    for (double v : y.value().data()) CHECK(v == 0.0);
  }
  SUBCASE("ones over ones without padding sums nine values") {
    Tape tape;
    auto y = ops::conv2d(tape.constant(Tensor({1, 1, 3, 3}, 1.0)), tape.constant(Tensor({1, 1, 3, 3}, 1.0)),
                         tape.constant(Tensor({1})), 0);
    REQUIRE(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.value()[0] == 9.0);
  }
  SUBCASE("matches the naive reference") {
    for (int pad : {0, 1}) {
      Tensor x = random_tensor({2, 3, 6, 5}, 2), k = random_tensor({4, 3, 3, 3}, 3), b = random_tensor({4}, 4);
      Tape tape;
      auto y = ops::conv2d(tape.constant(x), tape.constant(k), tape.constant(b), pad);
      CHECK(max_abs_diff(y.value(), naive_conv(x, k, b, pad)) < 1e-12);
    }
  }
  SUBCASE("padding 1 preserves extent") {
    Tape tape;
    auto y = ops::conv2d(tape.constant(Tensor({1, 2, 7, 4})), tape.constant(Tensor({5, 2, 3, 3})),
                         tape.constant(Tensor({5})), 1);
    CHECK(y.shape() == Shape{1, 5, 7, 4});
  }
  SUBCASE("channel mismatch is a shape error") {
    Tape tape;
    CHECK_THROWS_AS(ops::conv2d(tape.constant(Tensor({1, 2, 4, 4})), tape.constant(Tensor({1, 3, 3, 3})),
                                tape.constant(Tensor({1})), 1),
                    ShapeError);
  }
  SUBCASE("gradient of sum w.r.t. the kernel matches finite differences") {
    ModelParams p;
    p.add("x", random_tensor({2, 2, 5, 5}, 5));
    p.add("k", random_tensor({3, 2, 3, 3}, 6));
    p.add("b", random_tensor({3}, 7));
    for (int pad : {0, 1}) {
      check_grad("conv2d",
                 [pad](Tape& t, ModelParams& m) {
                   auto y = ops::conv2d(t.parameter(m.get("x")), t.parameter(m.get("k")), t.parameter(m.get("b")), pad);
                   return probe_loss(t, y, 8);
                 },
                 p);
      check_grad("conv2d sum",
                 [pad](Tape& t, ModelParams& m) {
                   return ops::sum(ops::conv2d(t.parameter(m.get("x")), t.parameter(m.get("k")),
                                               t.parameter(m.get("b")), pad));
                 },
                 p);
    }
  }
}

TEST_CASE("batchnorm") {
  SUBCASE("constant channels normalize to zero") {
    Tape tape;
    auto y = ops::batchnorm(tape.constant(Tensor({2, 3, 2, 2}, 4.0)), tape.constant(Tensor({3}, 1.0)),
                            tape.constant(Tensor({3})));
    for (double v : y.value().data()) CHECK(v == 0.0);
  }
  SUBCASE("zero gamma yields beta") {
    Tape tape;
    Tensor beta({3}, {0.5, -1.0, 2.0});
    auto y = ops::batchnorm(tape.constant(random_tensor({2, 3, 2, 2}, 1)), tape.constant(Tensor({3})),
                            tape.constant(beta));
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 2; ++i)
          for (std::size_t j = 0; j < 2; ++j) CHECK(y.value().at({n, c, i, j}) == beta[c]);
  }
  SUBCASE("output has zero mean and unit variance per channel") {
    Tape tape;
    auto y = ops::batchnorm(tape.constant(random_tensor({3, 2, 4, 4}, 9)), tape.constant(Tensor({2}, 1.0)),
                            tape.constant(Tensor({2})), 0.0);
    for (std::size_t c = 0; c < 2; ++c) {
      double s = 0, s2 = 0;
      for (std::size_t n = 0; n < 3; ++n)
        for (std::size_t i = 0; i < 16; ++i) {
          const double v = y.value()[(n * 2 + c) * 16 + i];
          s += v;
          s2 += v * v;
        }
      CHECK(std::abs(s / 48) < 1e-12);
      CHECK(std::abs(s2 / 48 - 1.0) < 1e-12);
    }
  }
  SUBCASE("a single value per channel is rejected") {
    Tape tape;
    CHECK_THROWS_AS(ops::batchnorm(tape.constant(Tensor({1, 2, 1, 1})), tape.constant(Tensor({2}, 1.0)),
                                   tape.constant(Tensor({2}))),
                    NumericError);
  }
  SUBCASE("gradients") {
    ModelParams p;
    p.add("x", random_tensor({2, 3, 3, 3}, 10));
    p.add("g", random_tensor({3}, 11));
    p.add("b", random_tensor({3}, 12));
    check_grad("batchnorm",
               [](Tape& t, ModelParams& m) {
                 auto y = ops::batchnorm(t.parameter(m.get("x")), t.parameter(m.get("g")), t.parameter(m.get("b")));
                 return probe_loss(t, y, 13);
               },
               p);
  }
}

TEST_CASE("elementwise operators") {
  Tape tape;
  auto r = ops::relu(tape.constant(Tensor({2}, {-1.0, 2.0})));
  CHECK(r.value()[0] == 0.0);
  CHECK(r.value()[1] == 2.0);
  auto h = ops::hadamard(tape.constant(Tensor({2}, {2.0, 3.0})), tape.constant(Tensor({2}, {5.0, 7.0})));
  CHECK(h.value()[0] == 10.0);
  CHECK(h.value()[1] == 21.0);
  Tensor x = random_tensor({3, 4}, 3);
  CHECK(ops::mse(tape.constant(x), tape.constant(x)).value()[0] == 0.0);
  CHECK_THROWS_AS(ops::hadamard(tape.constant(Tensor({2})), tape.constant(Tensor({3}))), ShapeError);
  auto s = ops::sigmoid(tape.constant(Tensor({3}, {0.0, 800.0, -800.0})));
  CHECK(s.value()[0] == 0.5);
  CHECK(s.value()[1] <= 1.0);
  CHECK(s.value()[2] >= 0.0);
}

TEST_CASE("maxpool2x2 halves even extents") {
  Tape tape;
  Tensor x({1, 1, 2, 4}, {1, 5, 2, 0, 3, 4, 8, 1});
  auto y = ops::maxpool2x2(tape.constant(x));
  REQUIRE(y.shape() == Shape{1, 1, 1, 2});
  CHECK(y.value()[0] == 5.0);
  CHECK(y.value()[1] == 8.0);
}

TEST_CASE("matmul and reductions") {
  Tape tape;
  Tensor a({2, 2}, {1, 2, 3, 4});
  auto y = ops::matmul(tape.constant(a), tape.constant(a));
  CHECK(y.value().values() == std::vector<double>{7, 10, 15, 22});
  auto yt = ops::matmul(tape.constant(a), tape.constant(a), true);
  CHECK(yt.value().values() == std::vector<double>{5, 11, 11, 25});
  CHECK_THROWS_AS(ops::matmul(tape.constant(Tensor({2, 3})), tape.constant(Tensor({2, 3}))), ShapeError);
  auto s0 = ops::sum_axis(tape.constant(a), 0);
  CHECK(s0.value().values() == std::vector<double>{4, 6});
  auto s1 = ops::sum_axis(tape.constant(a), 1);
  CHECK(s1.value().values() == std::vector<double>{3, 7});
}

TEST_CASE("backward") {
  SUBCASE("sum gives all-ones gradient") {
    Tape tape;
    auto x = tape.variable(random_tensor({2, 3, 2}, 1));
    tape.backward(ops::sum(x));
    for (double g : tape.grad(x).data()) CHECK(g == 1.0);
  }
  SUBCASE("hand chain rule through mse") {
    Tape tape;
    auto w = tape.variable(Tensor::scalar(1.0));
    auto x = tape.constant(Tensor::scalar(2.0));
    auto y = tape.constant(Tensor::scalar(4.0));
    tape.backward(ops::mse(ops::hadamard(w, x), y));
    CHECK(tape.grad(w)[0] == doctest::Approx(-8.0).epsilon(1e-15));
  }
  SUBCASE("non-scalar loss is rejected") {
    Tape tape;
    auto x = tape.variable(Tensor({2}));
    CHECK_THROWS_AS(tape.backward(x), ShapeError);
  }
  SUBCASE("unreachable parameters keep zero gradient") {
    ModelParams p;
    auto& used = p.add("used", random_tensor({3}, 2));
    auto& unused = p.add("unused", random_tensor({3}, 3));
    p.zero_grad();
    Tape tape;
    auto u = tape.parameter(used);
    tape.parameter(unused);
    tape.backward(ops::sum(ops::hadamard(u, u)));
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(used.grad[i] == doctest::Approx(2 * used.value[i]));
      CHECK(unused.grad[i] == 0.0);
    }
  }
  SUBCASE("each operation is visited once") {
    Tape tape;
    auto x = tape.variable(random_tensor({4}, 4));
    auto y = ops::hadamard(x, x);
    auto z = ops::add(y, x);
    tape.backward(ops::sum(z));
    CHECK(tape.backward_visits() == 3);
    for (std::size_t i = 0; i < 4; ++i) CHECK(tape.grad(x)[i] == doctest::Approx(2 * x.value()[i] + 1));
  }
}

TEST_CASE("finite difference checker") {
  SUBCASE("quadratic form") {
    ModelParams p;
    p.add("p", random_tensor({7}, 5));
    auto report = finite_diff_check(
        [](Tape& t, ModelParams& m) {
          auto v = t.parameter(m.get("p"));
          return ops::sum(ops::hadamard(v, v));
        },
        p, 1e-7, 64);
    CHECK(report.passed());
    CHECK(report.coordinates == 64);
    CHECK(report.worst_relative_error < 1e-7);
  }
  SUBCASE("constant program passes through the denominator guard") {
    ModelParams p;
    p.add("p", random_tensor({3}, 6));
    auto report = finite_diff_check(
        [](Tape& t, ModelParams& m) {
          t.parameter(m.get("p"));
          return t.constant(Tensor::scalar(3.0));
        },
        p, 1e-4, 16);
    CHECK(report.passed());
    CHECK(report.worst_relative_error == 0.0);
  }
}

TEST_CASE("gradient agreement on randomized shapes") {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<std::size_t> ext(2, 4);
  for (int trial = 0; trial < 3; ++trial) {
    const std::size_t b = ext(rng), c = ext(rng), l = ext(rng), n = ext(rng);
    const auto seed = static_cast<std::uint64_t>(100 + trial * 10);
    ModelParams p;
    p.add("a", random_tensor({b, c, l}, seed));
    p.add("b", random_tensor({b, c, l}, seed + 1));
    p.add("w", random_tensor({n, c, c}, seed + 2));
    p.add("u", random_tensor({c, n}, seed + 3));
    p.add("lin_w", random_tensor({n, c * l}, seed + 4));
    p.add("lin_b", random_tensor({n}, seed + 5));
    p.add("m", random_tensor({b, l, l}, seed + 6));
    p.add("img", random_tensor({b, c, 2 * l, 2 * l}, seed + 7));

    auto param = [](Tape& t, ModelParams& m, const char* name) { return t.parameter(m.get(name)); };
    check_grad("bilinear_form",
               [&](Tape& t, ModelParams& m) {
                 return probe_loss(t, ops::bilinear_form(param(t, m, "a"), param(t, m, "w"), param(t, m, "b")), seed);
               },
               p);
    check_grad("project_channels",
               [&](Tape& t, ModelParams& m) {
                 return probe_loss(t, ops::project_channels(param(t, m, "a"), param(t, m, "u")), seed);
               },
               p);
    check_grad("matmul batched transposed",
               [&](Tape& t, ModelParams& m) {
                 return probe_loss(t, ops::matmul(param(t, m, "a"), param(t, m, "b"), true), seed);
               },
               p);
    check_grad("matmul batched",
               [&](Tape& t, ModelParams& m) {
                 return probe_loss(t, ops::matmul(param(t, m, "a"), param(t, m, "m")), seed);
               },
               p);
    check_grad("linear + sigmoid",
               [&](Tape& t, ModelParams& m) {
                 auto x = ops::reshape(param(t, m, "a"), {b, c * l});
                 return probe_loss(t, ops::sigmoid(ops::linear(x, param(t, m, "lin_w"), param(t, m, "lin_b"))), seed);
               },
               p);
    check_grad("signed_sqrt + l2 rows",
               [&](Tape& t, ModelParams& m) {
                 auto x = ops::reshape(param(t, m, "a"), {b, c * l});
                 return probe_loss(t, ops::l2_normalize_rows(ops::signed_sqrt(x)), seed);
               },
               p);
    check_grad("row_cosine",
               [&](Tape& t, ModelParams& m) {
                 auto x = ops::reshape(param(t, m, "a"), {b, c * l});
                 auto y = ops::reshape(param(t, m, "b"), {b, c * l});
                 return probe_loss(t, ops::row_cosine(x, y), seed);
               },
               p);
    check_grad("gather + concat + sum_axis",
               [&](Tape& t, ModelParams& m) {
                 auto g = ops::gather(param(t, m, "a"), {0, 1, 0});
                 auto h = ops::gather(param(t, m, "b"), {1, 1, 0});
                 return probe_loss(t, ops::sum_axis(ops::concat_channels(g, h), 1), seed);
               },
               p);
    check_grad("mse + sub + scale",
               [&](Tape& t, ModelParams& m) {
                 return ops::scale(ops::mse(ops::sub(param(t, m, "a"), param(t, m, "b")), param(t, m, "b")), 3.0);
               },
               p);
    check_grad("maxpool + relu",
               [&](Tape& t, ModelParams& m) {
                 return probe_loss(t, ops::relu(ops::maxpool2x2(param(t, m, "img"))), seed);
               },
               p);
  }
}
