#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "lrpabn/alignment.hpp"
#include "lrpabn/encoder.hpp"
#include "lrpabn/gradcheck.hpp"
#include "lrpabn/ops.hpp"
#include "test_util.hpp"

using namespace lrpabn;
using lrpabn::testing::random_tensor;

namespace {

// Brute-force (A·B) for square row-major matrices.
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
  const std::size_t r = a.dim(0), k = a.dim(1), c = b.dim(1);
  Tensor out({r, c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      double s = 0;
      for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[t * c + j];
      out[i * c + j] = s;
    }
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out({a.dim(1), a.dim(0)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < a.dim(1); ++j) out[j * a.dim(0) + i] = a[i * a.dim(1) + j];
  return out;
}

// trace(DᵀD) with D = TTᵀ - I.
double penalty_oracle(const Tensor& t) {
  Tensor d = matmul_oracle(t, transpose(t));
  for (std::size_t i = 0; i < t.dim(0); ++i) d[i * t.dim(0) + i] -= 1.0;
  Tensor dd = matmul_oracle(transpose(d), d);
  double tr = 0;
  for (std::size_t i = 0; i < t.dim(0); ++i) tr += dd[i * t.dim(0) + i];
  return tr;
}

// Gram-Schmidt on the rows of a random matrix.
Tensor random_orthogonal(std::size_t n, std::uint64_t seed) {
  Tensor a = random_tensor({n, n}, seed);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < i; ++p) {
      double dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += a[i * n + j] * a[p * n + j];
      for (std::size_t j = 0; j < n; ++j) a[i * n + j] -= dot * a[p * n + j];
    }
    double nrm = 0;
    for (std::size_t j = 0; j < n; ++j) nrm += a[i * n + j] * a[i * n + j];
    nrm = std::sqrt(nrm);
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] /= nrm;
  }
  return a;
}

EncoderConfig tiny_encoder() {
  EncoderConfig cfg;
  cfg.image_size = 8;
  cfg.filters = 3;
  cfg.blocks = 2;
  cfg.pooled_blocks = 2;
  return cfg;
}

}  // namespace

TEST_CASE("embed produces 64x441 maps under the default configuration") {
  EncoderConfig cfg;
  CHECK(cfg.positions() == 441);
  ModelParams params;
  std::mt19937_64 rng(1);
  add_encoder_params(params, cfg, rng);
  Tensor image = random_tensor({3, 84, 84}, 2, 0.0, 1.0);
  FeatureMap map = embed_image(params, cfg, image);
  CHECK(map.channels() == 64);
  CHECK(map.positions() == 441);

  SUBCASE("identical images give identical maps") {
    FeatureMap again = embed_image(params, cfg, image);
    CHECK(max_abs_diff(map.values(), again.values()) == 0.0);
  }
  SUBCASE("zero image gives a zero map") {
    CHECK_FALSE(params.contains("encoder.block1.conv.bias"));
    FeatureMap zero = embed_image(params, cfg, Tensor({3, 84, 84}, 0.0));
    CHECK(max_abs_diff(zero.values(), Tensor({64, 441}, 0.0)) == 0.0);
  }
  SUBCASE("wrong input size is rejected") {
    CHECK_THROWS_AS(embed_image(params, cfg, Tensor({3, 80, 80}, 0.0)), ShapeError);
    CHECK_THROWS_AS(embed_image(params, cfg, Tensor({1, 84, 84}, 0.0)), ShapeError);
  }
}

TEST_CASE("transform generator starts at the identity") {
  ModelParams params;
  std::mt19937_64 rng(3);
  add_alignment_params(params, 4, rng);
  FeatureMap support(random_tensor({5, 4}, 4));
  AlignmentTransform t = generate_transform(params, support);
  Tensor eye({4, 4}, 0.0);
  for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
  CHECK(max_abs_diff(t.matrix, eye) == 0.0);
  CHECK(t.penalty == 0.0);
  CHECK_THROWS_AS(generate_transform(params, FeatureMap(random_tensor({5, 3}, 4))), ShapeError);
}

TEST_CASE("orthogonality penalty") {
  CHECK(orthogonality_penalty(Tensor({2, 2}, {2, 0, 0, 2})) == doctest::Approx(18.0).epsilon(1e-12));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Tensor t = random_tensor({3, 3}, seed);
    const double p = orthogonality_penalty(t);
    CHECK(p >= 0.0);
    CHECK(p == doctest::Approx(penalty_oracle(t)).epsilon(1e-10));
    CHECK(orthogonality_penalty(random_orthogonal(5, seed)) == doctest::Approx(0.0).epsilon(1e-20).scale(1.0));
    CHECK(orthogonality_penalty(random_orthogonal(5, seed)) < 1e-24);
  }
}

TEST_CASE("apply_alignment") {
  FeatureMap x(2, 2, {1, 2, 3, 4});
  SUBCASE("identity") {
    FeatureMap y = apply_alignment(x, Tensor({2, 2}, {1, 0, 0, 1}));
    CHECK(max_abs_diff(y.values(), x.values()) == 0.0);
  }
  SUBCASE("column swap") {
    FeatureMap y = apply_alignment(x, Tensor({2, 2}, {0, 1, 1, 0}));
    CHECK(y.values().values() == std::vector<double>{2, 1, 4, 3});
  }
  SUBCASE("associativity against brute force") {
    FeatureMap m(random_tensor({3, 4}, 10));
    Tensor t1 = random_tensor({4, 4}, 11), t2 = random_tensor({4, 4}, 12);
    FeatureMap lhs = apply_alignment(apply_alignment(m, t1), t2);
    FeatureMap rhs = apply_alignment(m, matmul_oracle(t1, t2));
    CHECK(max_abs_diff(lhs.values(), rhs.values()) < 1e-12);
    CHECK(max_abs_diff(apply_alignment(m, t1).values(), matmul_oracle(m.values(), t1)) < 1e-12);
  }
  SUBCASE("permutation preserves the multiset of columns") {
    FeatureMap m(random_tensor({3, 5}, 13));
    const std::size_t perm[5] = {3, 0, 4, 1, 2};
    Tensor t({5, 5}, 0.0);
    for (std::size_t j = 0; j < 5; ++j) t[perm[j] * 5 + j] = 1.0;
    FeatureMap y = apply_alignment(m, t);
    auto cols = [](const FeatureMap& f) {
      std::vector<std::vector<double>> c;
      for (std::size_t j = 0; j < f.positions(); ++j) c.push_back(f.column(j));
      std::sort(c.begin(), c.end());
      return c;
    };
    CHECK(cols(m) == cols(y));
  }
  CHECK_THROWS_AS(apply_alignment(x, Tensor({3, 3}, 0.0)), ShapeError);
}

TEST_CASE("alignment losses") {
  FeatureMap ones(2, 2, {1, 1, 1, 1});
  FeatureMap zeros(2, 2, {0, 0, 0, 0});
  FeatureMap a(random_tensor({3, 4}, 20)), b(random_tensor({3, 4}, 21));
  Tensor eye({4, 4}, 0.0);
  for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;

  SUBCASE("niv") {
    CHECK(align_loss_niv(a, a) == 0.0);
    CHECK(align_loss_niv(ones, zeros) == doctest::Approx(1.0));
    CHECK(align_loss_niv(a, b) == doctest::Approx(align_loss_niv(b, a)));
    CHECK_THROWS_AS(align_loss_niv(a, ones), ShapeError);
  }
  SUBCASE("cpt") {
    CHECK(align_loss_cpt(a, a, eye) == 0.0);
    // channel sums [1,1] vs [0,0]
    FeatureMap q(2, 2, {0.25, 0.5, 0.75, 0.5});
    CHECK(align_loss_cpt(q, zeros, random_tensor({2, 2}, 22)) == doctest::Approx(1.0));
    // redistribute values across channels while keeping each column sum
    Tensor shuffled = a.values();
    for (std::size_t j = 0; j < 4; ++j) {
      const double moved = 0.3 * static_cast<double>(j + 1);
      shuffled[0 * 4 + j] += moved;
      shuffled[2 * 4 + j] -= moved;
    }
    Tensor t = random_tensor({4, 4}, 23);
    CHECK(align_loss_cpt(FeatureMap(shuffled), b, t) == doctest::Approx(align_loss_cpt(a, b, t)).epsilon(1e-12));
    CHECK(align_loss_cpt(a, b, t) >= 0.0);
  }
  SUBCASE("cosine") {
    CHECK(align_loss_cosine(a, a) == doctest::Approx(0.0).scale(1.0));
    Tensor scaled = a.values();
    for (double& v : scaled.data()) v *= 3.5;
    CHECK(align_loss_cosine(a, FeatureMap(scaled)) == doctest::Approx(0.0).scale(1.0));
    CHECK(align_loss_cosine(FeatureMap(1, 2, {1, 0}), FeatureMap(1, 2, {0, 1})) == doctest::Approx(1.0));
    CHECK(align_loss_cosine(a, b) >= 0.0);
    CHECK_THROWS_AS(align_loss_cosine(a, FeatureMap(Tensor({3, 4}, 0.0))), NumericError);
  }
}

TEST_CASE("alignment losses pass the gradient check through encoder and generator") {
  const EncoderConfig cfg = tiny_encoder();
  const std::size_t hw = cfg.positions();
  ModelParams params;
  std::mt19937_64 rng(30);
  add_encoder_params(params, cfg, rng);
  add_alignment_params(params, hw, rng);
  // move the generator off its identity start so every path carries gradient
  params.get("align.fc2.weight").value = random_tensor({hw * hw, hw}, 31, -0.3, 0.3);
  params.get("align.fc1.bias").value.fill(0.5);
  const Tensor images = random_tensor({4, 3, 8, 8}, 32, 0.0, 1.0);

  for (AlignMode mode : {AlignMode::Niv, AlignMode::Cpt, AlignMode::Cosine}) {
    auto program = [&](Tape& tape, ModelParams& p) {
      ParamBinding bind(tape, p);
      Var maps = embed(bind, cfg, tape.constant(images));
      Var query = ops::gather(maps, {0, 1});
      Var support = ops::gather(maps, {2, 3});
      Var t = generate_transforms(bind, support);
      Var loss;
      switch (mode) {
        case AlignMode::Niv: loss = align_loss_niv(query, apply_alignment(support, t)); break;
        case AlignMode::Cpt: loss = align_loss_cpt(query, support, t); break;
        default: loss = align_loss_cosine(query, apply_alignment(support, t)); break;
      }
      return ops::add(loss, ops::scale(orthogonality_penalty(t), 0.01));
    };
    auto report = finite_diff_check(program, params, 1e-4, 96, 33);
    INFO(to_string(mode) << " worst " << report.worst_relative_error << " at " << report.worst_coordinate << " analytic "
                         << report.worst_analytic << " numeric " << report.worst_numeric);
    CHECK(report.passed());
  }
}
