#include "doctest.h"

#include "lrpabn/alignment.hpp"
#include "lrpabn/gradcheck.hpp"
#include "lrpabn/model.hpp"
#include "lrpabn/ops.hpp"
#include "test_util.hpp"

using namespace lrpabn;
using lrpabn::testing::random_tensor;

namespace {

ModelConfig small_config(PoolingVariant variant, AlignMode align) {
  ModelConfig cfg;
  cfg.encoder.image_size = 8;
  cfg.encoder.filters = 4;
  cfg.encoder.align = align;
  cfg.pooling.variant = variant;
  cfg.pooling.bilinear_dim = 6;
  cfg.comparator_hidden = 5;
  return cfg;
}

EpisodeBatch random_batch(std::size_t way, std::size_t shot, std::size_t query_per_class, std::size_t size,
                          std::uint64_t seed) {
  EpisodeBatch b;
  b.way = way;
  b.shot = shot;
  b.queries = way * query_per_class;
  b.images = random_tensor({way * shot + b.queries, 3, size, size}, seed, 0.0, 1.0);
  for (std::size_t j = 0; j < way; ++j) b.class_labels.push_back(static_cast<int>(10 + j));
  for (std::size_t j = 0; j < way; ++j)
    for (std::size_t q = 0; q < query_per_class; ++q) b.query_labels.push_back(static_cast<int>(10 + j));
  return b;
}

const PoolingVariant kVariants[] = {PoolingVariant::PairwiseOuter, PoolingVariant::LowRankFull,
                                    PoolingVariant::LowRankFactorized, PoolingVariant::ConcatBaseline};
const AlignMode kAligns[] = {AlignMode::None, AlignMode::Niv, AlignMode::Cpt, AlignMode::Cosine};

}  // namespace

TEST_CASE("model forward shapes and score range") {
  for (auto variant : kVariants)
    for (auto align : kAligns) {
      INFO(to_string(variant) << " / " << to_string(align));
      Model model(small_config(variant, align), 1);
      EpisodeBatch batch = random_batch(3, 2, 2, 8, 2);
      RelationMatrix r = model.score(batch);
      CHECK(r.queries == 6);
      CHECK(r.classes == 3);
      for (double s : r.scores) {
        CHECK(s > 0.0);
        CHECK(s < 1.0);
      }
      Tensor f = model.comparative_features(batch);
      CHECK(f.shape() == Shape{18, comparative_width(model.config().pooling, 4, 4)});
      CHECK(model.has_alignment() == (align != AlignMode::None));
    }
}

TEST_CASE("alignment layer is the identity before training") {
  Model model(small_config(PoolingVariant::LowRankFactorized, AlignMode::Cpt), 3);
  Tape tape;
  ParamBinding bind(tape, std::as_const(model.params()));
  Var t = generate_transforms(bind, tape.constant(random_tensor({4, 4, 4}, 4, 0.0, 3.0)));
  double worst = 0.0;
  for (std::size_t b = 0; b < 4; ++b)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        worst = std::max(worst, std::abs(t.value()[(b * 4 + i) * 4 + j] - (i == j ? 1.0 : 0.0)));
  CHECK(worst == 0.0);
}

TEST_CASE("architecture inference from parameters") {
  for (auto variant : kVariants)
    for (auto align : {AlignMode::None, AlignMode::Cpt}) {
      ModelConfig cfg = small_config(variant, align);
      ModelParams params = build_params(cfg, 5);
      ModelConfig base;
      base.pooling.variant = variant;
      ModelConfig got = infer_model_config(params, base);
      INFO(to_string(variant) << " / " << to_string(align));
      CHECK(got.encoder.filters == 4);
      CHECK(got.pooling.variant == variant);
      CHECK(got.comparator_hidden == 5);
      CHECK((got.encoder.align != AlignMode::None) == (align != AlignMode::None));
      if (align != AlignMode::None || variant == PoolingVariant::ConcatBaseline) {
        CHECK(got.encoder.positions() == 4);
      }
      if (variant == PoolingVariant::LowRankFactorized || variant == PoolingVariant::LowRankFull) {
        CHECK(got.pooling.bilinear_dim == 6);
      }
    }
}

TEST_CASE("incompatible parameters are rejected") {
  ModelConfig cfg = small_config(PoolingVariant::LowRankFactorized, AlignMode::Cpt);
  ModelParams params = build_params(cfg, 6);
  ModelConfig wider = cfg;
  wider.pooling.bilinear_dim = 7;
  CHECK_THROWS_AS(Model(wider, params), IncompatibleError);
  ModelConfig no_align = cfg;
  no_align.encoder.align = AlignMode::None;
  CHECK_THROWS_AS(Model(no_align, params), IncompatibleError);
  CHECK_NOTHROW(Model(cfg, params));
  CHECK_THROWS_AS(infer_model_config(ModelParams{}), IncompatibleError);
}

TEST_CASE("bad episode batches are rejected") {
  Model model(small_config(PoolingVariant::LowRankFactorized, AlignMode::None), 7);
  EpisodeBatch batch = random_batch(3, 1, 1, 8, 8);
  batch.queries = 5;
  CHECK_THROWS_AS(model.score(batch), EpisodeError);
  EpisodeBatch wrong_size = random_batch(3, 1, 1, 12, 8);
  CHECK_THROWS_AS(model.score(wrong_size), ShapeError);
}

TEST_CASE("full model gradients") {
  for (auto variant : kVariants) {
    ModelConfig cfg = small_config(variant, AlignMode::Cpt);
    cfg.encoder.filters = 3;
    cfg.pooling.bilinear_dim = 4;
    // concat features keep the encoder's exact zeros, where signed sqrt has no finite slope
    if (variant == PoolingVariant::ConcatBaseline) cfg.pooling.normalization = Normalization::L2Only;
    ModelParams params = build_params(cfg, 9);
    // generic point: generator off its identity start with live hidden units
    params.get("align.fc2.weight").value = random_tensor({16, 4}, 10, -0.2, 0.2);
    params.get("align.fc1.bias").value.fill(0.5);
    Model model(cfg, std::move(params));
    const EpisodeBatch batch = random_batch(2, 2, 2, 8, 11);

    auto relation = [&](Tape& tape, ModelParams& p) {
      ParamBinding bind(tape, p);
      return model.relation_loss(bind, batch);
    };
    auto report = finite_diff_check(relation, model.params(), 1e-4, 96, 12);
    INFO(to_string(variant) << " relation worst " << report.worst_relative_error << " at "
                            << report.worst_coordinate << " analytic " << report.worst_analytic << " numeric "
                            << report.worst_numeric);
    CHECK(report.passed());
  }

  for (auto align : {AlignMode::Niv, AlignMode::Cpt, AlignMode::Cosine}) {
    ModelConfig cfg = small_config(PoolingVariant::LowRankFactorized, align);
    cfg.encoder.filters = 3;
    ModelParams params = build_params(cfg, 13);
    params.get("align.fc2.weight").value = random_tensor({16, 4}, 14, -0.2, 0.2);
    params.get("align.fc1.bias").value.fill(0.5);
    Model model(cfg, std::move(params));
    const EpisodeBatch batch = random_batch(2, 1, 2, 8, 15);
    ModelParams& p = model.params();
    // only encoder and generator parameters reach the alignment objective
    ModelParams stage;
    for (const Parameter& q : p) {
      if (q.name.starts_with("encoder.") || q.name.starts_with("align.")) stage.add(q.name, q.value);
    }
    auto objective = [&](Tape& tape, ModelParams& s) {
      ParamBinding bind(tape, s);
      return model.alignment_objective(bind, batch);
    };
    auto report = finite_diff_check(objective, stage, 1e-4, 64, 16);
    INFO(to_string(align) << " alignment worst " << report.worst_relative_error << " at "
                          << report.worst_coordinate);
    CHECK(report.passed());
  }
}
