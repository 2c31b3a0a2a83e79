#include "lrpabn/model.hpp"

#include <cmath>
#include <random>

#include "lrpabn/alignment.hpp"
#include "lrpabn/encoder.hpp"
#include "lrpabn/ops.hpp"
#include "lrpabn/pooling.hpp"

namespace lrpabn {

ModelParams build_params(const ModelConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelParams params;
  add_encoder_params(params, config.encoder, rng);
  const std::size_t hw = config.encoder.positions();
  if (hw == 0) throw ConfigError("image size leaves no spatial positions after pooling");
  if (config.encoder.align != AlignMode::None) add_alignment_params(params, hw, rng);
  add_pooling_params(params, config.pooling, config.encoder.filters, rng);
  add_comparator_params(params, comparative_width(config.pooling, config.encoder.filters, hw),
                        config.comparator_hidden, rng);
  return params;
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(config), params_(build_params(config, seed)) {}

Model::Model(ModelConfig config, ModelParams params) : config_(config), params_(std::move(params)) {
  const ModelParams expected = build_params(config_, 0);
  if (expected.size() != params_.size()) {
    throw IncompatibleError("checkpoint holds " + std::to_string(params_.size()) + " parameters, model expects " +
                            std::to_string(expected.size()));
  }
  for (const Parameter& e : expected) {
    const Parameter* got = params_.find(e.name);
    if (got == nullptr) throw IncompatibleError("checkpoint lacks parameter " + e.name);
    if (got->value.shape() != e.value.shape()) {
      throw IncompatibleError("parameter " + e.name + " has shape " + to_string(got->value.shape()) +
                              ", model expects " + to_string(e.value.shape()));
    }
  }
}

namespace {
std::vector<std::size_t> iota_rows(std::size_t from, std::size_t count) {
  std::vector<std::size_t> rows(count);
  for (std::size_t i = 0; i < count; ++i) rows[i] = from + i;
  return rows;
}
}  // namespace

Model::Encoded Model::encode(ParamBinding& bind, const EpisodeBatch& batch) const {
  const std::size_t support = batch.way * batch.shot;
  if (batch.images.rank() != 4 || batch.images.dim(0) != support + batch.queries || batch.queries == 0) {
    throw EpisodeError("episode batch holds " + to_string(batch.images.shape()) + " for " +
                       std::to_string(batch.way) + "-way " + std::to_string(batch.shot) + "-shot with " +
                       std::to_string(batch.queries) + " queries");
  }
  Tape& tape = bind.tape();
  Var maps = embed(bind, config_.encoder, tape.frozen(batch.images));
  Encoded e;
  e.queries = ops::gather(maps, iota_rows(support, batch.queries));
  e.classes = class_features(ops::gather(maps, iota_rows(0, support)), batch.way, batch.shot,
                             config_.mean_class_feature);
  if (has_alignment()) e.transforms = generate_transforms(bind, e.classes);
  return e;
}

Var Model::alignment_objective(ParamBinding& bind, const EpisodeBatch& batch) const {
  if (!has_alignment()) throw ConfigError("alignment objective requested with align mode none");
  Encoded e = encode(bind, batch);
  const std::size_t m = batch.queries, k = batch.way;
  std::vector<std::size_t> qi(m * k), ci(m * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      qi[i * k + j] = i;
      ci[i * k + j] = j;
    }
  Var queries = ops::gather(e.queries, qi);
  Var loss;
  switch (config_.encoder.align) {
    case AlignMode::Niv:
      loss = align_loss_niv(queries, ops::gather(apply_alignment(e.classes, e.transforms), ci));
      break;
    case AlignMode::Cpt: {
      // o_B·T once per class, then paired with every query
      const std::size_t hw = e.classes.shape()[2];
      Var desc = ops::reshape(ops::sum_axis(e.classes, 1), {k, 1, hw});
      Var moved = ops::reshape(ops::matmul(desc, e.transforms), {k, hw});
      loss = align_loss_cpt_descriptors(queries, ops::gather(moved, ci));
      break;
    }
    case AlignMode::Cosine:
      loss = align_loss_cosine(queries, ops::gather(apply_alignment(e.classes, e.transforms), ci));
      break;
    case AlignMode::None: break;
  }
  return ops::add(loss, ops::scale(orthogonality_penalty(e.transforms), config_.encoder.ortho_lambda));
}

Var Model::features(ParamBinding& bind, const EpisodeBatch& batch) const {
  Encoded e = encode(bind, batch);
  Var classes = has_alignment() ? apply_alignment(e.classes, e.transforms) : e.classes;
  return lrpabn::comparative_features(bind, config_.pooling, e.queries, classes);
}

Var Model::relation_scores(ParamBinding& bind, const EpisodeBatch& batch) const {
  Var scores = lrpabn::relation_scores(bind, features(bind, batch));
  return ops::reshape(scores, {batch.queries, batch.way});
}

Var Model::relation_loss(ParamBinding& bind, const EpisodeBatch& batch) const {
  return episode_loss(relation_scores(bind, batch), batch.query_labels, batch.class_labels);
}

RelationMatrix Model::score(const EpisodeBatch& batch) const {
  Tape tape;
  ParamBinding bind(tape, params_);
  Var s = relation_scores(bind, batch);
  return {batch.queries, batch.way, s.value().values()};
}

Tensor Model::comparative_features(const EpisodeBatch& batch) const {
  Tape tape;
  ParamBinding bind(tape, params_);
  return features(bind, batch).value();
}

ModelConfig infer_model_config(const ModelParams& params, ModelConfig base) {
  ModelConfig cfg = base;
  const Parameter* first = params.find("encoder.block1.conv.weight");
  if (first == nullptr || first->value.rank() != 4) {
    throw IncompatibleError("parameters hold no encoder (encoder.block1.conv.weight missing)");
  }
  cfg.encoder.filters = first->value.dim(0);
  cfg.encoder.in_channels = first->value.dim(1);
  std::size_t blocks = 0;
  while (params.contains("encoder.block" + std::to_string(blocks + 1) + ".conv.weight")) ++blocks;
  cfg.encoder.blocks = blocks;
  const std::size_t c = cfg.encoder.filters;

  auto set_positions = [&](std::size_t hw) {
    if (cfg.encoder.positions() == hw) return;
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(hw))));
    if (side * side != hw) throw IncompatibleError("spatial length " + std::to_string(hw) + " is not square");
    std::size_t size = side;
    for (std::size_t b = 0; b < std::min(cfg.encoder.pooled_blocks, blocks); ++b) size *= 2;
    cfg.encoder.image_size = size;
  };

  if (const Parameter* fc1 = params.find("align.fc1.weight")) {
    set_positions(fc1->value.dim(1));
    if (cfg.encoder.align == AlignMode::None) cfg.encoder.align = AlignMode::Cpt;
  } else {
    cfg.encoder.align = AlignMode::None;
  }

  const Parameter* comp = params.find("comparator.fc1.weight");
  if (comp == nullptr || comp->value.rank() != 2) throw IncompatibleError("parameters hold no comparator");
  cfg.comparator_hidden = comp->value.dim(0);
  const std::size_t width = comp->value.dim(1);

  if (const Parameter* u = params.find("pool.U")) {
    cfg.pooling.variant = PoolingVariant::LowRankFactorized;
    cfg.pooling.bilinear_dim = u->value.dim(1);
    cfg.pooling.projection_bn_relu = params.contains("pool.bn_u.gamma");
  } else if (const Parameter* w = params.find("pool.W")) {
    cfg.pooling.variant = PoolingVariant::LowRankFull;
    cfg.pooling.bilinear_dim = w->value.dim(0);
  } else if (base.pooling.variant == PoolingVariant::ConcatBaseline && width == 2 * c * cfg.encoder.positions()) {
    cfg.pooling.variant = PoolingVariant::ConcatBaseline;
  } else if (width == c * c) {
    cfg.pooling.variant = PoolingVariant::PairwiseOuter;
  } else if (width % (2 * c) == 0) {
    cfg.pooling.variant = PoolingVariant::ConcatBaseline;
    set_positions(width / (2 * c));
  } else {
    throw IncompatibleError("comparator input width " + std::to_string(width) + " matches no pooling variant");
  }
  return cfg;
}

}  // namespace lrpabn
