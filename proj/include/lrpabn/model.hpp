#pragma once

#include <cstdint>

#include "lrpabn/binding.hpp"
#include "lrpabn/comparator.hpp"
#include "lrpabn/episodes.hpp"
#include "lrpabn/model_config.hpp"

namespace lrpabn {

/// Encoder, optional alignment layer, comparative pooling and comparator,
/// wired for whole episodes. Support and query images of an episode go
/// through the encoder as one batch.
class Model {
 public:
  /// Fresh parameters drawn from `seed`.
  Model(ModelConfig config, std::uint64_t seed);
  /// Adopts existing parameters; IncompatibleError if names or shapes differ
  /// from what `config` builds.
  Model(ModelConfig config, ModelParams params);

  const ModelConfig& config() const { return config_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  /// True when the alignment layer exists (align mode other than none).
  bool has_alignment() const { return config_.encoder.align != AlignMode::None; }

  /// Mean alignment loss over every (query, class) pair plus
  /// λ·orthogonality penalty. Requires has_alignment().
  Var alignment_objective(ParamBinding& bind, const EpisodeBatch& batch) const;
  /// Relation scores [queries, way].
  Var relation_scores(ParamBinding& bind, const EpisodeBatch& batch) const;
  /// Summed squared error of the scores against the label indicator.
  Var relation_loss(ParamBinding& bind, const EpisodeBatch& batch) const;

  /// Frozen forward pass.
  RelationMatrix score(const EpisodeBatch& batch) const;
  /// Frozen comparative features [queries·way, D]; row i·way + j pairs query
  /// i with class j.
  Tensor comparative_features(const EpisodeBatch& batch) const;

 private:
  struct Encoded {
    Var queries;   // [m,c,hw]
    Var classes;   // [k,c,hw], summed support, not aligned
    Var transforms;  // [k,hw,hw] when aligned
  };
  Encoded encode(ParamBinding& bind, const EpisodeBatch& batch) const;
  Var features(ParamBinding& bind, const EpisodeBatch& batch) const;

  ModelConfig config_;
  ModelParams params_;
};

/// The parameter set `config` creates (values from `seed`).
ModelParams build_params(const ModelConfig& config, std::uint64_t seed);

/// Recovers the architecture from parameter names and shapes. Fields that
/// leave no trace in the parameters (image size beyond what hw implies,
/// normalization, class-feature averaging, λ) are taken from `base`.
/// IncompatibleError when the parameters do not describe a model.
ModelConfig infer_model_config(const ModelParams& params, ModelConfig base = {});

}  // namespace lrpabn
