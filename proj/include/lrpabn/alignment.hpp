#pragma once

#include <random>

#include "lrpabn/binding.hpp"
#include "lrpabn/encoder.hpp"

namespace lrpabn {

/// Position-rearrangement matrix for one support map and its deviation from
/// orthogonality, ||T·Tᵀ - I||²_F.
struct AlignmentTransform {
  Tensor matrix;  // [hw,hw]
  double penalty = 0.0;
};

/// Two-layer perceptron hw -> hw -> hw·hw emitting T from the channel-summed
/// support descriptor: align.fc1.{weight,bias}, align.fc2.{weight,bias}.
/// fc2 starts at zero weights with the flattened identity as bias, so T = I
/// before training.
void add_alignment_params(ModelParams& params, std::size_t positions, std::mt19937_64& rng);

/// support [b,c,hw] -> T [b,hw,hw].
Var generate_transforms(ParamBinding& bind, Var support);
/// X' = X·T per batch item: support [b,c,hw], transforms [b,hw,hw].
Var apply_alignment(Var support, Var transforms);
/// Mean over the batch of ||T·Tᵀ - I||²_F, shape [1].
Var orthogonality_penalty(Var transforms);

// Alignment losses on pair-matched operands [p,c,hw]; each returns the mean
// over pairs, shape [1].

/// MSE between query maps and aligned support maps over all c·hw entries.
Var align_loss_niv(Var query, Var aligned_support);
/// MSE between channel sums: o_q vs o_s·T, both length hw.
Var align_loss_cpt(Var query, Var support, Var transforms);
/// The same, with o_s·T precomputed as [p,hw]; lets callers share T across pairs.
Var align_loss_cpt_descriptors(Var query, Var transformed_support_descriptor);
/// 1 - cosine similarity of the flattened maps.
Var align_loss_cosine(Var query, Var aligned_support);

// Value-level forms for single maps.
AlignmentTransform generate_transform(const ModelParams& params, const FeatureMap& support);
double orthogonality_penalty(const Tensor& transform);
FeatureMap apply_alignment(const FeatureMap& support, const Tensor& transform);
double align_loss_niv(const FeatureMap& query, const FeatureMap& aligned_support);
double align_loss_cpt(const FeatureMap& query, const FeatureMap& support, const Tensor& transform);
double align_loss_cosine(const FeatureMap& query, const FeatureMap& aligned_support);

}  // namespace lrpabn
