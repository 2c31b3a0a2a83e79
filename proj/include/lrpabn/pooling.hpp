#pragma once

#include <random>
#include <span>
#include <vector>

#include "lrpabn/binding.hpp"
#include "lrpabn/encoder.hpp"
#include "lrpabn/model_config.hpp"

namespace lrpabn {

/// Rank-1 factors of the n bilinear projections, W_i = U_i·V_iᵀ. U and V are
/// [c,n]; column i holds U_i / V_i.
struct ProjectionBank {
  Tensor u;
  Tensor v;
  std::size_t channels() const { return u.dim(0); }
  std::size_t dimension() const { return u.dim(1); }
  std::size_t parameter_count() const { return u.size() + v.size(); }
};

/// Pooled comparison of one (query, class) pair, after normalization.
struct ComparativeFeature {
  std::vector<double> values;
  std::size_t query = 0;
  std::size_t class_index = 0;
};

/// Adds the learned pooling parameters for the configured variant:
///   lowrank_fact: pool.U, pool.V [c,n] and, with projection_bn_relu,
///                 pool.bn_u.{gamma,beta}, pool.bn_v.{gamma,beta} [n]
///   lowrank_full: pool.W [n,c,c]
///   pairwise, concat: nothing.
void add_pooling_params(ModelParams& params, const PoolingConfig& config, std::size_t channels,
                        std::mt19937_64& rng);

/// Width of the vector handed to the comparator.
std::size_t comparative_width(const PoolingConfig& config, std::size_t channels, std::size_t positions);
/// Learned values the bilinear layer itself needs: c·c·n (full), 2·n·c
/// (factorized), c·c reported for pairwise, 0 for concat.
std::size_t bilinear_parameter_count(PoolingVariant variant, std::size_t channels, std::size_t dim);

/// Production path. queries [m,c,hw], classes [k,c,hw] -> normalized
/// features [m·k, D]; row i·k + j compares query i with class j. The
/// position grid Z of the low-rank variants is averaged over hw.
Var comparative_features(ParamBinding& bind, const PoolingConfig& config, Var queries, Var classes);

// Formula-level operators on pair-matched operands a, b [p,c,hw]; no
// normalization and no batchnorm/relu.

/// a_p·b_pᵀ flattened -> [p, c·c].
Var pairwise_outer(Var a, Var b);
/// Z grid [p,n,hw] with z[i,j] = a_jᵀ W_i b_j.
Var lowrank_full(Var a, Var b, Var w);
/// Z grid [p,n,hw] with z[i,j] = (U_iᵀ a_j)·(V_iᵀ b_j).
Var lowrank_factorized(Var a, Var b, Var u, Var v);
/// Channel stack flattened -> [p, 2·c·hw].
Var concat_baseline(Var a, Var b);
/// Row-wise normalization of [p,d].
Var normalize(Var rows, Normalization mode);

// Value-level forms.

/// (1/hw)·Σ_j x_j x_jᵀ, the self-bilinear statistic of one map. [c,c].
Tensor self_bilinear_oracle(const FeatureMap& x);
Tensor pairwise_outer(const FeatureMap& query, const FeatureMap& class_feature);
Tensor lowrank_full(const FeatureMap& query, const FeatureMap& class_feature, const Tensor& w);
Tensor lowrank_factorized(const FeatureMap& query, const FeatureMap& class_feature, const ProjectionBank& bank);
Tensor concat_baseline(const FeatureMap& query, const FeatureMap& class_feature);
std::vector<double> normalize(std::span<const double> values, Normalization mode);

/// Full production pooling of a single pair, as the comparator sees it.
ComparativeFeature pool_pair(const ModelParams& params, const PoolingConfig& config, const FeatureMap& query,
                             const FeatureMap& class_feature, std::size_t query_id = 0,
                             std::size_t class_id = 0);

}  // namespace lrpabn
