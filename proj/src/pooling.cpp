#include "lrpabn/pooling.hpp"

#include <cmath>
#include <numeric>

#include "lrpabn/ops.hpp"

namespace lrpabn {

void add_pooling_params(ModelParams& params, const PoolingConfig& config, std::size_t channels,
                        std::mt19937_64& rng) {
  const std::size_t n = config.bilinear_dim;
  if (n == 0) throw ConfigError("bilinear dimension must be at least 1");
  switch (config.variant) {
    case PoolingVariant::LowRankFactorized: {
      const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
      params.add("pool.U", uniform_tensor({channels, n}, bound, rng));
      params.add("pool.V", uniform_tensor({channels, n}, bound, rng));
      if (config.projection_bn_relu) {
        params.add("pool.bn_u.gamma", Tensor({n}, 1.0));
        params.add("pool.bn_u.beta", Tensor({n}, 0.0));
        params.add("pool.bn_v.gamma", Tensor({n}, 1.0));
        params.add("pool.bn_v.beta", Tensor({n}, 0.0));
      }
      break;
    }
    case PoolingVariant::LowRankFull:
      params.add("pool.W", uniform_tensor({n, channels, channels}, 1.0 / static_cast<double>(channels), rng));
      break;
    case PoolingVariant::PairwiseOuter:
    case PoolingVariant::ConcatBaseline:
      break;
  }
}

std::size_t comparative_width(const PoolingConfig& config, std::size_t channels, std::size_t positions) {
  switch (config.variant) {
    case PoolingVariant::PairwiseOuter: return channels * channels;
    case PoolingVariant::LowRankFull:
    case PoolingVariant::LowRankFactorized: return config.bilinear_dim;
    case PoolingVariant::ConcatBaseline: return 2 * channels * positions;
  }
  return 0;
}

std::size_t bilinear_parameter_count(PoolingVariant variant, std::size_t channels, std::size_t dim) {
  switch (variant) {
    case PoolingVariant::PairwiseOuter: return channels * channels;
    case PoolingVariant::LowRankFull: return dim * channels * channels;
    case PoolingVariant::LowRankFactorized: return 2 * dim * channels;
    case PoolingVariant::ConcatBaseline: return 0;
  }
  return 0;
}

namespace {

void require_pair_operands(const char* op, Var a, Var b) {
  if (a.shape().size() != 3 || a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": operands must be equal [p,c,hw], got " + to_string(a.shape()) +
                     " and " + to_string(b.shape()));
  }
}

Var spatial_mean(Var z) {
  const double hw = static_cast<double>(z.shape()[2]);
  return ops::scale(ops::sum_axis(z, 2), 1.0 / hw);
}

}  // namespace

Var pairwise_outer(Var a, Var b) {
  require_pair_operands("pairwise_outer", a, b);
  const Shape& s = a.shape();
  return ops::reshape(ops::matmul(a, b, true), {s[0], s[1] * s[1]});
}

Var lowrank_full(Var a, Var b, Var w) {
  require_pair_operands("lowrank_full", a, b);
  return ops::bilinear_form(a, w, b);
}

Var lowrank_factorized(Var a, Var b, Var u, Var v) {
  require_pair_operands("lowrank_factorized", a, b);
  if (u.shape() != v.shape()) {
    throw ShapeError("lowrank_factorized: U " + to_string(u.shape()) + " and V " + to_string(v.shape()) +
                     " differ");
  }
  return ops::hadamard(ops::project_channels(a, u), ops::project_channels(b, v));
}

Var concat_baseline(Var a, Var b) {
  require_pair_operands("concat_baseline", a, b);
  const Shape& s = a.shape();
  return ops::reshape(ops::concat_channels(a, b), {s[0], 2 * s[1] * s[2]});
}

Var normalize(Var rows, Normalization mode) {
  switch (mode) {
    case Normalization::SignedSqrtL2: return ops::l2_normalize_rows(ops::signed_sqrt(rows));
    case Normalization::L2Only: return ops::l2_normalize_rows(rows);
    case Normalization::None: return rows;
  }
  return rows;
}

Var comparative_features(ParamBinding& bind, const PoolingConfig& config, Var queries, Var classes) {
  const Shape& qs = queries.shape();
  const Shape& cs = classes.shape();
  if (qs.size() != 3 || cs.size() != 3 || qs[1] != cs[1] || qs[2] != cs[2]) {
    throw ShapeError("comparative_features: queries " + to_string(qs) + " and classes " + to_string(cs) +
                     " must share [c,hw]");
  }
  const std::size_t m = qs[0], k = cs[0];

  if (config.variant == PoolingVariant::LowRankFactorized) {
    Var pa = ops::project_channels(queries, bind("pool.U"));
    Var pb = ops::project_channels(classes, bind("pool.V"));
    if (config.projection_bn_relu) {
      pa = ops::relu(ops::batchnorm(pa, bind("pool.bn_u.gamma"), bind("pool.bn_u.beta")));
      pb = ops::relu(ops::batchnorm(pb, bind("pool.bn_v.gamma"), bind("pool.bn_v.beta")));
    }
    return normalize(ops::paired_hadamard_mean(pa, pb), config.normalization);
  }

  std::vector<std::size_t> qi(m * k), ci(m * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      qi[i * k + j] = i;
      ci[i * k + j] = j;
    }
  Var a = ops::gather(queries, qi);
  Var b = ops::gather(classes, ci);
  Var raw;
  switch (config.variant) {
    case PoolingVariant::PairwiseOuter: raw = pairwise_outer(a, b); break;
    case PoolingVariant::LowRankFull: raw = spatial_mean(lowrank_full(a, b, bind("pool.W"))); break;
    case PoolingVariant::ConcatBaseline: raw = concat_baseline(a, b); break;
    case PoolingVariant::LowRankFactorized: break;
  }
  return normalize(raw, config.normalization);
}

// ---------------------------------------------------------------------------

namespace {
Tensor as_batch(const FeatureMap& m) { return m.values().reshaped({1, m.channels(), m.positions()}); }

void require_same_maps(const char* op, const FeatureMap& a, const FeatureMap& b) {
  if (a.values().shape() != b.values().shape()) {
    throw ShapeError(std::string(op) + ": feature maps differ, " + to_string(a.values().shape()) + " vs " +
                     to_string(b.values().shape()));
  }
}
}  // namespace

Tensor self_bilinear_oracle(const FeatureMap& x) {
  const std::size_t c = x.channels(), hw = x.positions();
  Tensor out({c, c});
  for (std::size_t j = 0; j < hw; ++j)
    for (std::size_t a = 0; a < c; ++a)
      for (std::size_t b = 0; b < c; ++b) out[a * c + b] += x(a, j) * x(b, j);
  for (double& v : out.data()) v /= static_cast<double>(hw);
  return out;
}

Tensor pairwise_outer(const FeatureMap& query, const FeatureMap& class_feature) {
  require_same_maps("pairwise_outer", query, class_feature);
  Tape tape;
  Var r = pairwise_outer(tape.constant(as_batch(query)), tape.constant(as_batch(class_feature)));
  return r.value().reshaped({query.channels(), query.channels()});
}

Tensor lowrank_full(const FeatureMap& query, const FeatureMap& class_feature, const Tensor& w) {
  require_same_maps("lowrank_full", query, class_feature);
  Tape tape;
  Var z = lowrank_full(tape.constant(as_batch(query)), tape.constant(as_batch(class_feature)), tape.constant(w));
  return z.value().reshaped({w.dim(0), query.positions()});
}

Tensor lowrank_factorized(const FeatureMap& query, const FeatureMap& class_feature, const ProjectionBank& bank) {
  require_same_maps("lowrank_factorized", query, class_feature);
  Tape tape;
  Var z = lowrank_factorized(tape.constant(as_batch(query)), tape.constant(as_batch(class_feature)),
                             tape.constant(bank.u), tape.constant(bank.v));
  return z.value().reshaped({bank.dimension(), query.positions()});
}

Tensor concat_baseline(const FeatureMap& query, const FeatureMap& class_feature) {
  require_same_maps("concat_baseline", query, class_feature);
  Tape tape;
  Var r = concat_baseline(tape.constant(as_batch(query)), tape.constant(as_batch(class_feature)));
  return r.value().reshaped({r.value().size()});
}

std::vector<double> normalize(std::span<const double> values, Normalization mode) {
  std::vector<double> out(values.begin(), values.end());
  if (mode == Normalization::None) return out;
  if (mode == Normalization::SignedSqrtL2) {
    for (double& v : out) v = v < 0.0 ? -std::sqrt(-v) : std::sqrt(v);
  }
  const double nrm = l2_norm(out);
  if (nrm > 0.0) {
    for (double& v : out) v /= nrm;
  }
  return out;
}

ComparativeFeature pool_pair(const ModelParams& params, const PoolingConfig& config, const FeatureMap& query,
                             const FeatureMap& class_feature, std::size_t query_id, std::size_t class_id) {
  require_same_maps("pool_pair", query, class_feature);
  Tape tape;
  ParamBinding bind(tape, params);
  Var f = comparative_features(bind, config, tape.constant(as_batch(query)), tape.constant(as_batch(class_feature)));
  return {f.value().values(), query_id, class_id};
}

}  // namespace lrpabn
