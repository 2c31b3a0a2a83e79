#include "lrpabn/model_config.hpp"

#include "lrpabn/errors.hpp"

namespace lrpabn {

std::size_t EncoderConfig::output_side() const {
  std::size_t side = image_size;
  for (std::size_t b = 0; b < blocks && b < pooled_blocks; ++b) side /= 2;
  return side;
}

std::string_view to_string(AlignMode mode) {
  switch (mode) {
    case AlignMode::None: return "none";
    case AlignMode::Niv: return "niv";
    case AlignMode::Cpt: return "cpt";
    case AlignMode::Cosine: return "cosine";
  }
  return "?";
}

std::string_view to_string(PoolingVariant variant) {
  switch (variant) {
    case PoolingVariant::PairwiseOuter: return "pairwise";
    case PoolingVariant::LowRankFull: return "lowrank_full";
    case PoolingVariant::LowRankFactorized: return "lowrank_fact";
    case PoolingVariant::ConcatBaseline: return "concat";
  }
  return "?";
}

std::string_view to_string(Normalization mode) {
  switch (mode) {
    case Normalization::SignedSqrtL2: return "signed_sqrt_l2";
    case Normalization::L2Only: return "l2_only";
    case Normalization::None: return "none";
  }
  return "?";
}

AlignMode parse_align_mode(std::string_view text) {
  for (auto m : {AlignMode::None, AlignMode::Niv, AlignMode::Cpt, AlignMode::Cosine}) {
    if (to_string(m) == text) return m;
  }
  throw ConfigError("unknown alignment mode '" + std::string(text) + "'");
}

PoolingVariant parse_pooling_variant(std::string_view text) {
  for (auto v : {PoolingVariant::PairwiseOuter, PoolingVariant::LowRankFull,
                 PoolingVariant::LowRankFactorized, PoolingVariant::ConcatBaseline}) {
    if (to_string(v) == text) return v;
  }
  throw ConfigError("unknown pooling variant '" + std::string(text) + "'");
}

Normalization parse_normalization(std::string_view text) {
  for (auto n : {Normalization::SignedSqrtL2, Normalization::L2Only, Normalization::None}) {
    if (to_string(n) == text) return n;
  }
  throw ConfigError("unknown normalization '" + std::string(text) + "'");
}

}  // namespace lrpabn
