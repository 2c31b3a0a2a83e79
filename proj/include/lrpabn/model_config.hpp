#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace lrpabn {

enum class AlignMode { None, Niv, Cpt, Cosine };
enum class PoolingVariant { PairwiseOuter, LowRankFull, LowRankFactorized, ConcatBaseline };
enum class Normalization { SignedSqrtL2, L2Only, None };

/// Conv4 embedding network plus alignment layer.
struct EncoderConfig {
  std::size_t image_size = 84;
  std::size_t in_channels = 3;
  std::size_t blocks = 4;
  std::size_t filters = 64;
  std::size_t pooled_blocks = 2;
  AlignMode align = AlignMode::Cpt;
  double ortho_lambda = 0.01;

  /// Spatial side of the encoded map: each pooled block halves (floor).
  std::size_t output_side() const;
  /// hw, the number of spatial positions per FeatureMap.
  std::size_t positions() const { return output_side() * output_side(); }
};

struct PoolingConfig {
  PoolingVariant variant = PoolingVariant::LowRankFactorized;
  std::size_t bilinear_dim = 512;
  Normalization normalization = Normalization::SignedSqrtL2;
  /// Batchnorm + relu on the projected maps of the factorized variant.
  bool projection_bn_relu = true;
};

struct ModelConfig {
  EncoderConfig encoder;
  PoolingConfig pooling;
  std::size_t comparator_hidden = 8;
  /// Average instead of sum the K support maps of a class.
  bool mean_class_feature = false;
};

std::string_view to_string(AlignMode mode);
std::string_view to_string(PoolingVariant variant);
std::string_view to_string(Normalization mode);

/// Parsers accept the config-file spellings; they throw ConfigError otherwise.
AlignMode parse_align_mode(std::string_view text);
PoolingVariant parse_pooling_variant(std::string_view text);
Normalization parse_normalization(std::string_view text);

}  // namespace lrpabn
