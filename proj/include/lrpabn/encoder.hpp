#pragma once

#include <random>
#include <vector>

#include "lrpabn/binding.hpp"
#include "lrpabn/model_config.hpp"

namespace lrpabn {

/// An encoded image: c channels over hw spatial positions. Column j is the
/// channel vector at position j.
class FeatureMap {
 public:
  explicit FeatureMap(Tensor values);
  FeatureMap(std::size_t channels, std::size_t positions, std::vector<double> values);

  std::size_t channels() const { return values_.dim(0); }
  std::size_t positions() const { return values_.dim(1); }
  double operator()(std::size_t channel, std::size_t position) const {
    return values_[channel * positions() + position];
  }
  std::vector<double> column(std::size_t position) const;

  const Tensor& values() const { return values_; }

 private:
  Tensor values_;
};

/// Adds conv/batchnorm parameters for every block: encoder.block<i>.conv.weight
/// and encoder.block<i>.bn.{gamma,beta}.
void add_encoder_params(ModelParams& params, const EncoderConfig& config, std::mt19937_64& rng);

/// Conv4 embedding. images [b, in_channels, s, s] -> [b, filters, hw]. Each
/// block is conv3x3(pad 1) -> batchnorm -> relu, followed by 2x2 max pooling
/// for the first `pooled_blocks` blocks.
Var embed(ParamBinding& bind, const EncoderConfig& config, Var images);

/// Single-image convenience; batch statistics come from this image alone.
FeatureMap embed_image(const ModelParams& params, const EncoderConfig& config, const Tensor& image);

}  // namespace lrpabn
