#include "lrpabn/encoder.hpp"

#include <cmath>
#include <string>

#include "lrpabn/ops.hpp"

namespace lrpabn {

FeatureMap::FeatureMap(Tensor values) : values_(std::move(values)) {
  if (values_.rank() != 2) {
    throw ShapeError("FeatureMap must be [c,hw], got " + to_string(values_.shape()));
  }
}

FeatureMap::FeatureMap(std::size_t channels, std::size_t positions, std::vector<double> values)
    : FeatureMap(Tensor({channels, positions}, std::move(values))) {}

std::vector<double> FeatureMap::column(std::size_t position) const {
  std::vector<double> col(channels());
  for (std::size_t c = 0; c < channels(); ++c) col[c] = (*this)(c, position);
  return col;
}

namespace {
std::string block_name(std::size_t b) { return "encoder.block" + std::to_string(b + 1); }
}  // namespace

void add_encoder_params(ModelParams& params, const EncoderConfig& config, std::mt19937_64& rng) {
  std::size_t in = config.in_channels;
  for (std::size_t b = 0; b < config.blocks; ++b) {
    const std::string name = block_name(b);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * 9));
    params.add(name + ".conv.weight", uniform_tensor({config.filters, in, 3, 3}, bound, rng));
    params.add(name + ".bn.gamma", Tensor({config.filters}, 1.0));
    params.add(name + ".bn.beta", Tensor({config.filters}, 0.0));
    in = config.filters;
  }
}

Var embed(ParamBinding& bind, const EncoderConfig& config, Var images) {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != config.in_channels || s[2] != config.image_size ||
      s[3] != config.image_size) {
    throw ShapeError("embed: expected images [b," + std::to_string(config.in_channels) + "," +
                     std::to_string(config.image_size) + "," + std::to_string(config.image_size) +
                     "], got " + to_string(s));
  }
  Var x = images;
  Var no_bias = bind.tape().constant(Tensor({config.filters}, 0.0));
  for (std::size_t b = 0; b < config.blocks; ++b) {
    const std::string name = block_name(b);
    // no conv bias: the batchnorm that follows removes any per-channel offset
    x = ops::conv2d(x, bind(name + ".conv.weight"), no_bias, 1);
    x = ops::batchnorm(x, bind(name + ".bn.gamma"), bind(name + ".bn.beta"));
    x = ops::relu(x);
    if (b < config.pooled_blocks) x = ops::maxpool2x2(x);
  }
  const Shape& out = x.shape();
  return ops::reshape(x, {out[0], out[1], out[2] * out[3]});
}

FeatureMap embed_image(const ModelParams& params, const EncoderConfig& config, const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("embed_image: expected [c,h,w], got " + to_string(image.shape()));
  Tape tape;
  ParamBinding bind(tape, params);
  Var batch = tape.constant(image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)}));
  Var maps = embed(bind, config, batch);
  const Shape& s = maps.shape();
  return FeatureMap(maps.value().reshaped({s[1], s[2]}));
}

}  // namespace lrpabn
