#include "doctest.h"

#include <string>

#include "lrpabn/config.hpp"

using namespace lrpabn;

namespace {

std::string error_of(std::string_view text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("defaults and overrides") {
  RunConfig d = parse_config("");
  CHECK(d.episode.way == 5);
  CHECK(d.episode.shot == 1);
  CHECK(d.model.pooling.variant == PoolingVariant::LowRankFactorized);
  CHECK(d.model.pooling.bilinear_dim == 512);
  CHECK(d.model.encoder.image_size == 84);
  CHECK(d.train.lr == 0.001);
  CHECK(d.eval_episodes == 600);

  RunConfig c = parse_config(
      "# comment line\n"
      "episode.shot = 5   # trailing comment\n"
      "model.pooling = concat\n"
      "model.align = niv\n"
      "train.lr = 0.0005\n"
      "  data.format=raw\n"
      "data.root = /tmp/x\n");
  CHECK(c.episode.shot == 5);
  CHECK(c.model.pooling.variant == PoolingVariant::ConcatBaseline);
  CHECK(c.model.encoder.align == AlignMode::Niv);
  CHECK(c.train.lr == 0.0005);
  CHECK(c.data_format == DataFormat::Raw);
  CHECK(c.data_root == "/tmp/x");
}

TEST_CASE("format and parse agree") {
  RunConfig c = parse_config("model.pooling = lowrank_full\nmodel.bilinear_dim = 32\nsynth.sigma = 0.125\n");
  const std::string text = format_config(c);
  RunConfig back = parse_config(text);
  CHECK(format_config(back) == text);
  CHECK(back.model.pooling.bilinear_dim == 32);
  CHECK(back.synth.sigma == 0.125);

  const std::string model_only = format_model_config(c.model);
  CHECK(model_only.find("train.") == std::string::npos);
  CHECK(parse_config(model_only).model.pooling.variant == PoolingVariant::LowRankFull);
  CHECK(config_keys().size() > 30);
}

TEST_CASE("bad configs name the offending key") {
  const std::string unknown = error_of("episode.way = 5\nmodel.depth = 4\n");
  CHECK(unknown.find("model.depth") != std::string::npos);
  CHECK(unknown.find("line 2") != std::string::npos);
  CHECK(error_of("model.pooling = fancy").find("model.pooling") != std::string::npos);
  CHECK(error_of("episode.way = five").find("episode.way") != std::string::npos);
  CHECK(error_of("train.lr = 1\ntrain.lr = 2").find("duplicate") != std::string::npos);
  CHECK(!error_of("just some words").empty());
  CHECK(!error_of("episode.way = 1").empty());
  CHECK(!error_of("model.image_size = 3").empty());
  CHECK_THROWS_AS(load_config("/nonexistent/run.cfg"), ConfigError);
}

TEST_CASE("class partitions for a run") {
  std::vector<int> classes(25);
  for (int i = 0; i < 25; ++i) classes[static_cast<std::size_t>(i)] = i;
  RunConfig c = parse_config("split.test_classes = 5\n");
  ClassPartition p = partition_classes(c, classes);
  CHECK(p.train.size() == 20);
  CHECK(p.val.empty());
  CHECK(p.test.size() == 5);

  std::vector<int> cub(200);
  for (int i = 0; i < 200; ++i) cub[static_cast<std::size_t>(i)] = i;
  ClassPartition v = partition_classes(parse_config("split.scheme = val\n"), cub);
  CHECK(v.train.size() == 120);
  CHECK(v.val.size() == 30);
  CHECK(v.test.size() == 50);
  CHECK_THROWS_AS(partition_classes(parse_config("split.test_classes = 25\n"), classes), ConfigError);
}
