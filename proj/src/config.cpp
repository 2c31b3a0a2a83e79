#include "lrpabn/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <functional>
#include <set>
#include <sstream>

namespace lrpabn {

std::string_view to_string(DataFormat format) {
  switch (format) {
    case DataFormat::Folder: return "folder";
    case DataFormat::Raw: return "raw";
    case DataFormat::Synth: return "synth";
  }
  return "?";
}

DataFormat parse_data_format(std::string_view text) {
  if (text == "folder") return DataFormat::Folder;
  if (text == "raw") return DataFormat::Raw;
  if (text == "synth") return DataFormat::Synth;
  throw ConfigError("unknown data format '" + std::string(text) + "' (folder|raw|synth)");
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(std::string_view v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("expected a non-negative integer, got '" + std::string(v) + "'");
  return out;
}

std::uint64_t to_u64(std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("expected a non-negative integer, got '" + std::string(v) + "'");
  return out;
}

double to_double(std::string_view v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("expected a number, got '" + std::string(v) + "'");
  return out;
}

bool to_bool(std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected true or false, got '" + std::string(v) + "'");
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

SplitScheme parse_scheme(std::string_view v) {
  if (v == "pcm") return SplitScheme::Pcm;
  if (v == "val") return SplitScheme::Val;
  throw ConfigError("unknown split scheme '" + std::string(v) + "' (pcm|val)");
}

struct Key {
  const char* name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define LRPABN_SIZE_KEY(key, field)                                           \
  Key {                                                                       \
    key, [](RunConfig& c, std::string_view v) { c.field = to_size(v); },      \
        [](const RunConfig& c) { return std::to_string(c.field); }            \
  }
#define LRPABN_U64_KEY(key, field)                                            \
  Key {                                                                       \
    key, [](RunConfig& c, std::string_view v) { c.field = to_u64(v); },       \
        [](const RunConfig& c) { return std::to_string(c.field); }            \
  }
#define LRPABN_DOUBLE_KEY(key, field)                                         \
  Key {                                                                       \
    key, [](RunConfig& c, std::string_view v) { c.field = to_double(v); },    \
        [](const RunConfig& c) { return num(c.field); }                       \
  }
#define LRPABN_BOOL_KEY(key, field)                                           \
  Key {                                                                       \
    key, [](RunConfig& c, std::string_view v) { c.field = to_bool(v); },      \
        [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); } \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"data.root", [](RunConfig& c, std::string_view v) { c.data_root = std::string(v); },
       [](const RunConfig& c) { return c.data_root.string(); }},
      {"data.format", [](RunConfig& c, std::string_view v) { c.data_format = parse_data_format(v); },
       [](const RunConfig& c) { return std::string(to_string(c.data_format)); }},
      {"split.scheme", [](RunConfig& c, std::string_view v) { c.split_scheme = parse_scheme(v); },
       [](const RunConfig& c) { return std::string(c.split_scheme == SplitScheme::Pcm ? "pcm" : "val"); }},
      LRPABN_U64_KEY("split.seed", split_seed),
      LRPABN_SIZE_KEY("split.val_classes", split_val_classes),
      LRPABN_SIZE_KEY("split.test_classes", split_test_classes),
      LRPABN_SIZE_KEY("episode.way", episode.way),
      LRPABN_SIZE_KEY("episode.shot", episode.shot),
      LRPABN_SIZE_KEY("episode.query", episode.query),
      {"model.pooling", [](RunConfig& c, std::string_view v) { c.model.pooling.variant = parse_pooling_variant(v); },
       [](const RunConfig& c) { return std::string(to_string(c.model.pooling.variant)); }},
      LRPABN_SIZE_KEY("model.bilinear_dim", model.pooling.bilinear_dim),
      {"model.normalization",
       [](RunConfig& c, std::string_view v) { c.model.pooling.normalization = parse_normalization(v); },
       [](const RunConfig& c) { return std::string(to_string(c.model.pooling.normalization)); }},
      LRPABN_BOOL_KEY("model.projection_bn_relu", model.pooling.projection_bn_relu),
      {"model.align", [](RunConfig& c, std::string_view v) { c.model.encoder.align = parse_align_mode(v); },
       [](const RunConfig& c) { return std::string(to_string(c.model.encoder.align)); }},
      LRPABN_DOUBLE_KEY("model.ortho_lambda", model.encoder.ortho_lambda),
      LRPABN_SIZE_KEY("model.comparator_hidden", model.comparator_hidden),
      LRPABN_SIZE_KEY("model.image_size", model.encoder.image_size),
      LRPABN_SIZE_KEY("model.filters", model.encoder.filters),
      LRPABN_BOOL_KEY("model.mean_class_feature", model.mean_class_feature),
      LRPABN_SIZE_KEY("train.episodes", train.episodes),
      LRPABN_SIZE_KEY("train.tasks_per_episode", train.tasks_per_episode),
      LRPABN_DOUBLE_KEY("train.lr", train.lr),
      LRPABN_SIZE_KEY("train.decay_every", train.decay_every),
      LRPABN_DOUBLE_KEY("train.decay_factor", train.decay_factor),
      LRPABN_U64_KEY("train.seed", train.seed),
      LRPABN_SIZE_KEY("train.checkpoint_every", train.checkpoint_every),
      LRPABN_BOOL_KEY("train.hflip", train.hflip),
      LRPABN_SIZE_KEY("eval.episodes", eval_episodes),
      LRPABN_SIZE_KEY("eval.query", eval_query),
      LRPABN_U64_KEY("eval.seed", eval_seed),
      LRPABN_SIZE_KEY("synth.classes", synth.classes),
      LRPABN_SIZE_KEY("synth.per_class", synth.per_class),
      LRPABN_SIZE_KEY("synth.image_size", synth.image_size),
      LRPABN_SIZE_KEY("synth.families", synth.families),
      LRPABN_SIZE_KEY("synth.patch", synth.patch),
      LRPABN_SIZE_KEY("synth.jitter", synth.jitter),
      LRPABN_DOUBLE_KEY("synth.sigma", synth.sigma),
      LRPABN_U64_KEY("synth.seed", synth_seed),
      {"out.dir", [](RunConfig& c, std::string_view v) { c.out_dir = std::string(v); },
       [](const RunConfig& c) { return c.out_dir.string(); }},
  };
  return table;
}

#undef LRPABN_SIZE_KEY
#undef LRPABN_U64_KEY
#undef LRPABN_DOUBLE_KEY
#undef LRPABN_BOOL_KEY

const Key* find_key(std::string_view name) {
  for (const Key& k : keys()) {
    if (name == k.name) return &k;
  }
  return nullptr;
}

void validate(const RunConfig& c) {
  if (c.episode.way < 2 || c.episode.shot < 1 || c.episode.query < 1) {
    throw ConfigError("episode.way must be >= 2, episode.shot and episode.query >= 1");
  }
  if (c.model.pooling.bilinear_dim < 1) throw ConfigError("model.bilinear_dim must be >= 1");
  if (c.model.comparator_hidden < 1) throw ConfigError("model.comparator_hidden must be >= 1");
  if (c.model.encoder.filters < 1) throw ConfigError("model.filters must be >= 1");
  if (c.model.encoder.positions() == 0) throw ConfigError("model.image_size is too small for the encoder");
  if (!(c.train.lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
  if (!(c.train.decay_factor > 0.0 && c.train.decay_factor <= 1.0)) throw ConfigError("train.decay_factor must be in (0,1]");
  if (c.model.encoder.ortho_lambda < 0.0) throw ConfigError("model.ortho_lambda must be >= 0");
  if (c.train.tasks_per_episode < 1) throw ConfigError("train.tasks_per_episode must be >= 1");
  if (c.eval_query < 1) throw ConfigError("eval.query must be >= 1");
}

}  // namespace

RunConfig parse_config(std::string_view text, RunConfig base) {
  RunConfig cfg = std::move(base);
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const Key* k = find_key(key);
    if (k == nullptr) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
    if (!seen.insert(std::string(key)).second) {
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + std::string(key) + "'");
    }
    try {
      k->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": key '" + std::string(key) + "': " + e.what());
    }
  }
  validate(cfg);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const RunConfig& config) {
  std::string out;
  for (const Key& k : keys()) out += std::string(k.name) + " = " + k.get(config) + "\n";
  return out;
}

std::string format_model_config(const ModelConfig& model) {
  RunConfig c;
  c.model = model;
  std::string out;
  for (const Key& k : keys()) {
    if (std::string_view(k.name).starts_with("model.")) out += std::string(k.name) + " = " + k.get(c) + "\n";
  }
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> names;
  for (const Key& k : keys()) names.emplace_back(k.name);
  return names;
}

ClassPartition partition_classes(const RunConfig& config, std::span<const int> classes) {
  if (config.split_test_classes > 0) {
    const std::size_t fixed = config.split_test_classes + config.split_val_classes;
    if (fixed >= classes.size()) {
      throw ConfigError("split.test_classes + split.val_classes leave no training classes");
    }
    return split_classes(classes, classes.size() - fixed, config.split_val_classes, config.split_test_classes,
                         config.split_seed);
  }
  return split_classes(classes, config.split_scheme, config.split_seed);
}

LabeledDataset load_dataset_path(const std::filesystem::path& path, std::size_t image_size) {
  if (std::filesystem::is_regular_file(path)) return load_raw_dataset(path);
  if (std::filesystem::is_regular_file(path / "dataset.lrpt")) return load_raw_dataset(path / "dataset.lrpt");
  return load_image_folder(path, image_size, &std::cerr);
}

LabeledDataset load_run_dataset(const RunConfig& config) {
  switch (config.data_format) {
    case DataFormat::Synth: return generate_synthetic(config.synth, config.synth_seed);
    case DataFormat::Raw: {
      if (config.data_root.empty()) throw ConfigError("data.root is required for data.format = raw");
      const auto& root = config.data_root;
      return load_raw_dataset(std::filesystem::is_directory(root) ? root / "dataset.lrpt" : root);
    }
    case DataFormat::Folder:
      if (config.data_root.empty()) throw ConfigError("data.root is required for data.format = folder");
      return load_image_folder(config.data_root, config.model.encoder.image_size, &std::cerr);
  }
  throw ConfigError("unknown data format");
}

}  // namespace lrpabn
