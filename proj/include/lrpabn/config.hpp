#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lrpabn/data_io.hpp"
#include "lrpabn/model_config.hpp"
#include "lrpabn/training.hpp"

namespace lrpabn {

enum class DataFormat { Folder, Raw, Synth };

std::string_view to_string(DataFormat format);
DataFormat parse_data_format(std::string_view text);

/// Everything a run needs. Missing keys keep these defaults.
struct RunConfig {
  std::filesystem::path data_root;
  DataFormat data_format = DataFormat::Synth;
  SplitScheme split_scheme = SplitScheme::Pcm;
  std::uint64_t split_seed = 0;
  /// Explicit class-pool sizes; 0 defers to the scheme's table/proportions.
  std::size_t split_val_classes = 0;
  std::size_t split_test_classes = 0;
  EpisodeSpec episode{5, 1, 15, Split::Train};
  ModelConfig model;
  TrainConfig train;
  std::size_t eval_episodes = 600;
  std::size_t eval_query = 15;
  std::uint64_t eval_seed = 1;
  SynthSpec synth;
  std::uint64_t synth_seed = 0;
  std::filesystem::path out_dir = "out";
};

/// Parses `key = value` lines; `#` starts a comment. Unknown keys, duplicate
/// keys and malformed values are ConfigErrors naming the key and line.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path);

/// Every key with its current value, parseable by parse_config.
std::string format_config(const RunConfig& config);
/// Only the model.* keys.
std::string format_model_config(const ModelConfig& model);

/// Recognized keys in file order.
std::vector<std::string> config_keys();

/// Class partition for a run: explicit sizes when set, else the scheme.
ClassPartition partition_classes(const RunConfig& config, std::span<const int> classes);

/// A raw dataset file, a directory holding dataset.lrpt, or an image folder
/// (resized to `image_size`).
LabeledDataset load_dataset_path(const std::filesystem::path& path, std::size_t image_size);
/// The dataset a run config describes; synth data is regenerated from its seed.
LabeledDataset load_run_dataset(const RunConfig& config);

}  // namespace lrpabn
