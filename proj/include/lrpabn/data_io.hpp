#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "lrpabn/episodes.hpp"

namespace lrpabn {

// --- raw tensor datasets -------------------------------------------------

/// Layout (little-endian): "LRPT" | u8 version = 1 | u32 sample count |
/// per sample: i32 label | u32 c | u32 h | u32 w | float32 values (c,h,w).
inline constexpr std::uint8_t kRawDatasetVersion = 1;

std::vector<std::uint8_t> encode_raw_dataset(const LabeledDataset& dataset);
LabeledDataset decode_raw_dataset(std::span<const std::uint8_t> bytes);
void save_raw_dataset(const std::filesystem::path& path, const LabeledDataset& dataset);
LabeledDataset load_raw_dataset(const std::filesystem::path& path);

// --- image folders -------------------------------------------------------

/// Bilinear resize of a [c,h,w] image (half-pixel centers).
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);
/// Square resize to the network input size.
Tensor resize_to_input(const Tensor& image, std::size_t size = 84);

/// `<root>/<class>/<images>`; labels follow sorted directory names, pixels
/// are RGB scaled to [0,1] and resized to `image_size` (0 keeps the decoded
/// size, which must then agree across files). Undecodable files are skipped
/// with a note on `warnings`; an empty class is a ConfigError.
LabeledDataset load_image_folder(const std::filesystem::path& root, std::size_t image_size = 84,
                                 std::ostream* warnings = nullptr);

// --- synthetic fine-grained data ----------------------------------------

/// Classes are grouped into families sharing one background texture; classes
/// inside a family differ only by a small patch whose placement is jittered
/// per sample.
struct SynthSpec {
  std::size_t classes = 25;
  std::size_t per_class = 30;
  std::size_t image_size = 84;
  std::size_t families = 5;
  std::size_t patch = 12;
  /// Maximum offset of the patch from its class position, in pixels.
  std::size_t jitter = 4;
  double sigma = 0.05;
};

struct SynthRecord {
  std::size_t index = 0;
  int label = 0;
  std::size_t family = 0;
  std::size_t patch_x = 0;
  std::size_t patch_y = 0;
};

/// Deterministic in `seed`. Metadata rows go to `records` when given.
LabeledDataset generate_synthetic(const SynthSpec& spec, std::uint64_t seed,
                                  std::vector<SynthRecord>* records = nullptr);
void write_synth_metadata(const std::filesystem::path& path, std::span<const SynthRecord> records);

/// Pixel-space nearest-centroid classifier fit and scored on the same data;
/// percent of samples assigned to their own class centroid.
double nearest_centroid_accuracy(const LabeledDataset& dataset);

}  // namespace lrpabn
