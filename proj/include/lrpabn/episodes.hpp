#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lrpabn/encoder.hpp"
#include "lrpabn/tape.hpp"

namespace lrpabn {

/// Images ([c,h,w], values in [0,1]) with integer class labels.
class LabeledDataset {
 public:
  void add(Tensor image, int label);

  std::size_t size() const { return images_.size(); }
  const Tensor& image(std::size_t i) const { return images_.at(i); }
  int label(std::size_t i) const { return labels_.at(i); }
  const std::vector<int>& labels() const { return labels_; }
  /// Sorted distinct labels.
  std::vector<int> classes() const;
  /// Indices of the samples carrying `label`, ascending.
  std::vector<std::size_t> indices_of(int label) const;

  /// Optional human-readable class names keyed by label.
  std::map<int, std::string> class_names;

 private:
  std::vector<Tensor> images_;
  std::vector<int> labels_;
};

enum class Split { Train, Val, Test };

struct EpisodeSpec {
  std::size_t way = 5;
  std::size_t shot = 1;
  std::size_t query = 15;
  Split split = Split::Train;
};

/// One C-way-K-shot task. Support samples are ordered class-major
/// (class 0 shots, class 1 shots, ...); classes[j] is the dataset label of
/// episode class j.
struct Episode {
  std::vector<int> classes;
  std::vector<std::size_t> support;
  std::vector<std::size_t> query;
  std::vector<int> support_labels;
  std::vector<int> query_labels;
  std::size_t shot = 0;
};

enum class SplitScheme { Pcm, Val };

/// Disjoint class pools. `val` is empty under the pcm scheme.
struct ClassPartition {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
  const std::vector<int>& pool(Split split) const;
};

/// Partitions the class inventory. Counts follow the published splits for the
/// four fine-grained benchmarks (200, 120, 196, 555 classes); other inventories
/// get proportional rounding (pcm 75/25, val 60/15/25). Assignment is a
/// seeded shuffle; each pool is returned sorted.
ClassPartition split_classes(std::span<const int> classes, SplitScheme scheme, std::uint64_t seed);
/// Explicit pool sizes; they must add up to the inventory.
ClassPartition split_classes(std::span<const int> classes, std::size_t train, std::size_t val, std::size_t test,
                             std::uint64_t seed);

/// Draws episodes from a fixed class pool of a dataset.
class EpisodeSampler {
 public:
  static constexpr int kMaxRetries = 100;

  EpisodeSampler(const LabeledDataset& dataset, std::vector<int> class_pool);

  /// Uniform class choice without replacement, then uniform sample choice
  /// without replacement inside each class. Class draws containing a class
  /// with fewer than shot+query samples are redrawn up to kMaxRetries times.
  Episode sample(const EpisodeSpec& spec, std::uint64_t seed) const;

  const std::vector<int>& class_pool() const { return pool_; }

 private:
  std::vector<int> pool_;
  std::map<int, std::vector<std::size_t>> by_class_;
};

/// Images of an episode packed for one encoder pass: support rows first
/// (class-major), then query rows.
struct EpisodeBatch {
  Tensor images;  // [way·shot + queries, c, h, w]
  std::size_t way = 0;
  std::size_t shot = 0;
  std::size_t queries = 0;
  std::vector<int> class_labels;
  std::vector<int> query_labels;
};

EpisodeBatch make_batch(const LabeledDataset& dataset, const Episode& episode);

/// support [way·shot, c, hw] (class-major) -> class features [way, c, hw],
/// the elementwise sum (or mean) of each class's shots.
Var class_features(Var support, std::size_t way, std::size_t shot, bool mean = false);
FeatureMap class_feature(std::span<const FeatureMap> support_maps, bool mean = false);

/// Derives a deterministic per-item seed from a base seed and an index.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace lrpabn
