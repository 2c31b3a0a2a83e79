#include "lrpabn/episodes.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "lrpabn/ops.hpp"

namespace lrpabn {

void LabeledDataset::add(Tensor image, int label) {
  if (!images_.empty() && image.shape() != images_.front().shape()) {
    throw ShapeError("dataset images must share one shape; expected " + to_string(images_.front().shape()) +
                     ", got " + to_string(image.shape()));
  }
  images_.push_back(std::move(image));
  labels_.push_back(label);
}

std::vector<int> LabeledDataset::classes() const {
  std::set<int> s(labels_.begin(), labels_.end());
  return {s.begin(), s.end()};
}

std::vector<std::size_t> LabeledDataset::indices_of(int label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) out.push_back(i);
  }
  return out;
}

const std::vector<int>& ClassPartition::pool(Split split) const {
  switch (split) {
    case Split::Train: return train;
    case Split::Val: return val;
    case Split::Test: return test;
  }
  return train;
}

namespace {

struct SplitCounts {
  std::size_t train, val, test;
};

SplitCounts split_counts(std::size_t total, SplitScheme scheme) {
  // Published class splits: {total, pcm auxiliary, pcm target, val train, val val, val target}.
  struct Known {
    std::size_t total, pcm_aux, pcm_target, val_train, val_val, val_target;
  };
  static constexpr Known known[] = {
      {200, 150, 50, 120, 30, 50},   // CUB Birds
      {120, 90, 30, 70, 20, 30},     // DOGS
      {196, 147, 49, 130, 17, 49},   // CARS
      {555, 416, 139, 350, 66, 139}  // NABirds
  };
  for (const auto& k : known) {
    if (k.total != total) continue;
    if (scheme == SplitScheme::Pcm) return {k.pcm_aux, 0, k.pcm_target};
    return {k.val_train, k.val_val, k.val_target};
  }
  const auto share = [total](double f) { return static_cast<std::size_t>(std::lround(f * static_cast<double>(total))); };
  if (scheme == SplitScheme::Pcm) {
    const std::size_t test = share(0.25);
    return {total - std::min(test, total), 0, test};
  }
  const std::size_t test = share(0.25), val = share(0.15);
  return {total - std::min(test + val, total), val, test};
}

}  // namespace

ClassPartition split_classes(std::span<const int> classes, SplitScheme scheme, std::uint64_t seed) {
  const std::size_t total = classes.size();
  const std::size_t needed = scheme == SplitScheme::Pcm ? 2 : 3;
  if (total < needed) {
    throw ConfigError("split_classes: " + std::to_string(total) + " classes cannot fill " + std::to_string(needed) +
                      " partitions");
  }
  const SplitCounts counts = split_counts(total, scheme);
  if (scheme == SplitScheme::Val && counts.val == 0) {
    throw ConfigError("split_classes: " + std::to_string(total) + " classes leave no validation pool");
  }
  return split_classes(classes, counts.train, counts.val, counts.test, seed);
}

ClassPartition split_classes(std::span<const int> classes, std::size_t train, std::size_t val, std::size_t test,
                             std::uint64_t seed) {
  const std::size_t total = classes.size();
  if (train == 0 || test == 0 || train + val + test != total) {
    throw ConfigError("split_classes: pools of " + std::to_string(train) + "/" + std::to_string(val) + "/" +
                      std::to_string(test) + " do not partition " + std::to_string(total) + " classes");
  }
  std::vector<int> order(classes.begin(), classes.end());
  std::sort(order.begin(), order.end());
  if (std::adjacent_find(order.begin(), order.end()) != order.end()) {
    throw ConfigError("split_classes: class inventory has duplicates");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  ClassPartition out;
  const auto t = static_cast<long>(train), v = static_cast<long>(val);
  out.train.assign(order.begin(), order.begin() + t);
  out.val.assign(order.begin() + t, order.begin() + t + v);
  out.test.assign(order.begin() + t + v, order.end());
  for (auto* pool : {&out.train, &out.val, &out.test}) std::sort(pool->begin(), pool->end());
  return out;
}

EpisodeSampler::EpisodeSampler(const LabeledDataset& dataset, std::vector<int> class_pool)
    : pool_(std::move(class_pool)) {
  std::sort(pool_.begin(), pool_.end());
  pool_.erase(std::unique(pool_.begin(), pool_.end()), pool_.end());
  for (int c : pool_) by_class_[c] = dataset.indices_of(c);
}

Episode EpisodeSampler::sample(const EpisodeSpec& spec, std::uint64_t seed) const {
  if (spec.way < 2 || spec.shot < 1 || spec.query < 1) {
    throw ConfigError("episode spec needs way >= 2, shot >= 1, query >= 1");
  }
  if (pool_.size() < spec.way) {
    throw EpisodeError("class pool holds " + std::to_string(pool_.size()) + " classes, episode needs " +
                       std::to_string(spec.way));
  }
  const std::size_t per_class = spec.shot + spec.query;
  std::mt19937_64 rng(seed);

  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    std::vector<int> order = pool_;
    // Partial Fisher-Yates: the first `way` entries are a uniform draw.
    for (std::size_t i = 0; i < spec.way; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
      std::swap(order[i], order[pick(rng)]);
    }
    order.resize(spec.way);
    const bool ok = std::all_of(order.begin(), order.end(),
                                [&](int c) { return by_class_.at(c).size() >= per_class; });
    if (!ok) continue;

    Episode ep;
    ep.classes = order;
    ep.shot = spec.shot;
    std::vector<std::vector<std::size_t>> picks;
    for (int c : order) {
      std::vector<std::size_t> members = by_class_.at(c);
      for (std::size_t i = 0; i < per_class; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, members.size() - 1);
        std::swap(members[i], members[pick(rng)]);
      }
      members.resize(per_class);
      picks.push_back(std::move(members));
    }
    for (std::size_t j = 0; j < order.size(); ++j) {
      for (std::size_t s = 0; s < spec.shot; ++s) {
        ep.support.push_back(picks[j][s]);
        ep.support_labels.push_back(order[j]);
      }
    }
    for (std::size_t j = 0; j < order.size(); ++j) {
      for (std::size_t q = 0; q < spec.query; ++q) {
        ep.query.push_back(picks[j][spec.shot + q]);
        ep.query_labels.push_back(order[j]);
      }
    }
    return ep;
  }
  throw EpisodeError("could not draw " + std::to_string(spec.way) + " classes with " + std::to_string(per_class) +
                     " samples each after " + std::to_string(kMaxRetries) + " attempts");
}

EpisodeBatch make_batch(const LabeledDataset& dataset, const Episode& episode) {
  if (episode.support.empty() || episode.query.empty()) throw EpisodeError("make_batch: empty episode");
  const Shape& img = dataset.image(episode.support.front()).shape();
  const std::size_t rows = episode.support.size() + episode.query.size();
  const std::size_t stride = element_count(img);
  Tensor images({rows, img[0], img[1], img[2]});
  std::size_t r = 0;
  for (auto idx : episode.support) {
    std::copy_n(dataset.image(idx).ptr(), stride, images.ptr() + (r++) * stride);
  }
  for (auto idx : episode.query) {
    std::copy_n(dataset.image(idx).ptr(), stride, images.ptr() + (r++) * stride);
  }
  EpisodeBatch batch;
  batch.images = std::move(images);
  batch.way = episode.classes.size();
  batch.shot = episode.shot;
  batch.queries = episode.query.size();
  batch.class_labels = episode.classes;
  batch.query_labels = episode.query_labels;
  return batch;
}

Var class_features(Var support, std::size_t way, std::size_t shot, bool mean) {
  const Shape& s = support.shape();
  if (s.size() != 3 || s[0] != way * shot) {
    throw ShapeError("class_features: expected [" + std::to_string(way * shot) + ",c,hw], got " + to_string(s));
  }
  if (shot == 1) return support;
  Var grouped = ops::reshape(support, {way, shot, s[1], s[2]});
  Var summed = ops::sum_axis(grouped, 1);
  return mean ? ops::scale(summed, 1.0 / static_cast<double>(shot)) : summed;
}

FeatureMap class_feature(std::span<const FeatureMap> support_maps, bool mean) {
  if (support_maps.empty()) throw ShapeError("class_feature: no support maps");
  Tensor acc = support_maps.front().values();
  for (std::size_t k = 1; k < support_maps.size(); ++k) {
    const Tensor& v = support_maps[k].values();
    if (v.shape() != acc.shape()) {
      throw ShapeError("class_feature: map " + std::to_string(k) + " has shape " + to_string(v.shape()) +
                       ", expected " + to_string(acc.shape()));
    }
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
  }
  if (mean) {
    for (double& x : acc.data()) x /= static_cast<double>(support_maps.size());
  }
  return FeatureMap(std::move(acc));
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  // splitmix64 over the combined value
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace lrpabn
