#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lrpabn/model_config.hpp"

namespace lrpabn {

struct BenchRow {
  PoolingVariant variant = PoolingVariant::LowRankFactorized;
  std::size_t channels = 0;
  std::size_t dim = 0;
  /// Bilinear parameters: 2nc factorized, nc² full, c² (feature size) for pairwise.
  std::size_t parameters = 0;
  double median_seconds = 0.0;  // one (query, class) pair, pooling forward only
  std::size_t repetitions = 0;
};

struct BenchOptions {
  std::size_t channels = 64;
  std::size_t positions = 441;
  std::size_t repetitions = 100;
  std::uint64_t seed = 0;
  std::vector<PoolingVariant> variants = {PoolingVariant::PairwiseOuter, PoolingVariant::LowRankFull,
                                          PoolingVariant::LowRankFactorized};
};

/// One row per variant and dim, timing the raw pooling operator (before
/// normalization) on random feature maps.
std::vector<BenchRow> run_pooling_bench(std::span<const std::size_t> dims, const BenchOptions& options = {});

}  // namespace lrpabn
