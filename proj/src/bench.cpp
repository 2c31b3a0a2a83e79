#include "lrpabn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <random>

#include "lrpabn/pooling.hpp"

namespace lrpabn {

namespace {

Tensor uniform(Shape shape, std::mt19937_64& rng, double bound) {
  std::uniform_real_distribution<double> d(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = d(rng);
  return t;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<BenchRow> run_pooling_bench(std::span<const std::size_t> dims, const BenchOptions& options) {
  if (options.repetitions == 0 || options.channels == 0 || options.positions == 0) {
    throw ConfigError("bench needs positive channels, positions and repetitions");
  }
  const std::size_t c = options.channels, hw = options.positions;
  std::mt19937_64 rng(options.seed);
  const Tensor a = uniform({1, c, hw}, rng, 1.0);
  const Tensor b = uniform({1, c, hw}, rng, 1.0);

  std::vector<BenchRow> rows;
  for (std::size_t n : dims) {
    if (n == 0) throw ConfigError("bench dims must be positive");
    for (PoolingVariant variant : options.variants) {
      Tensor u, v, w;
      if (variant == PoolingVariant::LowRankFactorized) {
        u = uniform({c, n}, rng, 0.1);
        v = uniform({c, n}, rng, 0.1);
      } else if (variant == PoolingVariant::LowRankFull) {
        w = uniform({n, c, c}, rng, 0.1);
      }
      std::vector<double> times;
      times.reserve(options.repetitions);
      for (std::size_t r = 0; r < options.repetitions; ++r) {
        Tape tape;
        const auto start = std::chrono::steady_clock::now();
        Var qa = tape.frozen(a), qb = tape.frozen(b);
        switch (variant) {
          case PoolingVariant::PairwiseOuter: pairwise_outer(qa, qb); break;
          case PoolingVariant::LowRankFull: lowrank_full(qa, qb, tape.frozen(w)); break;
          case PoolingVariant::LowRankFactorized: lowrank_factorized(qa, qb, tape.frozen(u), tape.frozen(v)); break;
          case PoolingVariant::ConcatBaseline: concat_baseline(qa, qb); break;
        }
        times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
      }
      rows.push_back({variant, c, n, bilinear_parameter_count(variant, c, n), median(std::move(times)),
                      options.repetitions});
    }
  }
  return rows;
}

}  // namespace lrpabn
