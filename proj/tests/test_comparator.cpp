#include "doctest.h"

#include <cmath>
#include <random>

#include "lrpabn/comparator.hpp"
#include "lrpabn/gradcheck.hpp"
#include "lrpabn/ops.hpp"
#include "test_util.hpp"

using namespace lrpabn;
using lrpabn::testing::random_tensor;

TEST_CASE("relation score range") {
  ModelParams params;
  std::mt19937_64 rng(1);
  add_comparator_params(params, 6, 8, rng);
  ComparativeFeature feat{random_tensor({6}, 2).values(), 0, 0};

  SUBCASE("zero weights give one half") {
    for (auto& p : params) p.value.fill(0.0);
    CHECK(relation_score(params, feat) == 0.5);
  }
  SUBCASE("large negative output weight stays above zero") {
    params.get("comparator.fc1.weight").value.fill(0.0);
    params.get("comparator.fc1.bias").value.fill(1.0);
    params.get("comparator.fc2.weight").value.fill(-5.0);
    params.get("comparator.fc2.bias").value.fill(0.0);
    const double s = relation_score(params, feat);
    CHECK(s > 0.0);
    CHECK(s < 1e-15);
  }
  SUBCASE("random inputs stay inside (0,1)") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      ComparativeFeature f{random_tensor({6}, seed, -50, 50).values(), 0, 0};
      const double s = relation_score(params, f);
      CHECK(s > 0.0);
      CHECK(s < 1.0);
    }
  }
  SUBCASE("width mismatch is rejected") {
    ComparativeFeature bad{std::vector<double>(5, 0.1), 0, 0};
    CHECK_THROWS_AS(relation_score(params, bad), ShapeError);
  }
}

TEST_CASE("episode loss") {
  const std::vector<int> classes{10, 11, 12, 13, 14};
  RelationMatrix half{1, 5, std::vector<double>(5, 0.5)};
  CHECK(episode_loss(half, std::vector<int>{12}, classes) == doctest::Approx(1.25).epsilon(1e-12));

  RelationMatrix exact{2, 5, {0, 1, 0, 0, 0, 0, 0, 0, 0, 1}};
  CHECK(episode_loss(exact, std::vector<int>{11, 14}, classes) == 0.0);

  RelationMatrix rnd{2, 5, random_tensor({10}, 3, 0, 1).values()};
  CHECK(episode_loss(rnd, std::vector<int>{10, 13}, classes) >= 0.0);

  CHECK_THROWS_AS(episode_loss(half, std::vector<int>{99}, classes), EpisodeError);
  CHECK_THROWS_AS(episode_loss(half, std::vector<int>{10, 11}, classes), EpisodeError);
}

TEST_CASE("predict") {
  RelationMatrix r{1, 5, {0.1, 0.9, 0.3, 0.2, 0.4}};
  CHECK(predict(r) == std::vector<std::size_t>{1});
  RelationMatrix tie{1, 4, std::vector<double>(4, 0.25)};
  CHECK(predict(tie) == std::vector<std::size_t>{0});
  RelationMatrix later_tie{1, 4, {0.1, 0.7, 0.7, 0.2}};
  CHECK(predict(later_tie) == std::vector<std::size_t>{1});

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RelationMatrix m{3, 5, random_tensor({15}, seed, 0.01, 0.99).values()};
    RelationMatrix mapped = m;
    for (double& v : mapped.scores) v = std::exp(3.0 * v) - 7.0;
    RelationMatrix logit = m;
    for (double& v : logit.scores) v = std::log(v / (1.0 - v));
    CHECK(predict(m) == predict(mapped));
    CHECK(predict(m) == predict(logit));
  }
}

TEST_CASE("comparator gradients") {
  ModelParams params;
  std::mt19937_64 rng(4);
  add_comparator_params(params, 5, 8, rng);
  params.add("features", random_tensor({6, 5}, 5));
  const std::vector<int> classes{0, 1, 2};
  const std::vector<int> labels{2, 0};
  auto report = finite_diff_check(
      [&](Tape& tape, ModelParams& p) {
        ParamBinding bind(tape, p);
        Var scores = ops::reshape(relation_scores(bind, bind("features")), {2, 3});
        return episode_loss(scores, labels, classes);
      },
      params, 1e-4, 64, 6);
  INFO("worst " << report.worst_relative_error << " at " << report.worst_coordinate);
  CHECK(report.passed());
}
