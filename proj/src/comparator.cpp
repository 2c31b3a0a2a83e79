#include "lrpabn/comparator.hpp"

#include <algorithm>
#include <cmath>

#include "lrpabn/ops.hpp"

namespace lrpabn {

void add_comparator_params(ModelParams& params, std::size_t input_width, std::size_t hidden,
                           std::mt19937_64& rng) {
  if (hidden == 0) throw ConfigError("comparator hidden width must be at least 1");
  const double b1 = 1.0 / std::sqrt(static_cast<double>(input_width));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  params.add("comparator.fc1.weight", uniform_tensor({hidden, input_width}, b1, rng));
  params.add("comparator.fc1.bias", uniform_tensor({hidden}, b1, rng));
  params.add("comparator.fc2.weight", uniform_tensor({1, hidden}, b2, rng));
  params.add("comparator.fc2.bias", uniform_tensor({1}, b2, rng));
}

Var relation_scores(ParamBinding& bind, Var features) {
  Var h = ops::relu(ops::linear(features, bind("comparator.fc1.weight"), bind("comparator.fc1.bias")));
  return ops::sigmoid(ops::linear(h, bind("comparator.fc2.weight"), bind("comparator.fc2.bias")));
}

namespace {
Tensor indicator(std::size_t m, std::size_t k, std::span<const int> query_labels,
                 std::span<const int> class_labels) {
  if (query_labels.size() != m || class_labels.size() != k) {
    throw EpisodeError("episode_loss: scores are " + std::to_string(m) + "x" + std::to_string(k) + " but got " +
                       std::to_string(query_labels.size()) + " query and " + std::to_string(class_labels.size()) +
                       " class labels");
  }
  Tensor target({m, k}, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    auto it = std::find(class_labels.begin(), class_labels.end(), query_labels[i]);
    if (it == class_labels.end()) {
      throw EpisodeError("query label " + std::to_string(query_labels[i]) + " is not among the episode classes");
    }
    target[i * k + static_cast<std::size_t>(it - class_labels.begin())] = 1.0;
  }
  return target;
}
}  // namespace

Var episode_loss(Var scores, std::span<const int> query_labels, std::span<const int> class_labels) {
  const Shape& s = scores.shape();
  if (s.size() != 2) throw ShapeError("episode_loss: scores must be [m,k], got " + to_string(s));
  Tensor target = indicator(s[0], s[1], query_labels, class_labels);
  Var diff = ops::sub(scores, scores.tape()->constant(std::move(target)));
  return ops::sum(ops::hadamard(diff, diff));
}

double episode_loss(const RelationMatrix& scores, std::span<const int> query_labels,
                    std::span<const int> class_labels) {
  Tape tape;
  Var r = tape.constant(Tensor({scores.queries, scores.classes}, scores.scores));
  return episode_loss(r, query_labels, class_labels).value()[0];
}

double relation_score(const ModelParams& params, const ComparativeFeature& feature) {
  Tape tape;
  ParamBinding bind(tape, params);
  Var f = tape.constant(Tensor({1, feature.values.size()}, feature.values));
  return relation_scores(bind, f).value()[0];
}

std::vector<std::size_t> predict(const RelationMatrix& scores) {
  if (scores.classes == 0) throw EpisodeError("predict: no classes");
  std::vector<std::size_t> out(scores.queries);
  for (std::size_t i = 0; i < scores.queries; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < scores.classes; ++j) {
      if (scores(i, j) > scores(i, best)) best = j;
    }
    out[i] = best;
  }
  return out;
}

}  // namespace lrpabn
