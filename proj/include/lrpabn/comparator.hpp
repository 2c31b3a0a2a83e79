#pragma once

#include <random>
#include <span>
#include <vector>

#include "lrpabn/binding.hpp"
#include "lrpabn/pooling.hpp"

namespace lrpabn {

/// Relation scores of m queries against k classes, row-major. Every entry
/// comes out of a sigmoid.
struct RelationMatrix {
  std::size_t queries = 0;
  std::size_t classes = 0;
  std::vector<double> scores;

  double operator()(std::size_t query, std::size_t cls) const { return scores[query * classes + cls]; }
};

/// comparator.fc1.{weight,bias} [hidden,input], comparator.fc2.{weight,bias} [1,hidden].
void add_comparator_params(ModelParams& params, std::size_t input_width, std::size_t hidden,
                           std::mt19937_64& rng);

/// sigmoid(W2·relu(W1·z + b1) + b2) for each row of features [p,d] -> [p,1].
Var relation_scores(ParamBinding& bind, Var features);

/// Σ_i Σ_j (r_ij − δ(y_i = y_j))² for scores [m,k]. Labels are dataset
/// labels; a query label missing from class_labels is an EpisodeError.
Var episode_loss(Var scores, std::span<const int> query_labels, std::span<const int> class_labels);
double episode_loss(const RelationMatrix& scores, std::span<const int> query_labels,
                    std::span<const int> class_labels);

/// Single-feature score.
double relation_score(const ModelParams& params, const ComparativeFeature& feature);

/// Argmax per query row; ties go to the lowest class index.
std::vector<std::size_t> predict(const RelationMatrix& scores);

}  // namespace lrpabn
