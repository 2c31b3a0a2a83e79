#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lrpabn/episodes.hpp"
#include "lrpabn/model.hpp"

namespace lrpabn {

/// Adam with per-parameter moment buffers and step counts.
class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  explicit Adam(Options options) : options_(options) {}

  /// Updates every parameter accepted by `select` from its accumulated
  /// gradient. Returns the number of parameters touched.
  std::size_t step(ModelParams& params, double lr, const std::function<bool(const Parameter&)>& select);
  /// Step count of a parameter (0 if never updated).
  std::uint64_t steps(const std::string& name) const;

 private:
  struct Slot {
    Tensor m;
    Tensor v;
    std::uint64_t t = 0;
  };
  Options options_;
  std::map<std::string, Slot, std::less<>> slots_;
};

struct TrainConfig {
  std::size_t episodes = 5000;
  /// Tasks whose gradients are summed before each update.
  std::size_t tasks_per_episode = 1;
  double lr = 0.001;
  std::size_t decay_every = 10000;
  double decay_factor = 0.5;
  std::uint64_t seed = 0;
  EpisodeSpec episode{5, 1, 15, Split::Train};
  /// Write checkpoint_<episode>.lrpc every this many episodes; 0 disables.
  std::size_t checkpoint_every = 0;
  /// Mirror each training image left-right with probability 1/2.
  bool hflip = false;
};

/// lr·factor^⌊episode / decay_every⌋, episode counted from 0.
double learning_rate_at(const TrainConfig& config, std::size_t episode);

struct StepResult {
  double align_loss = 0.0;     // mean over tasks; 0 when there is no alignment layer
  double relation_loss = 0.0;  // mean over tasks
  int updates = 0;             // optimizer updates performed (1 or 2)
};

/// One training iteration over `tasks`: an alignment update on encoder and
/// generator parameters (skipped without an alignment layer), then a fresh
/// forward pass and a relation update on all parameters. NumericError, with
/// parameter norms in the message, on a non-finite loss.
StepResult train_step(Model& model, Adam& optimizer, std::span<const EpisodeBatch> tasks, double lr);

/// Parameter names and L2 norms, one per line.
std::string parameter_norms(const ModelParams& params);

struct TrainingArtifacts {
  std::filesystem::path metrics;
  std::filesystem::path checkpoint;
  std::filesystem::path model_config;
};

using ProgressFn = std::function<void(std::size_t episode, const StepResult&)>;

/// Samples episodes from `class_pool`, trains, and writes into `out_dir`:
/// metrics.csv (header episode,align_loss,relation_loss,lr), periodic and
/// final checkpoints, and model.cfg describing the architecture.
TrainingArtifacts run_training(const TrainConfig& config, Model& model, const LabeledDataset& dataset,
                               const std::vector<int>& class_pool, const std::filesystem::path& out_dir,
                               const ProgressFn& progress = {});

struct EvalReport {
  double mean_accuracy = 0.0;  // percent
  double ci_halfwidth = 0.0;   // 1.96·sample std / √N
  std::size_t episodes = 0;
  std::vector<double> accuracies;
};

/// Mean and 95% half-width of per-episode accuracies (percent). The sample
/// standard deviation uses N−1; a single episode has half-width 0.
EvalReport summarize(std::vector<double> accuracies);

/// Scores one episode: relation matrix of its queries against its classes.
using EpisodeScorer = std::function<RelationMatrix(const EpisodeBatch&)>;

EpisodeScorer model_scorer(const Model& model);
/// Uniform random scores, deterministic in `seed` and call order.
EpisodeScorer random_scorer(std::uint64_t seed);
/// Scores 1 for the true class, 0 elsewhere.
EpisodeScorer oracle_scorer();

/// Percent of queries whose argmax class matches their label.
double episode_accuracy(const RelationMatrix& scores, const EpisodeBatch& batch);

EvalReport evaluate(const EpisodeScorer& scorer, const LabeledDataset& dataset, const std::vector<int>& class_pool,
                    const EpisodeSpec& spec, std::size_t episodes, std::uint64_t seed);

/// Appends `eval,<mean>,<ci>,<episodes>` to a metrics file.
void append_eval(const std::filesystem::path& metrics, const EvalReport& report);

}  // namespace lrpabn
