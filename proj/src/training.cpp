#include "lrpabn/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>

#include "lrpabn/checkpoint.hpp"
#include "lrpabn/config.hpp"

namespace lrpabn {

std::size_t Adam::step(ModelParams& params, double lr, const std::function<bool(const Parameter&)>& select) {
  std::size_t touched = 0;
  for (Parameter& p : params) {
    if (select && !select(p)) continue;
    if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape(), 0.0);
    auto it = slots_.find(p.name);
    if (it == slots_.end()) {
      it = slots_.emplace(p.name, Slot{Tensor(p.value.shape(), 0.0), Tensor(p.value.shape(), 0.0), 0}).first;
    }
    Slot& s = it->second;
    ++s.t;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(s.t));
    double* w = p.value.ptr();
    const double* g = p.grad.ptr();
    double* m = s.m.ptr();
    double* v = s.v.ptr();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g[i];
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps);
    }
    ++touched;
  }
  return touched;
}

std::uint64_t Adam::steps(const std::string& name) const {
  auto it = slots_.find(name);
  return it == slots_.end() ? 0 : it->second.t;
}

double learning_rate_at(const TrainConfig& config, std::size_t episode) {
  if (config.decay_every == 0) return config.lr;
  const auto drops = static_cast<double>(episode / config.decay_every);
  return config.lr * std::pow(config.decay_factor, drops);
}

std::string parameter_norms(const ModelParams& params) {
  std::ostringstream out;
  for (const Parameter& p : params) out << "  " << p.name << " norm=" << l2_norm(p.value.data()) << "\n";
  return out.str();
}

namespace {

bool alignment_stage(const Parameter& p) {
  return p.name.starts_with("encoder.") || p.name.starts_with("align.");
}

void require_finite(double loss, const char* which, const ModelParams& params) {
  if (!std::isfinite(loss)) {
    throw NumericError(std::string("non-finite ") + which + " loss; parameter norms:\n" + parameter_norms(params));
  }
}

}  // namespace

StepResult train_step(Model& model, Adam& optimizer, std::span<const EpisodeBatch> tasks, double lr) {
  if (tasks.empty()) throw EpisodeError("train_step: no tasks");
  ModelParams& params = model.params();
  const auto n = static_cast<double>(tasks.size());
  StepResult result;

  if (model.has_alignment()) {
    params.zero_grad();
    double total = 0.0;
    for (const EpisodeBatch& task : tasks) {
      Tape tape;
      ParamBinding bind(tape, params);
      Var loss = model.alignment_objective(bind, task);
      require_finite(loss.value()[0], "alignment", params);
      tape.backward(loss);
      total += loss.value()[0];
    }
    optimizer.step(params, lr, alignment_stage);
    result.align_loss = total / n;
    ++result.updates;
  }

  params.zero_grad();
  double total = 0.0;
  for (const EpisodeBatch& task : tasks) {
    Tape tape;
    ParamBinding bind(tape, params);
    Var loss = model.relation_loss(bind, task);
    require_finite(loss.value()[0], "relation", params);
    tape.backward(loss);
    total += loss.value()[0];
  }
  optimizer.step(params, lr, {});
  result.relation_loss = total / n;
  ++result.updates;
  return result;
}

namespace {
std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}
}  // namespace

namespace {
void random_hflip(EpisodeBatch& batch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  const Shape& s = batch.images.shape();
  const std::size_t rows = s[0] * s[1] * s[2], w = s[3];
  const std::size_t per_image = s[1] * s[2];
  for (std::size_t r = 0; r < rows; r += per_image) {
    if (!coin(rng)) continue;
    for (std::size_t k = r; k < r + per_image; ++k) {
      double* row = batch.images.ptr() + k * w;
      std::reverse(row, row + w);
    }
  }
}
}  // namespace

TrainingArtifacts run_training(const TrainConfig& config, Model& model, const LabeledDataset& dataset,
                               const std::vector<int>& class_pool, const std::filesystem::path& out_dir,
                               const ProgressFn& progress) {
  if (config.lr < 0.0 || !(config.decay_factor > 0.0 && config.decay_factor <= 1.0)) {
    throw ConfigError("learning rate must be >= 0 and decay factor in (0,1]");
  }
  if (config.tasks_per_episode == 0) throw ConfigError("train.tasks_per_episode must be at least 1");
  std::filesystem::create_directories(out_dir);
  TrainingArtifacts out{out_dir / "metrics.csv", out_dir / "checkpoint.lrpc", out_dir / "model.cfg"};

  {
    std::ofstream cfg(out.model_config, std::ios::trunc);
    cfg << format_model_config(model.config());
    if (!cfg) throw std::runtime_error("cannot write " + out.model_config.string());
  }

  std::ofstream metrics(out.metrics, std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot write " + out.metrics.string());
  metrics << "episode,align_loss,relation_loss,lr\n";

  EpisodeSampler sampler(dataset, class_pool);
  Adam optimizer;
  std::vector<EpisodeBatch> tasks;
  try {
    for (std::size_t e = 0; e < config.episodes; ++e) {
      tasks.clear();
      for (std::size_t t = 0; t < config.tasks_per_episode; ++t) {
        const std::uint64_t task = e * config.tasks_per_episode + t;
        const Episode ep = sampler.sample(config.episode, derive_seed(config.seed, task));
        tasks.push_back(make_batch(dataset, ep));
        if (config.hflip) random_hflip(tasks.back(), derive_seed(~config.seed, task));
      }
      const double lr = learning_rate_at(config, e);
      const StepResult step = train_step(model, optimizer, tasks, lr);
      metrics << e << ',' << format_number(step.align_loss) << ',' << format_number(step.relation_loss) << ','
              << format_number(lr) << '\n';
      if (!metrics) throw std::runtime_error("write failed for " + out.metrics.string());
      if (config.checkpoint_every > 0 && (e + 1) % config.checkpoint_every == 0) {
        save_checkpoint(out_dir / ("checkpoint_" + std::to_string(e + 1) + ".lrpc"), model.params());
      }
      if (progress) progress(e, step);
    }
    save_checkpoint(out.checkpoint, model.params());
  } catch (...) {
    metrics.flush();
    throw;
  }
  return out;
}

EvalReport summarize(std::vector<double> accuracies) {
  EvalReport r;
  r.episodes = accuracies.size();
  if (accuracies.empty()) return r;
  double sum = 0.0;
  for (double a : accuracies) sum += a;
  const double n = static_cast<double>(accuracies.size());
  r.mean_accuracy = sum / n;
  if (accuracies.size() > 1) {
    double ss = 0.0;
    for (double a : accuracies) ss += (a - r.mean_accuracy) * (a - r.mean_accuracy);
    r.ci_halfwidth = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  r.accuracies = std::move(accuracies);
  return r;
}

EpisodeScorer model_scorer(const Model& model) {
  return [&model](const EpisodeBatch& batch) { return model.score(batch); };
}

EpisodeScorer random_scorer(std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return [rng](const EpisodeBatch& batch) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    RelationMatrix r{batch.queries, batch.way, std::vector<double>(batch.queries * batch.way)};
    for (double& s : r.scores) s = u(*rng);
    return r;
  };
}

EpisodeScorer oracle_scorer() {
  return [](const EpisodeBatch& batch) {
    RelationMatrix r{batch.queries, batch.way, std::vector<double>(batch.queries * batch.way, 0.0)};
    for (std::size_t i = 0; i < batch.queries; ++i)
      for (std::size_t j = 0; j < batch.way; ++j)
        if (batch.class_labels[j] == batch.query_labels[i]) r.scores[i * batch.way + j] = 1.0;
    return r;
  };
}

double episode_accuracy(const RelationMatrix& scores, const EpisodeBatch& batch) {
  if (scores.queries != batch.queries || scores.classes != batch.way) {
    throw EpisodeError("scores are " + std::to_string(scores.queries) + "x" + std::to_string(scores.classes) +
                       " for an episode of " + std::to_string(batch.queries) + " queries and " +
                       std::to_string(batch.way) + " classes");
  }
  const std::vector<std::size_t> pred = predict(scores);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (batch.class_labels[pred[i]] == batch.query_labels[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(pred.size());
}

EvalReport evaluate(const EpisodeScorer& scorer, const LabeledDataset& dataset, const std::vector<int>& class_pool,
                    const EpisodeSpec& spec, std::size_t episodes, std::uint64_t seed) {
  EpisodeSampler sampler(dataset, class_pool);
  std::vector<double> acc;
  acc.reserve(episodes);
  for (std::size_t i = 0; i < episodes; ++i) {
    const EpisodeBatch batch = make_batch(dataset, sampler.sample(spec, derive_seed(seed, i)));
    acc.push_back(episode_accuracy(scorer(batch), batch));
  }
  return summarize(std::move(acc));
}

void append_eval(const std::filesystem::path& metrics, const EvalReport& report) {
  std::ofstream out(metrics, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to " + metrics.string());
  out << "eval," << format_number(report.mean_accuracy) << ',' << format_number(report.ci_halfwidth) << ','
      << report.episodes << '\n';
}

}  // namespace lrpabn
