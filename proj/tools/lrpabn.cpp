// lrpabn command-line tool: train, eval, gradcheck, synth, bench.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "lrpabn/bench.hpp"
#include "lrpabn/checkpoint.hpp"
#include "lrpabn/config.hpp"
#include "lrpabn/gradcheck_suite.hpp"
#include "lrpabn/training.hpp"

namespace fs = std::filesystem;
using namespace lrpabn;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kNumeric = 3, kIncompatible = 4 };

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  fs::path config;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out;
  std::optional<std::size_t> episodes;
  std::size_t log_every = 100;
};

int cmd_train(const TrainArgs& args) {
  RunConfig cfg = load_config(args.config);
  if (args.seed) cfg.train.seed = *args.seed;
  if (args.out) cfg.out_dir = *args.out;
  if (args.episodes) cfg.train.episodes = *args.episodes;
  cfg.train.episode = cfg.episode;
  cfg.train.episode.split = Split::Train;

  const LabeledDataset data = load_run_dataset(cfg);
  const std::vector<int> classes = data.classes();
  const ClassPartition split = partition_classes(cfg, classes);
  std::cerr << "dataset: " << data.size() << " samples, " << classes.size() << " classes (train "
            << split.train.size() << ", val " << split.val.size() << ", test " << split.test.size() << ")\n";

  fs::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / "run.cfg", format_config(cfg));

  Model model(cfg.model, cfg.train.seed);
  const std::size_t every = args.log_every;
  auto progress = [every, total = cfg.train.episodes](std::size_t e, const StepResult& r) {
    if (every == 0 || ((e + 1) % every != 0 && e + 1 != total)) return;
    std::fprintf(stderr, "episode %zu/%zu align %.5f relation %.5f\n", e + 1, total, r.align_loss, r.relation_loss);
  };
  const TrainingArtifacts out = run_training(cfg.train, model, data, split.train, cfg.out_dir, progress);
  std::cout << "checkpoint " << out.checkpoint.string() << "\nmetrics " << out.metrics.string() << "\n";
  return kOk;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
  fs::path checkpoint;
  std::optional<fs::path> data;
  std::optional<fs::path> config;
  std::optional<std::size_t> way, shot, query, episodes;
  std::optional<std::uint64_t> seed;
  std::string split = "test";
  std::optional<fs::path> dump_features;
  std::size_t dump_episodes = 1;
  std::optional<fs::path> metrics;
};

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ConfigError("--split must be train, val, test or all");
}

void dump_features(const fs::path& path, const Model& model, const LabeledDataset& data,
                   const std::vector<int>& pool, const EpisodeSpec& spec, std::size_t episodes, std::uint64_t seed) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  EpisodeSampler sampler(data, pool);
  for (std::size_t e = 0; e < episodes; ++e) {
    const EpisodeBatch batch = make_batch(data, sampler.sample(spec, derive_seed(seed, e)));
    const Tensor f = model.comparative_features(batch);
    const std::size_t d = f.dim(1);
    for (std::size_t i = 0; i < batch.queries; ++i)
      for (std::size_t j = 0; j < batch.way; ++j) {
        const std::size_t row = i * batch.way + j;
        out << e << ',' << batch.query_labels[i] << ',' << batch.class_labels[j] << ','
            << (batch.query_labels[i] == batch.class_labels[j] ? 1 : 0);
        char buf[32];
        for (std::size_t k = 0; k < d; ++k) {
          std::snprintf(buf, sizeof buf, ",%.9g", f[row * d + k]);
          out << buf;
        }
        out << '\n';
      }
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

int cmd_eval(const EvalArgs& args) {
  const fs::path dir = args.checkpoint.parent_path();
  // run settings: explicit config, else the run.cfg written next to the checkpoint
  std::optional<RunConfig> run;
  if (args.config) {
    run = load_config(*args.config);
  } else if (fs::exists(dir / "run.cfg")) {
    run = load_config(dir / "run.cfg");
  }

  ModelParams params = load_checkpoint(args.checkpoint);
  ModelConfig model_cfg;
  if (run) {
    model_cfg = run->model;
  } else if (fs::exists(dir / "model.cfg")) {
    model_cfg = parse_config(read_text(dir / "model.cfg")).model;
  } else {
    model_cfg = infer_model_config(params);
  }
  const Model model(model_cfg, std::move(params));

  LabeledDataset data;
  if (args.data) {
    data = load_dataset_path(*args.data, model_cfg.encoder.image_size);
  } else if (run) {
    data = load_run_dataset(*run);
  } else {
    throw ConfigError("--data is required when no run.cfg accompanies the checkpoint");
  }
  if (data.size() == 0) throw ConfigError("dataset is empty");
  const Shape expected{model_cfg.encoder.in_channels, model_cfg.encoder.image_size, model_cfg.encoder.image_size};
  if (data.image(0).shape() != expected) {
    throw IncompatibleError("dataset images are " + to_string(data.image(0).shape()) + ", model expects " +
                            to_string(expected));
  }

  // without a run config there is no partition to honour: every class is used
  std::vector<int> pool = data.classes();
  if (args.split != "all") {
    const Split which = parse_split(args.split);
    if (run) {
      pool = partition_classes(*run, pool).pool(which);
      if (pool.empty()) throw ConfigError("split '" + args.split + "' holds no classes");
    }
  }

  EpisodeSpec spec{5, 1, 15, Split::Test};
  std::size_t episodes = 600;
  std::uint64_t seed = 1;
  if (run) {
    spec.way = run->episode.way;
    spec.shot = run->episode.shot;
    spec.query = run->eval_query;
    episodes = run->eval_episodes;
    seed = run->eval_seed;
  }
  if (args.way) spec.way = *args.way;
  if (args.shot) spec.shot = *args.shot;
  if (args.query) spec.query = *args.query;
  if (args.episodes) episodes = *args.episodes;
  if (args.seed) seed = *args.seed;
  if (spec.way < 2 || spec.shot < 1 || spec.query < 1 || episodes < 1) {
    throw ConfigError("need --way >= 2, --shot >= 1, --query >= 1, --episodes >= 1");
  }

  const EvalReport report = evaluate(model_scorer(model), data, pool, spec, episodes, seed);
  std::printf("acc=%.2f%% ci=%.2f n=%zu\n", report.mean_accuracy, report.ci_halfwidth, report.episodes);

  const fs::path metrics = args.metrics ? *args.metrics : dir / "metrics.csv";
  if (args.metrics || fs::exists(metrics)) append_eval(metrics, report);
  if (args.dump_features) {
    dump_features(*args.dump_features, model, data, pool, spec, args.dump_episodes, seed);
  }
  return kOk;
}

// --- gradcheck --------------------------------------------------------------

int cmd_gradcheck(double tolerance, std::size_t samples, std::uint64_t seed) {
  const auto rows = run_gradcheck_suite(tolerance, samples, seed);
  std::size_t failed = 0;
  std::printf("%-44s %6s %12s  %s\n", "check", "coords", "worst_rel", "result");
  for (const auto& r : rows) {
    const bool ok = r.report.passed();
    failed += ok ? 0 : 1;
    std::printf("%-44s %6zu %12.3e  %s\n", r.name.c_str(), r.report.coordinates, r.report.worst_relative_error,
                ok ? "pass" : "FAIL");
  }
  std::printf("%zu of %zu checks passed at tolerance %g\n", rows.size() - failed, rows.size(), tolerance);
  return failed == 0 ? kOk : kNumeric;
}

// --- synth ------------------------------------------------------------------

int cmd_synth(const fs::path& out, const SynthSpec& spec, std::uint64_t seed) {
  std::vector<SynthRecord> records;
  const LabeledDataset data = generate_synthetic(spec, seed, &records);
  fs::create_directories(out);
  save_raw_dataset(out / "dataset.lrpt", data);
  write_synth_metadata(out / "metadata.csv", records);
  std::printf("samples=%zu classes=%zu nearest_centroid=%.2f%%\n", data.size(), data.classes().size(),
              nearest_centroid_accuracy(data));
  return kOk;
}

// --- bench ------------------------------------------------------------------

int cmd_bench(const std::vector<std::size_t>& dims, const BenchOptions& options) {
  const auto rows = run_pooling_bench(dims, options);
  std::printf("%-14s %6s %6s %12s %14s\n", "variant", "c", "n", "parameters", "median_us");
  for (const auto& r : rows) {
    std::printf("%-14s %6zu %6zu %12zu %14.2f\n", std::string(to_string(r.variant)).c_str(), r.channels, r.dim,
                r.parameters, r.median_seconds * 1e6);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank pairwise alignment bilinear network for few-shot fine-grained classification"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train a model from a config file");
  t->add_option("--config", train.config, "run config (key = value lines)")->required();
  t->add_option("--seed", train.seed, "override train.seed");
  t->add_option("--out", train.out, "override out.dir");
  t->add_option("--episodes", train.episodes, "override train.episodes");
  t->add_option("--log-every", train.log_every, "progress line interval (0 = quiet)");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint on few-shot episodes");
  e->add_option("--checkpoint", eval.checkpoint, "checkpoint file")->required();
  e->add_option("--data", eval.data, "raw dataset file, synth directory or image folder");
  e->add_option("--config", eval.config, "run config (default: run.cfg next to the checkpoint)");
  e->add_option("--way", eval.way, "classes per episode");
  e->add_option("--shot", eval.shot, "support samples per class");
  e->add_option("--query", eval.query, "query samples per class");
  e->add_option("--episodes", eval.episodes, "evaluation episodes (default 600)");
  e->add_option("--seed", eval.seed, "episode seed");
  e->add_option("--split", eval.split, "class pool: train, val, test or all")->capture_default_str();
  e->add_option("--dump-features", eval.dump_features, "write comparative features as CSV rows");
  e->add_option("--dump-episodes", eval.dump_episodes, "episodes to dump")->capture_default_str();
  e->add_option("--metrics", eval.metrics, "metrics file to append the result to");

  double tolerance = 1e-4;
  std::size_t samples = 64;
  std::uint64_t gc_seed = 0;
  auto* g = app.add_subcommand("gradcheck", "compare analytic and numeric gradients");
  g->add_option("--tolerance", tolerance, "relative error bound")->capture_default_str();
  g->add_option("--samples", samples, "coordinates per check")->capture_default_str();
  g->add_option("--seed", gc_seed, "random seed")->capture_default_str();

  fs::path synth_out;
  SynthSpec synth;
  std::uint64_t synth_seed = 0;
  auto* s = app.add_subcommand("synth", "generate a synthetic fine-grained dataset");
  s->add_option("--out", synth_out, "output directory")->required();
  s->add_option("--classes", synth.classes, "class count")->capture_default_str();
  s->add_option("--per-class", synth.per_class, "samples per class")->capture_default_str();
  s->add_option("--sigma", synth.sigma, "noise level")->capture_default_str();
  s->add_option("--seed", synth_seed, "random seed")->capture_default_str();
  s->add_option("--image-size", synth.image_size, "image side")->capture_default_str();
  s->add_option("--families", synth.families, "background families")->capture_default_str();
  s->add_option("--patch", synth.patch, "patch side")->capture_default_str();
  s->add_option("--jitter", synth.jitter, "max patch offset")->capture_default_str();

  std::vector<std::size_t> dims{16, 32, 64, 128, 256, 512, 1024, 2048};
  BenchOptions bench;
  auto* b = app.add_subcommand("bench", "parameter counts and forward time of the pooling variants");
  b->add_option("--dims", dims, "bilinear dims")->delimiter(',')->capture_default_str();
  b->add_option("--channels", bench.channels, "feature channels")->capture_default_str();
  b->add_option("--positions", bench.positions, "spatial positions")->capture_default_str();
  b->add_option("--reps", bench.repetitions, "repetitions per measurement")->capture_default_str();
  b->add_option("--seed", bench.seed, "random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*t) return cmd_train(train);
    if (*e) return cmd_eval(eval);
    if (*g) return cmd_gradcheck(tolerance, samples, gc_seed);
    if (*s) return cmd_synth(synth_out, synth, synth_seed);
    if (*b) return cmd_bench(dims, bench);
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kConfig;
  } catch (const NumericError& err) {
    std::cerr << "numeric error: " << err.what() << "\n";
    return kNumeric;
  } catch (const IncompatibleError& err) {
    std::cerr << "incompatible: " << err.what() << "\n";
    return kIncompatible;
  } catch (const EpisodeError& err) {
    std::cerr << "episode error: " << err.what() << "\n";
    return kConfig;
  } catch (const ShapeError& err) {
    std::cerr << "shape error: " << err.what() << "\n";
    return kIncompatible;
  } catch (const FormatError& err) {
    std::cerr << "format error: " << err.what() << "\n";
    return kIncompatible;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
