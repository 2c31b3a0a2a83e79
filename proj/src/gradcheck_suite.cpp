#include "lrpabn/gradcheck_suite.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <random>

#include "lrpabn/alignment.hpp"
#include "lrpabn/comparator.hpp"
#include "lrpabn/encoder.hpp"
#include "lrpabn/model.hpp"
#include "lrpabn/ops.hpp"

namespace lrpabn {

namespace {

Tensor uniform(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = d(rng);
  return t;
}

// magnitudes in [0.2, 1] with random sign: keeps |x|-type kinks out of reach
Tensor off_zero(Shape shape, std::mt19937_64& rng) {
  Tensor t = uniform(std::move(shape), rng, 0.2, 1.0);
  std::bernoulli_distribution coin(0.5);
  for (double& v : t.data()) {
    if (coin(rng)) v = -v;
  }
  return t;
}

// Weighted sum with fixed weights so each output sees a distinct upstream gradient.
Var probe(Tape& tape, Var y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ops::sum(ops::hadamard(y, tape.constant(uniform(y.shape(), rng))));
}

struct Case {
  std::string name;
  ModelParams params;
  LossProgram loss;
  std::size_t samples_scale = 1;
};

Var in(Tape& t, ModelParams& m, const char* name) { return t.parameter(m.get(name)); }

EpisodeBatch tiny_batch(std::size_t way, std::size_t shot, std::size_t per_class, std::mt19937_64& rng) {
  EpisodeBatch b;
  b.way = way;
  b.shot = shot;
  b.queries = way * per_class;
  b.images = uniform({way * shot + b.queries, 3, 8, 8}, rng, 0.0, 1.0);
  for (std::size_t j = 0; j < way; ++j) b.class_labels.push_back(static_cast<int>(j));
  for (std::size_t j = 0; j < way; ++j)
    for (std::size_t q = 0; q < per_class; ++q) b.query_labels.push_back(static_cast<int>(j));
  return b;
}

ModelConfig tiny_model(PoolingVariant variant, AlignMode align) {
  ModelConfig cfg;
  cfg.encoder.image_size = 8;
  cfg.encoder.filters = 3;
  cfg.encoder.align = align;
  cfg.pooling.variant = variant;
  cfg.pooling.bilinear_dim = 4;
  cfg.comparator_hidden = 5;
  // concat rows keep the encoder's exact zeros, where signed sqrt has no slope
  if (variant == PoolingVariant::ConcatBaseline) cfg.pooling.normalization = Normalization::L2Only;
  return cfg;
}

// Moves the generator off its identity start so its gradients are generic.
void perturb_generator(ModelParams& params, std::mt19937_64& rng) {
  Parameter& w2 = params.get("align.fc2.weight");
  w2.value = uniform(w2.value.shape(), rng, -0.2, 0.2);
  params.get("align.fc1.bias").value.fill(0.5);
}

std::vector<Case> operator_cases(std::mt19937_64& rng) {
  std::vector<Case> cases;
  auto add = [&](std::string name, ModelParams p, LossProgram f) {
    cases.push_back({std::move(name), std::move(p), std::move(f)});
  };

  for (int pad : {0, 1}) {
    ModelParams p;
    p.add("x", uniform({2, 2, 5, 5}, rng));
    p.add("k", uniform({3, 2, 3, 3}, rng));
    p.add("b", uniform({3}, rng));
    add("conv2d pad=" + std::to_string(pad), std::move(p), [pad](Tape& t, ModelParams& m) {
      return probe(t, ops::conv2d(in(t, m, "x"), in(t, m, "k"), in(t, m, "b"), pad), 1);
    });
  }
  {
    ModelParams p;
    p.add("x", uniform({4, 3, 3, 3}, rng));
    p.add("gamma", uniform({3}, rng, 0.5, 1.5));
    p.add("beta", uniform({3}, rng));
    add("batchnorm", std::move(p), [](Tape& t, ModelParams& m) {
      return probe(t, ops::batchnorm(in(t, m, "x"), in(t, m, "gamma"), in(t, m, "beta")), 2);
    });
  }
  {
    ModelParams p;
    p.add("x", off_zero({8, 10}, rng));
    add("relu", std::move(p), [](Tape& t, ModelParams& m) { return probe(t, ops::relu(in(t, m, "x")), 3); });
  }
  {
    ModelParams p;
    p.add("x", uniform({8, 10}, rng, -3.0, 3.0));
    add("sigmoid", std::move(p), [](Tape& t, ModelParams& m) { return probe(t, ops::sigmoid(in(t, m, "x")), 4); });
  }
  {
    ModelParams p;
    p.add("x", uniform({2, 2, 6, 7}, rng));
    add("maxpool2x2", std::move(p), [](Tape& t, ModelParams& m) { return probe(t, ops::maxpool2x2(in(t, m, "x")), 5); });
  }
  {
    ModelParams p;
    p.add("x", uniform({5, 7}, rng));
    p.add("w", uniform({4, 7}, rng));
    p.add("b", uniform({4}, rng));
    add("linear", std::move(p), [](Tape& t, ModelParams& m) {
      return probe(t, ops::linear(in(t, m, "x"), in(t, m, "w"), in(t, m, "b")), 6);
    });
  }
  {
    ModelParams p;
    p.add("a", uniform({6, 12}, rng));
    p.add("b", uniform({6, 12}, rng));
    add("hadamard", p, [](Tape& t, ModelParams& m) { return probe(t, ops::hadamard(in(t, m, "a"), in(t, m, "b")), 7); });
    add("add", p, [](Tape& t, ModelParams& m) { return probe(t, ops::add(in(t, m, "a"), in(t, m, "b")), 8); });
    add("sub", p, [](Tape& t, ModelParams& m) { return probe(t, ops::sub(in(t, m, "a"), in(t, m, "b")), 9); });
    add("scale", p, [](Tape& t, ModelParams& m) { return probe(t, ops::scale(in(t, m, "a"), -1.7), 10); });
    add("mse", p, [](Tape& t, ModelParams& m) { return ops::mse(in(t, m, "a"), in(t, m, "b")); });
    add("sum", p, [](Tape& t, ModelParams& m) {
      return ops::sum(ops::hadamard(in(t, m, "a"), in(t, m, "a")));
    });
  }
  {
    ModelParams p;
    p.add("a", uniform({2, 5, 7}, rng));
    p.add("b", uniform({2, 7, 4}, rng));
    p.add("bt", uniform({2, 4, 7}, rng));
    add("matmul", p, [](Tape& t, ModelParams& m) { return probe(t, ops::matmul(in(t, m, "a"), in(t, m, "b")), 11); });
    add("matmul transposed", p, [](Tape& t, ModelParams& m) {
      return probe(t, ops::matmul(in(t, m, "a"), in(t, m, "bt"), true), 12);
    });
  }
  {
    ModelParams p;
    p.add("x", uniform({3, 4, 6}, rng));
    for (std::size_t axis : {0u, 1u, 2u}) {
      add("sum_axis " + std::to_string(axis), p, [axis](Tape& t, ModelParams& m) {
        return probe(t, ops::sum_axis(in(t, m, "x"), axis), 13);
      });
    }
    add("reshape", p, [](Tape& t, ModelParams& m) { return probe(t, ops::reshape(in(t, m, "x"), {12, 6}), 14); });
    add("gather", p, [](Tape& t, ModelParams& m) { return probe(t, ops::gather(in(t, m, "x"), {2, 0, 2, 1}), 15); });
  }
  {
    ModelParams p;
    p.add("a", uniform({2, 3, 12}, rng));
    p.add("b", uniform({2, 4, 12}, rng));
    add("concat_channels", std::move(p), [](Tape& t, ModelParams& m) {
      return probe(t, ops::concat_channels(in(t, m, "a"), in(t, m, "b")), 16);
    });
  }
  {
    ModelParams p;
    p.add("x", uniform({2, 4, 9}, rng));
    p.add("proj", uniform({4, 5}, rng));
    add("project_channels", std::move(p), [](Tape& t, ModelParams& m) {
      return probe(t, ops::project_channels(in(t, m, "x"), in(t, m, "proj")), 17);
    });
  }
  {
    ModelParams p;
    p.add("a", uniform({2, 3, 9}, rng));
    p.add("w", uniform({4, 3, 3}, rng));
    p.add("b", uniform({2, 3, 9}, rng));
    add("bilinear_form", std::move(p), [](Tape& t, ModelParams& m) {
      return probe(t, ops::bilinear_form(in(t, m, "a"), in(t, m, "w"), in(t, m, "b")), 18);
    });
  }
  {
    ModelParams p;
    p.add("a", uniform({3, 4, 9}, rng));
    p.add("b", uniform({2, 4, 9}, rng));
    add("paired_hadamard_mean", std::move(p), [](Tape& t, ModelParams& m) {
      return probe(t, ops::paired_hadamard_mean(in(t, m, "a"), in(t, m, "b")), 19);
    });
  }
  {
    ModelParams p;
    p.add("x", off_zero({6, 12}, rng));
    add("signed_sqrt", std::move(p), [](Tape& t, ModelParams& m) { return probe(t, ops::signed_sqrt(in(t, m, "x")), 20); });
  }
  {
    ModelParams p;
    p.add("a", uniform({6, 12}, rng));
    p.add("b", uniform({6, 12}, rng));
    add("l2_normalize_rows", p, [](Tape& t, ModelParams& m) {
      return probe(t, ops::l2_normalize_rows(in(t, m, "a")), 21);
    });
    add("row_cosine", p, [](Tape& t, ModelParams& m) { return probe(t, ops::row_cosine(in(t, m, "a"), in(t, m, "b")), 22); });
  }
  return cases;
}

std::vector<Case> component_cases(std::mt19937_64& rng) {
  std::vector<Case> cases;
  auto add = [&](std::string name, ModelParams p, LossProgram f) {
    cases.push_back({std::move(name), std::move(p), std::move(f)});
  };

  {
    EncoderConfig cfg;
    cfg.image_size = 8;
    cfg.filters = 3;
    ModelParams p;
    add_encoder_params(p, cfg, rng);
    const Tensor images = uniform({3, 3, 8, 8}, rng, 0.0, 1.0);
    add("encoder", std::move(p), [cfg, images](Tape& t, ModelParams& m) {
      ParamBinding bind(t, m);
      return probe(t, embed(bind, cfg, t.constant(images)), 23);
    });
  }
  {
    ModelParams p;
    add_alignment_params(p, 4, rng);
    perturb_generator(p, rng);
    p.add("support", uniform({2, 3, 4}, rng, 0.0, 2.0));
    add("transform generator", std::move(p), [](Tape& t, ModelParams& m) {
      ParamBinding bind(t, m);
      return probe(t, generate_transforms(bind, bind("support")), 24);
    });
  }
  {
    ModelParams p;
    p.add("x", uniform({2, 3, 5}, rng));
    p.add("T", uniform({2, 5, 5}, rng));
    p.add("q", uniform({2, 3, 5}, rng));
    add("apply_alignment", p, [](Tape& t, ModelParams& m) {
      return probe(t, apply_alignment(in(t, m, "x"), in(t, m, "T")), 25);
    });
    add("orthogonality_penalty", p, [](Tape& t, ModelParams& m) { return orthogonality_penalty(in(t, m, "T")); });
    add("align_loss_niv", p, [](Tape& t, ModelParams& m) {
      return align_loss_niv(in(t, m, "q"), apply_alignment(in(t, m, "x"), in(t, m, "T")));
    });
    add("align_loss_cpt", p, [](Tape& t, ModelParams& m) {
      return align_loss_cpt(in(t, m, "q"), in(t, m, "x"), in(t, m, "T"));
    });
    add("align_loss_cosine", p, [](Tape& t, ModelParams& m) {
      return align_loss_cosine(in(t, m, "q"), apply_alignment(in(t, m, "x"), in(t, m, "T")));
    });
  }
  {
    ModelParams p;
    add_comparator_params(p, 6, 5, rng);
    p.add("features", uniform({4, 6}, rng));
    add("comparator", std::move(p), [](Tape& t, ModelParams& m) {
      ParamBinding bind(t, m);
      return probe(t, relation_scores(bind, bind("features")), 26);
    });
  }
  {
    ModelParams p;
    p.add("scores", uniform({6, 3}, rng, 0.05, 0.95));
    add("episode_loss", std::move(p), [](Tape& t, ModelParams& m) {
      static const int queries[] = {4, 5, 6, 4, 5, 6};
      static const int classes[] = {4, 5, 6};
      return episode_loss(in(t, m, "scores"), queries, classes);
    });
  }
  return cases;
}

std::vector<Case> model_cases(std::mt19937_64& rng) {
  std::vector<Case> cases;
  const PoolingVariant variants[] = {PoolingVariant::PairwiseOuter, PoolingVariant::LowRankFull,
                                     PoolingVariant::LowRankFactorized, PoolingVariant::ConcatBaseline};
  for (auto variant : variants) {
    const ModelConfig cfg = tiny_model(variant, AlignMode::Cpt);
    ModelParams params = build_params(cfg, rng());
    perturb_generator(params, rng);
    auto model = std::make_shared<const Model>(cfg, std::uint64_t{0});  // wiring only; parameters come from the case
    const EpisodeBatch batch = tiny_batch(2, 2, 2, rng);
    cases.push_back({"model relation loss (" + std::string(to_string(variant)) + ")", std::move(params),
                     [model, batch](Tape& t, ModelParams& m) {
                       ParamBinding bind(t, m);
                       return model->relation_loss(bind, batch);
                     },
                     2});
  }
  for (auto align : {AlignMode::Niv, AlignMode::Cpt, AlignMode::Cosine}) {
    const ModelConfig cfg = tiny_model(PoolingVariant::LowRankFactorized, align);
    ModelParams full = build_params(cfg, rng());
    perturb_generator(full, rng);
    // the alignment objective reaches only encoder and generator parameters
    ModelParams params;
    for (const Parameter& q : full) {
      if (q.name.starts_with("encoder.") || q.name.starts_with("align.")) params.add(q.name, q.value);
    }
    auto model = std::make_shared<const Model>(cfg, std::uint64_t{0});  // wiring only; parameters come from the case
    const EpisodeBatch batch = tiny_batch(2, 1, 2, rng);
    cases.push_back({"model alignment objective (" + std::string(to_string(align)) + ")", std::move(params),
                     [model, batch](Tape& t, ModelParams& m) {
                       ParamBinding bind(t, m);
                       return model->alignment_objective(bind, batch);
                     },
                     1});
  }
  return cases;
}

}  // namespace

std::vector<GradCheckRow> run_gradcheck_suite(double tolerance, std::size_t samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Case> cases = operator_cases(rng);
  for (auto& c : component_cases(rng)) cases.push_back(std::move(c));
  for (auto& c : model_cases(rng)) cases.push_back(std::move(c));

  std::vector<GradCheckRow> rows;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    Case& c = cases[i];
    const auto start = std::chrono::steady_clock::now();
    GradCheckRow row;
    row.name = c.name;
    row.report = finite_diff_check(c.loss, c.params, tolerance, samples * c.samples_scale, seed + i);
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace lrpabn
