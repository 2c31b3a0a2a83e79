#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>

#include "lrpabn/checkpoint.hpp"
#include "lrpabn/config.hpp"
#include "lrpabn/data_io.hpp"
#include "lrpabn/errors.hpp"
#include "lrpabn/gradcheck_suite.hpp"
#include "lrpabn/model.hpp"
#include "lrpabn/pooling.hpp"
#include "lrpabn/training.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace lrpabn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Tensor expect_rank(const Array& a, py::ssize_t rank, const char* what) {
  if (a.ndim() != rank) {
    throw ShapeError(std::string(what) + ": expected a rank-" + std::to_string(rank) + " array, got rank " +
                     std::to_string(a.ndim()));
  }
  return to_tensor(a);
}

py::tuple dataset_arrays(const LabeledDataset& data) {
  if (data.size() == 0) return py::make_tuple(Array(std::vector<py::ssize_t>{0}), py::array_t<int>(std::vector<py::ssize_t>{0}));
  const Shape& s = data.image(0).shape();
  Array images(std::vector<py::ssize_t>{static_cast<py::ssize_t>(data.size()), static_cast<py::ssize_t>(s[0]),
                                        static_cast<py::ssize_t>(s[1]), static_cast<py::ssize_t>(s[2])});
  double* dst = images.mutable_data();
  for (std::size_t i = 0; i < data.size(); ++i) dst = std::copy(data.image(i).data().begin(), data.image(i).data().end(), dst);
  py::array_t<int> labels(std::vector<py::ssize_t>{static_cast<py::ssize_t>(data.size())});
  std::copy(data.labels().begin(), data.labels().end(), labels.mutable_data());
  return py::make_tuple(images, labels);
}

LabeledDataset dataset_from_arrays(const Array& images, const py::array_t<int>& labels) {
  if (images.ndim() != 4) throw ShapeError("images must be [N, c, h, w]");
  if (labels.ndim() != 1 || labels.shape(0) != images.shape(0)) throw ShapeError("labels must be [N]");
  const Shape one{static_cast<std::size_t>(images.shape(1)), static_cast<std::size_t>(images.shape(2)),
                  static_cast<std::size_t>(images.shape(3))};
  const std::size_t stride = one[0] * one[1] * one[2];
  LabeledDataset data;
  for (py::ssize_t i = 0; i < images.shape(0); ++i) {
    const double* src = images.data() + i * stride;
    data.add(Tensor(one, std::vector<double>(src, src + stride)), labels.at(i));
  }
  return data;
}

Var constant(Tape& tape, const Array& a, const char* what) { return tape.constant(expect_rank(a, 3, what)); }

// Frozen model wrapper; the Model itself is not copyable cheaply.
struct PyModel {
  std::shared_ptr<Model> model;

  static ModelConfig parse_model(const std::string& text) { return parse_config(text).model; }

  EpisodeBatch batch(const Array& support, const Array& query, std::size_t way, std::size_t shot) const {
    const Tensor s = expect_rank(support, 4, "support"), q = expect_rank(query, 4, "query");
    if (s.dim(0) != way * shot) throw ShapeError("support must hold way*shot images");
    if (Shape(s.shape().begin() + 1, s.shape().end()) != Shape(q.shape().begin() + 1, q.shape().end())) {
      throw ShapeError("support and query images differ in shape");
    }
    EpisodeBatch b;
    b.way = way;
    b.shot = shot;
    b.queries = q.dim(0);
    Shape shape = s.shape();
    shape[0] = s.dim(0) + q.dim(0);
    std::vector<double> values(s.data().begin(), s.data().end());
    values.insert(values.end(), q.data().begin(), q.data().end());
    b.images = Tensor(shape, std::move(values));
    for (std::size_t j = 0; j < way; ++j) b.class_labels.push_back(static_cast<int>(j));
    b.query_labels.assign(b.queries, 0);
    return b;
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Few-shot fine-grained classification with low-rank pairwise bilinear pooling";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<EpisodeError>(m, "EpisodeError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);
  py::register_exception<IncompatibleError>(m, "IncompatibleError", PyExc_ValueError);

  // pooling operators on pair-matched maps [p, c, hw]
  m.def(
      "pairwise_outer",
      [](const Array& a, const Array& b) {
        Tape tape;
        return to_array(pairwise_outer(constant(tape, a, "a"), constant(tape, b, "b")).value());
      },
      py::arg("a"), py::arg("b"), "a_p b_p^T flattened, [p, c*c].");
  m.def(
      "lowrank_full",
      [](const Array& a, const Array& b, const Array& w) {
        Tape tape;
        return to_array(
            lowrank_full(constant(tape, a, "a"), constant(tape, b, "b"), constant(tape, w, "w")).value());
      },
      py::arg("a"), py::arg("b"), py::arg("w"), "z[p, i, j] = a_j^T W_i b_j, [p, n, hw].");
  m.def(
      "lowrank_factorized",
      [](const Array& a, const Array& b, const Array& u, const Array& v) {
        Tape tape;
        Var uu = tape.constant(expect_rank(u, 2, "u")), vv = tape.constant(expect_rank(v, 2, "v"));
        return to_array(lowrank_factorized(constant(tape, a, "a"), constant(tape, b, "b"), uu, vv).value());
      },
      py::arg("a"), py::arg("b"), py::arg("u"), py::arg("v"), "z[p, i, j] = (U_i^T a_j)(V_i^T b_j), [p, n, hw].");
  m.def(
      "concat_baseline",
      [](const Array& a, const Array& b) {
        Tape tape;
        return to_array(concat_baseline(constant(tape, a, "a"), constant(tape, b, "b")).value());
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "self_bilinear",
      [](const Array& x) { return to_array(self_bilinear_oracle(FeatureMap(expect_rank(x, 2, "x")))); },
      py::arg("x"), "(1/hw) sum_j x_j x_j^T of one [c, hw] map.");
  m.def(
      "bilinear_parameter_count",
      [](const std::string& variant, std::size_t channels, std::size_t dim) {
        return bilinear_parameter_count(parse_pooling_variant(variant), channels, dim);
      },
      py::arg("variant"), py::arg("channels"), py::arg("dim"));

  // data
  m.def(
      "synthetic",
      [](std::size_t classes, std::size_t per_class, std::size_t image_size, std::size_t families, std::size_t patch,
         std::size_t jitter, double sigma, std::uint64_t seed) {
        SynthSpec spec{classes, per_class, image_size, families, patch, jitter, sigma};
        return dataset_arrays(generate_synthetic(spec, seed));
      },
      py::arg("classes") = 25, py::arg("per_class") = 30, py::arg("image_size") = 84, py::arg("families") = 5,
      py::arg("patch") = 12, py::arg("jitter") = 4, py::arg("sigma") = 0.05, py::arg("seed") = 0,
      "Synthetic fine-grained images [N, 3, s, s] and labels [N].");
  m.def(
      "load_dataset",
      [](const fs::path& path, std::size_t image_size) { return dataset_arrays(load_dataset_path(path, image_size)); },
      py::arg("path"), py::arg("image_size") = 84, "Raw dataset file or image folder -> (images, labels).");
  m.def(
      "save_dataset",
      [](const fs::path& path, const Array& images, const py::array_t<int>& labels) {
        save_raw_dataset(path, dataset_from_arrays(images, labels));
      },
      py::arg("path"), py::arg("images"), py::arg("labels"));

  // statistics
  m.def(
      "summarize",
      [](std::vector<double> accuracies) {
        const EvalReport r = summarize(std::move(accuracies));
        return py::make_tuple(r.mean_accuracy, r.ci_halfwidth);
      },
      py::arg("accuracies"), "(mean, 95% half-width) of per-episode accuracies in percent.");

  m.def(
      "gradcheck",
      [](double tolerance, std::size_t samples, std::uint64_t seed) {
        py::list rows;
        for (const auto& r : run_gradcheck_suite(tolerance, samples, seed)) {
          rows.append(py::dict(py::arg("name") = r.name, py::arg("worst_relative_error") = r.report.worst_relative_error,
                               py::arg("coordinates") = r.report.coordinates, py::arg("passed") = r.report.passed()));
        }
        return rows;
      },
      py::arg("tolerance") = 1e-4, py::arg("samples") = 64, py::arg("seed") = 0);

  py::class_<PyModel>(m, "Model")
      .def(py::init([](const std::string& config, std::uint64_t seed) {
             return PyModel{std::make_shared<Model>(PyModel::parse_model(config), seed)};
           }),
           py::arg("config") = "", py::arg("seed") = 0,
           "Fresh model; `config` holds model.* lines in config-file syntax.")
      .def_static(
          "load",
          [](const fs::path& checkpoint, std::optional<std::string> config) {
            ModelParams params = load_checkpoint(checkpoint);
            const ModelConfig cfg = config ? PyModel::parse_model(*config) : infer_model_config(params);
            return PyModel{std::make_shared<Model>(cfg, std::move(params))};
          },
          py::arg("checkpoint"), py::arg("config") = py::none())
      .def("save", [](const PyModel& self, const fs::path& path) { save_checkpoint(path, self.model->params()); })
      .def_property_readonly("config",
                             [](const PyModel& self) { return format_model_config(self.model->config()); })
      .def_property_readonly("parameter_count",
                             [](const PyModel& self) { return self.model->params().total_values(); })
      .def(
          "score",
          [](const PyModel& self, const Array& support, const Array& query, std::size_t way, std::size_t shot) {
            const EpisodeBatch b = self.batch(support, query, way, shot);
            RelationMatrix r;
            {
              py::gil_scoped_release release;
              r = self.model->score(b);
            }
            Array out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(r.queries), static_cast<py::ssize_t>(r.classes)});
            std::copy(r.scores.begin(), r.scores.end(), out.mutable_data());
            return out;
          },
          py::arg("support"), py::arg("query"), py::arg("way"), py::arg("shot") = 1,
          "Relation scores [queries, way]; support is class-major [way*shot, c, h, w].")
      .def(
          "evaluate",
          [](const PyModel& self, const Array& images, const py::array_t<int>& labels, std::size_t way,
             std::size_t shot, std::size_t query, std::size_t episodes, std::uint64_t seed) {
            const LabeledDataset data = dataset_from_arrays(images, labels);
            EvalReport r;
            {
              py::gil_scoped_release release;
              r = evaluate(model_scorer(*self.model), data, data.classes(), {way, shot, query, Split::Test}, episodes,
                           seed);
            }
            return py::make_tuple(r.mean_accuracy, r.ci_halfwidth);
          },
          py::arg("images"), py::arg("labels"), py::arg("way") = 5, py::arg("shot") = 1, py::arg("query") = 15,
          py::arg("episodes") = 600, py::arg("seed") = 1, "(mean accuracy %, 95% half-width) over random episodes.");

  m.def(
      "train",
      [](const std::string& config, const fs::path& out_dir, std::optional<std::size_t> episodes) {
        RunConfig cfg = parse_config(config);
        cfg.out_dir = out_dir;
        if (episodes) cfg.train.episodes = *episodes;
        cfg.train.episode = cfg.episode;
        cfg.train.episode.split = Split::Train;
        TrainingArtifacts out;
        std::shared_ptr<Model> model;
        {
          py::gil_scoped_release release;
          const LabeledDataset data = load_run_dataset(cfg);
          const std::vector<int> classes = data.classes();
          const ClassPartition split = partition_classes(cfg, classes);
          model = std::make_shared<Model>(cfg.model, cfg.train.seed);
          out = run_training(cfg.train, *model, data, split.train, cfg.out_dir);
        }
        return py::make_tuple(PyModel{model}, out.metrics, out.checkpoint);
      },
      py::arg("config"), py::arg("out_dir"), py::arg("episodes") = py::none(),
      "Trains from config text; returns (model, metrics path, checkpoint path).");
}
