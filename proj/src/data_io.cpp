#include "lrpabn/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <random>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "lrpabn/binary_io.hpp"

namespace lrpabn {

std::vector<std::uint8_t> encode_raw_dataset(const LabeledDataset& dataset) {
  ByteWriter w;
  w.bytes("LRPT");
  w.u8(kRawDatasetVersion);
  w.u32(static_cast<std::uint32_t>(dataset.size()));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Tensor& img = dataset.image(i);
    if (img.rank() != 3) throw ShapeError("raw dataset images must be [c,h,w], got " + to_string(img.shape()));
    w.i32(dataset.label(i));
    for (std::size_t d : img.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : img.data()) w.f32(static_cast<float>(v));
  }
  return w.take();
}

LabeledDataset decode_raw_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "raw dataset");
  r.expect_magic("LRPT");
  const std::uint8_t version = r.u8();
  if (version != kRawDatasetVersion) {
    throw FormatError("raw dataset: unsupported version " + std::to_string(version) + " at offset 4");
  }
  const std::uint32_t count = r.u32();
  LabeledDataset ds;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    const int label = r.i32();
    Shape shape(3);
    for (auto& d : shape) d = r.u32();
    if (shape[0] == 0 || shape[1] == 0 || shape[2] == 0) {
      throw FormatError("raw dataset: sample " + std::to_string(i) + " has a zero dimension at offset " +
                        std::to_string(at + 4));
    }
    Tensor img(shape);
    for (double& v : img.data()) v = r.f32();
    try {
      ds.add(std::move(img), label);
    } catch (const ShapeError& e) {
      throw FormatError("raw dataset: sample " + std::to_string(i) + " at offset " + std::to_string(at) + ": " +
                        e.what());
    }
  }
  if (r.remaining() != 0) {
    throw FormatError("raw dataset: declared " + std::to_string(count) + " samples but " +
                      std::to_string(r.remaining()) + " bytes remain at offset " + std::to_string(r.offset()));
  }
  return ds;
}

void save_raw_dataset(const std::filesystem::path& path, const LabeledDataset& dataset) {
  write_file(path, encode_raw_dataset(dataset));
}

LabeledDataset load_raw_dataset(const std::filesystem::path& path) { return decode_raw_dataset(read_file(path)); }

namespace {

cv::Mat to_mat(const Tensor& chw) {
  const int c = static_cast<int>(chw.dim(0)), h = static_cast<int>(chw.dim(1)), w = static_cast<int>(chw.dim(2));
  cv::Mat m(h, w, CV_64FC(c));
  for (int y = 0; y < h; ++y) {
    auto* row = m.ptr<double>(y);
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) row[x * c + k] = chw[(static_cast<std::size_t>(k) * h + y) * w + x];
  }
  return m;
}

Tensor from_mat(const cv::Mat& m) {
  const int c = m.channels(), h = m.rows, w = m.cols;
  Tensor t({static_cast<std::size_t>(c), static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  for (int y = 0; y < h; ++y) {
    const auto* row = m.ptr<double>(y);
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) t[(static_cast<std::size_t>(k) * h + y) * w + x] = row[x * c + k];
  }
  return t;
}

}  // namespace

Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width) {
  if (image.rank() != 3) throw ShapeError("resize: expected [c,h,w], got " + to_string(image.shape()));
  if (height == 0 || width == 0) throw ShapeError("resize: zero target size");
  if (image.dim(1) == height && image.dim(2) == width) return image;
  cv::Mat out;
  cv::resize(to_mat(image), out, cv::Size(static_cast<int>(width), static_cast<int>(height)), 0, 0,
             cv::INTER_LINEAR);
  return from_mat(out);
}

Tensor resize_to_input(const Tensor& image, std::size_t size) { return resize_bilinear(image, size, size); }

LabeledDataset load_image_folder(const std::filesystem::path& root, std::size_t image_size, std::ostream* warnings) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw ConfigError("image folder " + root.string() + " is not a directory");
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw ConfigError("image folder " + root.string() + " has no class directories");

  LabeledDataset ds;
  for (std::size_t label = 0; label < class_dirs.size(); ++label) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(class_dirs[label])) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::size_t loaded = 0;
    for (const auto& file : files) {
      cv::Mat bgr = cv::imread(file.string(), cv::IMREAD_COLOR);
      if (bgr.empty()) {
        if (warnings) *warnings << "warning: skipping undecodable image " << file.string() << "\n";
        continue;
      }
      cv::Mat rgb, scaled;
      cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
      rgb.convertTo(scaled, CV_64FC3, 1.0 / 255.0);
      Tensor img = from_mat(scaled);
      if (image_size > 0) img = resize_to_input(img, image_size);
      ds.add(std::move(img), static_cast<int>(label));
      ++loaded;
    }
    if (loaded == 0) {
      throw ConfigError("class directory " + class_dirs[label].string() + " holds no decodable images");
    }
    ds.class_names[static_cast<int>(label)] = class_dirs[label].filename().string();
  }
  return ds;
}

LabeledDataset generate_synthetic(const SynthSpec& spec, std::uint64_t seed, std::vector<SynthRecord>* records) {
  const std::size_t s = spec.image_size;
  if (spec.classes < 1 || spec.per_class < 1 || spec.families < 1 || s < 1) {
    throw ConfigError("synthetic spec needs at least one class, sample, family and pixel");
  }
  if (spec.patch < 1 || spec.patch > s) {
    throw ConfigError("synthetic patch size " + std::to_string(spec.patch) + " does not fit a " +
                      std::to_string(s) + "px image");
  }
  if (spec.sigma < 0.0) throw ConfigError("synthetic noise sigma must be >= 0");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr double two_pi = 2.0 * std::numbers::pi;

  // Family backgrounds: per channel, a base level plus two plane waves.
  std::vector<Tensor> backgrounds;
  for (std::size_t f = 0; f < spec.families; ++f) {
    Tensor bg({3, s, s});
    for (std::size_t c = 0; c < 3; ++c) {
      const double base = 0.3 + 0.4 * unit(rng);
      double fx[2], fy[2], phase[2];
      for (int k = 0; k < 2; ++k) {
        fx[k] = 0.5 + 2.5 * unit(rng);
        fy[k] = 0.5 + 2.5 * unit(rng);
        phase[k] = two_pi * unit(rng);
      }
      for (std::size_t y = 0; y < s; ++y)
        for (std::size_t x = 0; x < s; ++x) {
          double v = base;
          for (int k = 0; k < 2; ++k) {
            v += 0.12 * std::sin(two_pi * (fx[k] * x + fy[k] * y) / static_cast<double>(s) + phase[k]);
          }
          bg[(c * s + y) * s + x] = v;
        }
    }
    backgrounds.push_back(std::move(bg));
  }

  // Class patches: a 3x3 grid of high-contrast colored cells.
  std::vector<Tensor> patches;
  for (std::size_t k = 0; k < spec.classes; ++k) {
    Tensor p({3, spec.patch, spec.patch});
    double cell[3][3][3];
    for (auto& row : cell)
      for (auto& col : row)
        for (double& v : col) v = unit(rng) < 0.5 ? 0.05 : 0.95;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < spec.patch; ++y)
        for (std::size_t x = 0; x < spec.patch; ++x)
          p[(c * spec.patch + y) * spec.patch + x] = cell[c][y * 3 / spec.patch][x * 3 / spec.patch];
    patches.push_back(std::move(p));
  }

  const long centre = static_cast<long>((s - spec.patch) / 2);
  const long jitter = static_cast<long>(spec.jitter);
  const long max_pos = static_cast<long>(s - spec.patch);
  std::uniform_int_distribution<long> offset(-jitter, jitter);
  std::normal_distribution<double> noise(0.0, spec.sigma > 0.0 ? spec.sigma : 1.0);

  LabeledDataset ds;
  if (records) records->clear();
  for (std::size_t k = 0; k < spec.classes; ++k) {
    const std::size_t family = k % spec.families;
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      const auto px = static_cast<std::size_t>(std::clamp(centre + offset(rng), 0L, max_pos));
      const auto py = static_cast<std::size_t>(std::clamp(centre + offset(rng), 0L, max_pos));
      Tensor img = backgrounds[family];
      const Tensor& p = patches[k];
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < spec.patch; ++y)
          for (std::size_t x = 0; x < spec.patch; ++x)
            img[(c * s + py + y) * s + px + x] = p[(c * spec.patch + y) * spec.patch + x];
      if (spec.sigma > 0.0) {
        for (double& v : img.data()) v += noise(rng);
      }
      for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);
      if (records) records->push_back({ds.size(), static_cast<int>(k), family, px, py});
      ds.add(std::move(img), static_cast<int>(k));
    }
  }
  return ds;
}

void write_synth_metadata(const std::filesystem::path& path, std::span<const SynthRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "index,label,family,patch_x,patch_y\n";
  for (const SynthRecord& r : records) {
    out << r.index << ',' << r.label << ',' << r.family << ',' << r.patch_x << ',' << r.patch_y << '\n';
  }
}

double nearest_centroid_accuracy(const LabeledDataset& dataset) {
  if (dataset.size() == 0) throw ConfigError("nearest_centroid_accuracy: empty dataset");
  const std::vector<int> classes = dataset.classes();
  const std::size_t dim = dataset.image(0).size();
  std::vector<std::vector<double>> centroids(classes.size(), std::vector<double>(dim, 0.0));
  std::vector<std::size_t> counts(classes.size(), 0);
  auto slot = [&](int label) {
    return static_cast<std::size_t>(std::lower_bound(classes.begin(), classes.end(), label) - classes.begin());
  };
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const std::size_t k = slot(dataset.label(i));
    const Tensor& img = dataset.image(i);
    for (std::size_t d = 0; d < dim; ++d) centroids[k][d] += img[d];
    ++counts[k];
  }
  for (std::size_t k = 0; k < classes.size(); ++k)
    for (double& v : centroids[k]) v /= static_cast<double>(counts[k]);

  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Tensor& img = dataset.image(i);
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t k = 0; k < classes.size(); ++k) {
      double d2 = 0.0;
      for (std::size_t d = 0; d < dim; ++d) d2 += (img[d] - centroids[k][d]) * (img[d] - centroids[k][d]);
      if (d2 < best_d) {
        best_d = d2;
        best = k;
      }
    }
    if (classes[best] == dataset.label(i)) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(dataset.size());
}

}  // namespace lrpabn
