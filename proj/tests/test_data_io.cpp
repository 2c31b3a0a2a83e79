#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lrpabn/data_io.hpp"
#include "test_util.hpp"

using namespace lrpabn;
using lrpabn::testing::random_tensor;
using lrpabn::testing::same_values;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("lrpabn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// binary PPM: simple enough to write by hand, decoded by the image loader
void write_ppm(const std::filesystem::path& path, std::size_t w, std::size_t h, std::uint8_t r, std::uint8_t g,
               std::uint8_t b) {
  std::ofstream out(path, std::ios::binary);
  out << "P6\n" << w << " " << h << "\n255\n";
  for (std::size_t i = 0; i < w * h; ++i) out.put(static_cast<char>(r)).put(static_cast<char>(g)).put(static_cast<char>(b));
}

}  // namespace

TEST_CASE("raw dataset round trip") {
  LabeledDataset d;
  for (int i = 0; i < 4; ++i) {
    Tensor img = random_tensor({3, 5, 6}, static_cast<std::uint64_t>(i), 0.0, 1.0);
    for (double& v : img.data()) v = static_cast<double>(static_cast<float>(v));
    d.add(std::move(img), 10 - i);
  }
  const auto bytes = encode_raw_dataset(d);
  LabeledDataset e = decode_raw_dataset(bytes);
  REQUIRE(e.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(e.label(i) == d.label(i));
    CHECK(e.image(i).shape() == d.image(i).shape());
    CHECK(same_values(e.image(i), d.image(i)));
  }

  const auto dir = temp_dir("raw");
  save_raw_dataset(dir / "d.lrpt", d);
  CHECK(encode_raw_dataset(load_raw_dataset(dir / "d.lrpt")) == bytes);
  std::filesystem::remove_all(dir);

  auto bad = bytes;
  bad[1] = 'Z';
  CHECK_THROWS_AS(decode_raw_dataset(bad), FormatError);
  CHECK_THROWS_AS(decode_raw_dataset(std::span(bytes).first(bytes.size() - 2)), FormatError);
}

TEST_CASE("bilinear resize") {
  SUBCASE("same size is the identity") {
    Tensor img = random_tensor({3, 84, 84}, 1, 0.0, 1.0);
    Tensor out = resize_to_input(img, 84);
    REQUIRE(out.shape() == img.shape());
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(out[i] == doctest::Approx(img[i]).epsilon(1e-12));
  }
  SUBCASE("constant image stays constant") {
    Tensor img({3, 50, 70});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 50 * 70; ++i) img[c * 3500 + i] = 0.25 * static_cast<double>(c + 1);
    Tensor out = resize_to_input(img, 84);
    CHECK(out.shape() == Shape{3, 84, 84});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 84 * 84; ++i) CHECK(out[c * 7056 + i] == doctest::Approx(0.25 * (c + 1)).epsilon(1e-9));
  }
  SUBCASE("checkerboard downsample keeps the mean") {
    Tensor img({1, 168, 168});
    for (std::size_t y = 0; y < 168; ++y)
      for (std::size_t x = 0; x < 168; ++x) img[y * 168 + x] = ((x + y) % 2 == 0) ? 1.0 : 0.0;
    Tensor out = resize_to_input(img, 84);
    double mean = 0;
    for (double v : out.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      mean += v;
    }
    CHECK(mean / static_cast<double>(out.size()) == doctest::Approx(0.5).epsilon(1e-6));
  }
}

TEST_CASE("image folder loading") {
  const auto root = temp_dir("folder");
  std::filesystem::create_directories(root / "b_sparrow");
  std::filesystem::create_directories(root / "a_finch");
  for (int i = 0; i < 3; ++i) {
    write_ppm(root / "a_finch" / ("img" + std::to_string(i) + ".ppm"), 20, 10, 255, 0, 0);
    write_ppm(root / "b_sparrow" / ("img" + std::to_string(i) + ".ppm"), 12, 16, 0, 0, 255);
  }
  {
    std::ofstream junk(root / "b_sparrow" / "broken.jpg");
    junk << "not an image";
  }
  std::ostringstream warnings;
  LabeledDataset d = load_image_folder(root, 84, &warnings);
  REQUIRE(d.size() == 6);
  CHECK(d.classes() == std::vector<int>{0, 1});
  CHECK(d.class_names.at(0) == "a_finch");
  CHECK(d.class_names.at(1) == "b_sparrow");
  CHECK(warnings.str().find("broken.jpg") != std::string::npos);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Tensor& img = d.image(i);
    CHECK(img.shape() == Shape{3, 84, 84});
    // RGB order: finch red, sparrow blue
    const bool finch = d.label(i) == 0;
    CHECK(img[0] == doctest::Approx(finch ? 1.0 : 0.0));
    CHECK(img[2 * 7056] == doctest::Approx(finch ? 0.0 : 1.0));
  }

  std::filesystem::create_directories(root / "c_empty");
  CHECK_THROWS_AS(load_image_folder(root, 84), ConfigError);
  std::filesystem::remove_all(root);
  CHECK_THROWS_AS(load_image_folder(root, 84), ConfigError);
}

TEST_CASE("synthetic data") {
  SynthSpec spec;
  spec.classes = 6;
  spec.per_class = 5;
  spec.image_size = 24;
  spec.families = 2;
  spec.patch = 6;
  spec.jitter = 2;
  std::vector<SynthRecord> records;
  LabeledDataset a = generate_synthetic(spec, 3, &records);
  LabeledDataset b = generate_synthetic(spec, 3);
  LabeledDataset c = generate_synthetic(spec, 4);
  CHECK(a.size() == 30);
  CHECK(records.size() == 30);
  CHECK(encode_raw_dataset(a) == encode_raw_dataset(b));
  CHECK(encode_raw_dataset(a) != encode_raw_dataset(c));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.image(i).shape() == Shape{3, 24, 24});
    for (double v : a.image(i).data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(records[i].label == a.label(i));
    CHECK(records[i].family == static_cast<std::size_t>(a.label(i)) % 2);
  }

  SUBCASE("noise-free classes are separable") {
    SynthSpec clean = spec;
    clean.sigma = 0.0;
    clean.jitter = 0;
    LabeledDataset d = generate_synthetic(clean, 5);
    CHECK(nearest_centroid_accuracy(d) == 100.0);
    // every sample of a class is the same image
    for (int label : d.classes()) {
      auto idx = d.indices_of(label);
      for (auto i : idx) CHECK(same_values(d.image(i), d.image(idx.front())));
    }
  }
  SUBCASE("invalid specs") {
    SynthSpec bad = spec;
    bad.patch = 30;
    CHECK_THROWS_AS(generate_synthetic(bad, 1), ConfigError);
    bad = spec;
    bad.classes = 0;
    CHECK_THROWS_AS(generate_synthetic(bad, 1), ConfigError);
  }
  SUBCASE("metadata csv") {
    const auto dir = temp_dir("synth_meta");
    write_synth_metadata(dir / "meta.csv", records);
    std::ifstream in(dir / "meta.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "index,label,family,patch_x,patch_y");
    std::size_t rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    CHECK(rows == 30);
    std::filesystem::remove_all(dir);
  }
}
