#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "smug/io.hpp"
#include "smug/metrics.hpp"
#include "smug/phantom.hpp"
#include "smug/rng.hpp"

using namespace smug;
using namespace smug::ad;
using namespace smug::data;

namespace {

mri::AcquisitionModel small_model(int h = 16, int w = 16, int coils = 2, int accel = 2) {
  return mri::make_model(mri::build_cartesian_mask(h, w, accel, 2, 5),
                         mri::synth_sensitivities(h, w, coils));
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("generate_phantom: deterministic in the seed") {
  Phantom a = generate_phantom(32, 32, 7);
  Phantom b = generate_phantom(32, 32, 7);
  CHECK(a.image.data == b.image.data);
  CHECK(a.n_ellipses == b.n_ellipses);
  Phantom c = generate_phantom(32, 32, 8);
  CHECK(a.image.data != c.image.data);
}

TEST_CASE("generate_phantom: magnitude normalized to [0, 1] with max exactly 1") {
  for (uint64_t seed : {1ull, 7ull, 99ull}) {
    Phantom p = generate_phantom(24, 20, seed);
    Tensor mag = magnitude_image(p.image);
    double mx = 0.0, mn = 1e300;
    for (double v : mag.data) {
      mx = std::max(mx, v);
      mn = std::min(mn, v);
    }
    CHECK(mx == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mn >= 0.0);
  }
}

TEST_CASE("generate_phantom: ellipse count within [3, 8] and recorded") {
  Phantom p = generate_phantom(32, 32, 7);
  CHECK(p.n_ellipses >= 3);
  CHECK(p.n_ellipses <= 8);
}

TEST_CASE("generate_phantom: tiny extents are rejected below 8") {
  CHECK_THROWS_AS(generate_phantom(4, 32, 1), std::invalid_argument);
}

TEST_CASE("simulate_measurement: zero noise is exactly the forward model") {
  auto model = small_model();
  Phantom p = generate_phantom(16, 16, 3);
  Tensor y = simulate_measurement(model, p.image, 0.0, 42);
  CHECK(y.data == mri::forward(model, p.image).data);
}

TEST_CASE("simulate_measurement: masked rows stay exactly zero") {
  auto model = small_model();
  Phantom p = generate_phantom(16, 16, 3);
  Tensor y = simulate_measurement(model, p.image, 0.1, 42);
  for (int c = 0; c < 2; ++c)
    for (int row = 0; row < 16; ++row) {
      if (model.mask.row_kept(row)) continue;
      for (int col = 0; col < 16; ++col)
        for (int ch = 0; ch < 2; ++ch)
          CHECK(y.data[(((static_cast<size_t>(c) * 16 + row) * 16) + col) * 2 + ch] == 0.0);
    }
}

TEST_CASE("simulate_measurement: empirical noise std within 5%") {
  // full mask so every entry carries noise: 2 coils * 64*64*2 = 16384 draws
  auto model = mri::make_model(mri::build_cartesian_mask(64, 64, 1, 4, 5),
                               mri::synth_sensitivities(64, 64, 2));
  Phantom p = generate_phantom(64, 64, 3);
  const double std_target = 0.05;
  Tensor clean = mri::forward(model, p.image);
  Tensor noisy = simulate_measurement(model, p.image, std_target, 1234);
  double var = 0.0;
  for (size_t i = 0; i < clean.data.size(); ++i) {
    const double d = noisy.data[i] - clean.data[i];
    var += d * d;
  }
  const double emp = std::sqrt(var / static_cast<double>(clean.data.size()));
  CHECK(std::abs(emp - std_target) < 0.05 * std_target);
}

TEST_CASE("generate_dataset: pure function of its arguments") {
  auto model = small_model();
  Dataset a = generate_dataset("train", 4, model, 11, 0.0, 2);
  Dataset b = generate_dataset("train", 4, model, 11, 0.0, 1);
  REQUIRE(a.count() == b.count());
  for (int i = 0; i < a.count(); ++i) {
    CHECK(a.samples[i].target.data == b.samples[i].target.data);
    CHECK(a.samples[i].kspace.data == b.samples[i].kspace.data);
  }
}

TEST_CASE("generate_dataset: splits draw from disjoint seed ranges") {
  auto model = small_model();
  Dataset tr = generate_dataset("train", 4, model, 11, 0.0);
  Dataset va = generate_dataset("val", 4, model, 11, 0.0);
  Dataset te = generate_dataset("test", 4, model, 11, 0.0);
  for (const auto& a : tr.samples)
    for (const auto& b : va.samples) CHECK(a.phantom_seed != b.phantom_seed);
  for (const auto& a : va.samples)
    for (const auto& b : te.samples) CHECK(a.phantom_seed != b.phantom_seed);
}

TEST_CASE("dataset samples regenerate exactly from recorded metadata") {
  auto model = small_model();
  Dataset ds = generate_dataset("test", 3, model, 21, 0.05);
  for (const auto& s : ds.samples) {
    Phantom p = generate_phantom(ds.height, ds.width, s.phantom_seed);
    CHECK(p.image.data == s.target.data);
    CHECK(p.n_ellipses == s.n_ellipses);
    Tensor y = simulate_measurement(model, s.target, ds.noise_std, s.noise_seed);
    CHECK(y.data == s.kspace.data);
  }
}

TEST_CASE("save/load dataset: bit-exact round trip") {
  auto model = small_model();
  Dataset ds = generate_dataset("val", 3, model, 31, 0.01);
  const std::string path = temp_path("smug_test_ds.bin");
  save_dataset(ds, path);
  Dataset ld = load_dataset(path);
  CHECK(ld.split == ds.split);
  CHECK(ld.seed == ds.seed);
  CHECK(ld.noise_std == ds.noise_std);
  REQUIRE(ld.count() == ds.count());
  for (int i = 0; i < ds.count(); ++i) {
    CHECK(ld.samples[i].target.data == ds.samples[i].target.data);
    CHECK(ld.samples[i].kspace.data == ds.samples[i].kspace.data);
    CHECK(ld.samples[i].phantom_seed == ds.samples[i].phantom_seed);
  }
  CHECK(ld.model.mask.kept_rows == ds.model.mask.kept_rows);
  CHECK(ld.model.sens.maps.data == ds.model.sens.maps.data);
  std::filesystem::remove(path);
}

TEST_CASE("dataset file: header-only read and offset accounting") {
  auto model = small_model();
  Dataset ds = generate_dataset("train", 2, model, 41, 0.0);
  const std::string path = temp_path("smug_test_hdr.bin");
  save_dataset(ds, path);

  DatasetInfo info = read_dataset_info(path);
  CHECK(info.split == "train");
  CHECK(info.count == 2);
  CHECK(info.height == 16);

  // offset accounting: 8 (magic) + 8 (len) + header + payload doubles
  std::ifstream f(path, std::ios::binary);
  f.seekg(8);
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), 8);
  const uint64_t per_sample = (16 * 16 * 2 + 2 * 16 * 16 * 2) * sizeof(double);
  CHECK(std::filesystem::file_size(path) == 16 + hlen + 2 * per_sample);
  std::filesystem::remove(path);
}

TEST_CASE("dataset file: corrupt magic and truncated payload are descriptive errors") {
  auto model = small_model();
  Dataset ds = generate_dataset("train", 2, model, 51, 0.0);
  const std::string path = temp_path("smug_test_bad.bin");
  save_dataset(ds, path);

  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.write("XXXXXXXX", 8);
  }
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("corrupt header"),
                       std::runtime_error);

  save_dataset(ds, path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 16);
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("bytes"), std::runtime_error);
  std::filesystem::remove(path);
}
