#include "smug/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"
#include "smug/io.hpp"
#include "smug/parallel.hpp"
#include "smug/rng.hpp"

namespace smug::data {

Phantom generate_phantom(int height, int width, uint64_t seed) {
  if (height < 8 || width < 8)
    throw std::invalid_argument("generate_phantom: extents must be at least 8");
  Rng rng(mix_seed(seed, 0x7068616eULL));  // "phan"
  const int n_ellipses = 3 + rng.below(6);
  const double min_dim = static_cast<double>(std::min(height, width));

  ad::Tensor mag({height, width});
  for (int e = 0; e < n_ellipses; ++e) {
    const double cy = rng.uniform(0.3, 0.7) * height;
    const double cx = rng.uniform(0.3, 0.7) * width;
    // semi-axes at least 0.1*min_dim so each ellipse covers a pixel center
    const double ry = rng.uniform(0.1, 0.3) * min_dim;
    const double rx = rng.uniform(0.1, 0.3) * min_dim;
    const double theta = rng.uniform(0.0, M_PI);
    const double intensity = rng.uniform(0.25, 1.0);
    const double ct = std::cos(theta), st = std::sin(theta);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double dy = y - cy, dx = x - cx;
        const double a = (dx * ct + dy * st) / rx;
        const double b = (-dx * st + dy * ct) / ry;
        if (a * a + b * b <= 1.0) mag.data[static_cast<size_t>(y) * width + x] += intensity;
      }
    }
  }
  double max_mag = 0.0;
  for (double v : mag.data) max_mag = std::max(max_mag, v);
  mag.scale_(1.0 / max_mag);

  // smooth low-order phase over normalized coordinates in [-1, 1]
  double coef[6];
  for (double& c : coef) c = rng.uniform(-0.5, 0.5) * M_PI;
  Phantom p;
  p.n_ellipses = n_ellipses;
  p.image = ad::Tensor({height, width, 2});
  for (int y = 0; y < height; ++y) {
    const double ny = height > 1 ? 2.0 * y / (height - 1) - 1.0 : 0.0;
    for (int x = 0; x < width; ++x) {
      const double nx = width > 1 ? 2.0 * x / (width - 1) - 1.0 : 0.0;
      const double phase = coef[0] + coef[1] * nx + coef[2] * ny + coef[3] * nx * ny +
                           coef[4] * nx * nx + coef[5] * ny * ny;
      const double m = mag.data[static_cast<size_t>(y) * width + x];
      const size_t i = (static_cast<size_t>(y) * width + x) * 2;
      p.image.data[i] = m * std::cos(phase);
      p.image.data[i + 1] = m * std::sin(phase);
    }
  }
  return p;
}

ad::Tensor simulate_measurement(const mri::AcquisitionModel& model, const ad::Tensor& target,
                                double noise_std, uint64_t seed) {
  if (noise_std < 0.0)
    throw std::invalid_argument("simulate_measurement: noise_std must be >= 0");
  ad::Tensor y = mri::forward(model, target);
  if (noise_std == 0.0) return y;
  Rng rng(mix_seed(seed, 0x6e6f6973ULL));  // "nois"
  const int h = model.height(), w = model.width(), nc = model.n_coils();
  for (int c = 0; c < nc; ++c) {
    for (int row : model.mask.kept_rows) {
      double* p = &y.data[((static_cast<size_t>(c) * h + row) * w) * 2];
      for (int i = 0; i < 2 * w; ++i) p[i] += noise_std * rng.normal();
    }
  }
  return y;
}

namespace {

// Disjoint per-split seed ranges; counts stay far below the range width.
uint64_t split_base(const std::string& split) {
  if (split == "train") return 0;
  if (split == "val") return 1u << 20;
  if (split == "test") return 2u << 20;
  throw std::invalid_argument("unknown split '" + split + "' (want train|val|test)");
}

}  // namespace

Dataset generate_dataset(const std::string& split, int count,
                         const mri::AcquisitionModel& model, uint64_t seed, double noise_std,
                         int threads) {
  if (count < 0) throw std::invalid_argument("generate_dataset: negative count");
  Dataset ds;
  ds.split = split;
  ds.seed = seed;
  ds.noise_std = noise_std;
  ds.height = model.height();
  ds.width = model.width();
  ds.n_coils = model.n_coils();
  ds.model = model;
  ds.samples.resize(static_cast<size_t>(count));
  const uint64_t base = split_base(split);
  parallel_for(count, threads, [&](int i) {
    Sample& s = ds.samples[static_cast<size_t>(i)];
    s.phantom_seed = mix_seed(seed, base + static_cast<uint64_t>(i));
    s.noise_seed = mix_seed(s.phantom_seed, 0xa0ULL);
    Phantom p = generate_phantom(ds.height, ds.width, s.phantom_seed);
    s.target = std::move(p.image);
    s.n_ellipses = p.n_ellipses;
    s.kspace = simulate_measurement(model, s.target, noise_std, s.noise_seed);
  });
  return ds;
}

static const char* kDatasetMagic = "SMUGDAT1";

void save_dataset(const Dataset& ds, const std::string& path) {
  nlohmann::json h;
  h["format_version"] = 1;
  h["kind"] = "dataset";
  h["split"] = ds.split;
  h["seed"] = ds.seed;
  h["noise_std"] = ds.noise_std;
  h["height"] = ds.height;
  h["width"] = ds.width;
  h["n_coils"] = ds.n_coils;
  h["fft"] = "ortho";
  h["mask"] = nlohmann::json::parse(mri::mask_to_json(ds.model.mask));
  nlohmann::json samples = nlohmann::json::array();
  for (const Sample& s : ds.samples) {
    samples.push_back({{"phantom_seed", s.phantom_seed},
                       {"noise_seed", s.noise_seed},
                       {"n_ellipses", s.n_ellipses}});
  }
  h["samples"] = samples;

  const size_t per_target = static_cast<size_t>(ds.height) * ds.width * 2;
  const size_t per_kspace = static_cast<size_t>(ds.n_coils) * ds.height * ds.width * 2;
  std::vector<double> payload;
  payload.reserve(ds.samples.size() * (per_target + per_kspace));
  for (const Sample& s : ds.samples) {
    payload.insert(payload.end(), s.target.data.begin(), s.target.data.end());
    payload.insert(payload.end(), s.kspace.data.begin(), s.kspace.data.end());
  }
  io::write_blob(path, kDatasetMagic, std::move(h), payload);
}

Dataset load_dataset(const std::string& path) {
  io::Blob b = io::read_blob(path, kDatasetMagic);
  const nlohmann::json& h = b.header;
  Dataset ds;
  ds.split = h.at("split").get<std::string>();
  ds.seed = h.at("seed").get<uint64_t>();
  ds.noise_std = h.at("noise_std").get<double>();
  ds.height = h.at("height").get<int>();
  ds.width = h.at("width").get<int>();
  ds.n_coils = h.at("n_coils").get<int>();
  mri::SamplingMask mask = mri::mask_from_json(h.at("mask").dump());
  ds.model = mri::make_model(std::move(mask),
                             mri::synth_sensitivities(ds.height, ds.width, ds.n_coils));

  const size_t per_target = static_cast<size_t>(ds.height) * ds.width * 2;
  const size_t per_kspace = static_cast<size_t>(ds.n_coils) * ds.height * ds.width * 2;
  const auto& samples = h.at("samples");
  const size_t expect = samples.size() * (per_target + per_kspace);
  if (b.payload.size() != expect)
    throw std::runtime_error("load_dataset: " + path + ": payload holds " +
                             std::to_string(b.payload.size()) + " doubles, header implies " +
                             std::to_string(expect));
  size_t off = 0;
  for (const auto& sj : samples) {
    Sample s;
    s.phantom_seed = sj.at("phantom_seed").get<uint64_t>();
    s.noise_seed = sj.at("noise_seed").get<uint64_t>();
    s.n_ellipses = sj.at("n_ellipses").get<int>();
    s.target = ad::Tensor::from({ds.height, ds.width, 2},
                                {b.payload.begin() + static_cast<int64_t>(off),
                                 b.payload.begin() + static_cast<int64_t>(off + per_target)});
    off += per_target;
    s.kspace = ad::Tensor::from({ds.n_coils, ds.height, ds.width, 2},
                                {b.payload.begin() + static_cast<int64_t>(off),
                                 b.payload.begin() + static_cast<int64_t>(off + per_kspace)});
    off += per_kspace;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

DatasetInfo read_dataset_info(const std::string& path) {
  io::Blob b = io::read_blob(path, kDatasetMagic, /*header_only=*/true);
  const nlohmann::json& h = b.header;
  DatasetInfo info;
  info.split = h.at("split").get<std::string>();
  info.seed = h.at("seed").get<uint64_t>();
  info.noise_std = h.at("noise_std").get<double>();
  info.height = h.at("height").get<int>();
  info.width = h.at("width").get<int>();
  info.n_coils = h.at("n_coils").get<int>();
  info.count = static_cast<int>(h.at("samples").size());
  info.mask_json = h.at("mask").dump();
  return info;
}

}  // namespace smug::data
