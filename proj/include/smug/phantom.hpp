#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smug/mri.hpp"
#include "smug/tensor.hpp"

namespace smug::data {

// Piecewise-smooth complex phantom: 3..8 random ellipses with distinct
// intensities under a smooth low-order phase; magnitude normalized to [0,1].
struct Phantom {
  ad::Tensor image;  // [H,W,2]
  int n_ellipses = 0;
};

Phantom generate_phantom(int height, int width, uint64_t seed);

// forward(model, t) plus complex white Gaussian noise (per-channel std) on
// kept rows only; masked rows stay exactly zero.
ad::Tensor simulate_measurement(const mri::AcquisitionModel& model, const ad::Tensor& target,
                                double noise_std, uint64_t seed);

struct Sample {
  ad::Tensor target;  // [H,W,2], max magnitude 1
  ad::Tensor kspace;  // [C,H,W,2]
  uint64_t phantom_seed = 0;
  uint64_t noise_seed = 0;
  int n_ellipses = 0;
};

struct Dataset {
  std::string split;  // train | val | test
  uint64_t seed = 0;
  double noise_std = 0.0;
  int height = 0, width = 0, n_coils = 0;
  mri::AcquisitionModel model;
  std::vector<Sample> samples;

  int count() const { return static_cast<int>(samples.size()); }
};

// Pure function of (split, count, model, seed, noise_std). Per-sample seeds
// live in disjoint ranges per split, so splits never share a phantom.
Dataset generate_dataset(const std::string& split, int count,
                         const mri::AcquisitionModel& model, uint64_t seed, double noise_std,
                         int threads = 1);

// Blob file (JSON header + raw float64 payload); round trip is bit-exact.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

struct DatasetInfo {
  std::string split;
  uint64_t seed = 0;
  double noise_std = 0.0;
  int height = 0, width = 0, n_coils = 0, count = 0;
  std::string mask_json;
};

// Header-only read; the payload is never touched.
DatasetInfo read_dataset_info(const std::string& path);

}  // namespace smug::data
