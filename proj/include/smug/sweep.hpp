#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "smug/attack.hpp"
#include "smug/metrics.hpp"
#include "smug/phantom.hpp"
#include "smug/recon.hpp"

namespace smug {

enum class SweepAxis { epsilon, sampling_rate, unroll_steps };

std::string sweep_axis_name(SweepAxis a);
SweepAxis sweep_axis_from_name(const std::string& name);

// A named checkpoint plus the reconstruction configuration it is evaluated
// with (mode, sigma, Monte Carlo count, unrolling steps, noise seed).
struct ModelSpec {
  std::string name;
  DenoiserParams params;
  recon::ReconConfig recon;
};

struct SweepRow {
  std::string model;
  std::string axis;  // epsilon | noise | sampling_rate | unroll_steps
  double value = 0.0;
  Aggregate psnr, ssim;
  std::vector<double> psnr_values, ssim_values;  // per test image, in order
};

struct SweepSettings {
  AttackConfig attack;        // epsilon is overridden per axis value on epsilon sweeps
  double noise_sigma = 0.01;  // input-noise accuracy evaluation
  uint64_t eval_seed = 99;
  int threads = 1;
};

// Mean +/- std PSNR/SSIM over the test split for every model x axis value.
//   epsilon:       PGD attack of that radius (0 = clean); rows for the
//                  noise-accuracy evaluation (axis "noise") are appended per
//                  model.
//   sampling_rate: fresh mask at that rate (same seed policy), fresh
//                  measurements from the stored targets, clean inputs.
//   unroll_steps:  reconstruction with that many steps on the original data.
std::vector<SweepRow> run_sweep(SweepAxis axis, std::span<const double> values,
                                std::span<const ModelSpec> models, const data::Dataset& test,
                                const SweepSettings& settings);

// Epsilon sweep over the five UStab reference variants.
std::vector<SweepRow> run_reference_ablation(std::span<const ModelSpec> variants,
                                             std::span<const double> eps_values,
                                             const data::Dataset& test,
                                             const SweepSettings& settings);

std::string sweep_csv(std::span<const SweepRow> rows);
std::vector<SweepRow> sweep_rows_from_csv(const std::string& text);  // aggregates only

// Comparison table in the clean/noise/robust layout with deltas against the
// baseline model (the one named "vanilla" when present, else the first).
std::string build_report_csv(std::span<const SweepRow> rows, double robust_epsilon);

}  // namespace smug
