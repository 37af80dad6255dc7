#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "smug/tape.hpp"
#include "smug/tensor.hpp"

namespace smug {

// Small residual CNN over the 2-channel real representation of a complex
// image. Weights are shared across all unrolling steps.
struct DenoiserConfig {
  int depth = 3;     // L convolution layers, last one linear
  int channels = 16; // hidden width C
  int kernel = 3;    // odd
  bool residual = true;

  void validate() const;
  bool operator==(const DenoiserConfig&) const = default;
};

struct DenoiserParams {
  DenoiserConfig config;
  std::vector<ad::Tensor> kernels;  // per layer [C_out,C_in,k,k]
  std::vector<ad::Tensor> biases;   // per layer [C_out]

  int64_t param_count() const;
  std::vector<double> flatten() const;
  static DenoiserParams unflatten(const DenoiserConfig& cfg, std::span<const double> flat);
};

// Analytic parameter count for (L, C, k).
int64_t denoiser_param_count(const DenoiserConfig& cfg);

// Kaiming-style scaled uniform kernels (bound sqrt(6/(C_in k^2))), zero
// biases; deterministic in the seed.
DenoiserParams init_denoiser(const DenoiserConfig& cfg, uint64_t seed);

// Complex [H,W,2] <-> channel-first [2,H,W] conversion nodes; exact
// permutations, exact round trip.
ad::Var image_to_channels(const ad::Var& x);
ad::Var channels_to_image(const ad::Var& x);

// Parameters materialized on a tape, either trainable or frozen.
struct DenoiserVars {
  DenoiserConfig config;
  std::vector<ad::Var> kernels;
  std::vector<ad::Var> biases;
};

DenoiserVars denoiser_leaves(ad::Tape& tape, const DenoiserParams& p);
DenoiserVars denoiser_constants(ad::Tape& tape, const DenoiserParams& p);

// D_theta(x): conv+ReLU stack (last layer linear) on the channel
// representation, plus the residual input path when enabled.
ad::Var denoise(const DenoiserVars& d, const ad::Var& x);

// Convenience forward pass on a private tape.
ad::Tensor denoise_eval(const DenoiserParams& p, const ad::Tensor& x);

}  // namespace smug
