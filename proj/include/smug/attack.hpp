#pragma once

#include <cstdint>
#include <functional>

#include "smug/mri.hpp"
#include "smug/recon.hpp"

namespace smug {

struct AttackConfig {
  double epsilon = 0.004;   // l_inf radius, per real/imaginary channel
  int steps = 10;
  double step_size = 0.0;   // <= 0: 2.5 * epsilon / steps
  int restarts = 1;         // first restart starts at delta = 0
  uint64_t seed = 5;
  bool attack_base_model = false;  // compute gradients through the sigma=0 pipeline

  void validate() const;
  double resolved_step_size() const;
};

// Builds the reconstruction output from a leaf image-domain input on the
// given tape; lets the attack differentiate through any of the four modes
// with a fixed noise plan (frozen draws across PGD iterations).
using ReconBuilder = std::function<ad::Var(ad::Tape&, const ad::Var& u)>;

ReconBuilder make_recon_builder(const recon::ReconConfig& cfg, const DenoiserParams& params,
                                const mri::AcquisitionModel& model);

struct AttackResult {
  ad::Tensor delta;        // ||delta||_inf <= epsilon exactly
  double objective = 0.0;  // ||recon(u0 + delta) - t||^2 at the returned delta
  double clean_objective = 0.0;
};

// Projected gradient ascent on ||recon(A^H y + delta) - t||^2 within the
// l_inf ball; keeps the best iterate seen (including delta = 0), best of
// restarts by final objective.
AttackResult pgd_attack(const ReconBuilder& recon_fn, const mri::AcquisitionModel& model,
                        const ad::Tensor& y, const ad::Tensor& target,
                        const AttackConfig& cfg);

// Variant taking the clean image-domain input directly.
AttackResult pgd_attack_image(const ReconBuilder& recon_fn, const ad::Tensor& u0,
                              const ad::Tensor& target, const AttackConfig& cfg);

}  // namespace smug
