#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smug/denoiser.hpp"
#include "smug/phantom.hpp"
#include "smug/recon.hpp"

namespace smug::train {

// Reference image used by the unrolled stability loss. Frozen variants apply
// a fixed parameter snapshot that receives no gradient.
enum class UStabReference {
  denoised_target,         // D_theta(t), default
  target,                  // t
  denoised_step,           // D_theta(x_n)
  frozen_denoised_target,  // D_frozen(t)
  frozen_denoised_step,    // D_frozen(x_n)
};

std::string ustab_reference_name(UStabReference r);
UStabReference ustab_reference_from_name(const std::string& name);

struct TrainConfig {
  int epochs = 12;
  double lr_initial = 1e-4;
  int decay_start_epoch = 4;  // constant lr before, linear to 0 at the final epoch
  double beta1 = 0.5;
  double beta2 = 0.999;
  int batch_size = 2;
  double lambda_ell = 1.0;  // reconstruction-error weight in the fine-tune objective
  uint64_t seed = 77;
  UStabReference ustab_reference = UStabReference::denoised_target;
  bool ustab_fresh_noise = false;  // draw fresh nu instead of reusing the recon's
  bool log_wall_time = true;       // false writes 0 for byte-stable logs

  void validate() const;
};

double lr_at_epoch(const TrainConfig& cfg, int epoch);

struct AdamState {
  std::vector<double> m, v;
  int64_t step = 0;
};

// Standard Adam with bias correction; eps = 1e-8.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               double lr, double beta1, double beta2, double eps = 1e-8);

// --- loss nodes (all built on the caller's tape) ---

// Eq-style pre-training objective: mean_j ||D(t + nu_j) - t||^2.
ad::Var pretrain_loss_node(const DenoiserVars& dn, const ad::Tensor& target, double sigma,
                           int m, const recon::NoisePlan& plan);
double pretrain_loss(const DenoiserParams& params, const ad::Tensor& target, double sigma,
                     int m, const recon::NoisePlan& plan);

// Unrolled stability loss: sum_n mean_j ||D(x_n + nu_j) - ref||^2 with x_n
// taken from the trace (gradients flow through it). By default the noisy
// denoiser outputs recorded in the trace are reused, so the expectation sees
// the same draws as the forward reconstruction.
ad::Var ustab_loss_node(const DenoiserVars& dn, const recon::ReconTrace& trace,
                        const ad::Tensor& target, double sigma, int m,
                        const recon::NoisePlan& plan, UStabReference reference,
                        const DenoiserParams* frozen, bool fresh_noise);

struct FinetuneLoss {
  ad::Var total;
  double recon_err = 0.0;
  double ustab = 0.0;
};

// lambda_ell ||x_N - t||^2 + UStab, with x_N the RS-applied reconstruction
// (mode smug or smugv0) from input A^H y.
FinetuneLoss finetune_loss_node(const DenoiserVars& dn, const recon::ReconConfig& cfg,
                                const mri::AcquisitionModel& model, const ad::Tensor& y,
                                const ad::Tensor& target, double lambda_ell,
                                UStabReference reference, const DenoiserParams* frozen,
                                bool fresh_noise, recon::ReconTrace* out_trace = nullptr);
double finetune_loss(const DenoiserParams& params, const recon::ReconConfig& cfg,
                     const mri::AcquisitionModel& model, const ad::Tensor& y,
                     const ad::Tensor& target, double lambda_ell, UStabReference reference,
                     const DenoiserParams* frozen, bool fresh_noise);

// --- training loops ---

enum class Objective {
  pretrain,     // denoiser-only MSE on noisy targets
  vanilla_mse,  // plain reconstruction MSE through the vanilla unrolled model
  finetune,     // lambda_ell * MSE + UStab through the RS-applied model
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_psnr = 0.0;
  double val_ssim = 0.0;
  double wall_time_s = 0.0;
};

std::string training_log_csv(std::span<const EpochLog> log);

struct ResumeState {
  AdamState opt;
  DenoiserParams best_params;
  double best_val_psnr = 0.0;
  int start_epoch = 0;
};

struct TrainResult {
  DenoiserParams params;       // after the last epoch
  DenoiserParams best_params;  // best validation PSNR
  double best_val_psnr = 0.0;
  AdamState opt;
  std::vector<EpochLog> log;
};

// stop_after_epoch < 0 runs the full schedule; otherwise the loop stops
// after that epoch index, keeping the learning-rate schedule of the full run
// (for checkpoint-and-resume).
TrainResult run_training(Objective objective, const data::Dataset& train_set,
                         const data::Dataset& val_set, DenoiserParams init,
                         const recon::ReconConfig& rcfg, const TrainConfig& tcfg,
                         const DenoiserParams* frozen = nullptr, int threads = 1,
                         const ResumeState* resume = nullptr, int stop_after_epoch = -1);

TrainResult run_pretrain(const data::Dataset& train_set, const data::Dataset& val_set,
                         DenoiserParams init, const recon::ReconConfig& rcfg,
                         const TrainConfig& tcfg, int threads = 1);
TrainResult run_finetune(const data::Dataset& train_set, const data::Dataset& val_set,
                         DenoiserParams pretrained, const recon::ReconConfig& rcfg,
                         const TrainConfig& tcfg, const DenoiserParams* frozen = nullptr,
                         int threads = 1);
TrainResult run_train_vanilla(const data::Dataset& train_set, const data::Dataset& val_set,
                              DenoiserParams init, const recon::ReconConfig& rcfg,
                              const TrainConfig& tcfg, int threads = 1);

// --- checkpoints: JSON descriptor + float64 payload, bit-exact round trip,
// optimizer state included for exact resume ---

struct Checkpoint {
  DenoiserParams params;
  DenoiserParams best_params;
  AdamState opt;
  int epochs_done = 0;
  double best_val_psnr = 0.0;
  std::string trained_mode;  // init | pretrain | vanilla | smug | smugv0
  std::string meta_json;     // effective config echo, free-form
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace smug::train
