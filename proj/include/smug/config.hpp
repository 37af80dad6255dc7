#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smug/attack.hpp"
#include "smug/denoiser.hpp"
#include "smug/recon.hpp"
#include "smug/train.hpp"

namespace smug {

// Structured run configuration: one JSON file with sections mapping 1:1 to
// the module configs. Every field has a default; unknown keys are rejected;
// the fully resolved config is echoed into every output directory.
struct RunConfig {
  struct DatasetSection {
    int height = 32, width = 32, n_coils = 4;
    int train = 40, val = 8, test = 8;
    uint64_t seed = 1234;
    double noise_std = 0.0;
  } dataset;

  struct AcquisitionSection {
    int acceleration = 4;
    int acs_rows = 4;
    uint64_t mask_seed = 1234;
  } acquisition;

  DenoiserConfig denoiser;
  uint64_t denoiser_init_seed = 7;

  recon::ReconConfig recon;
  train::TrainConfig train;
  AttackConfig attack;

  struct ModelRef {
    std::string name;
    std::string checkpoint;
    std::string mode;       // empty: the checkpoint's trained mode
    double sigma = -1.0;    // < 0: recon.sigma
    int mc_samples = -1;    // < 0: recon.mc_samples
  };

  struct SweepSection {
    std::string axis = "epsilon";
    std::vector<double> values{0.0, 0.001, 0.002, 0.004, 0.008};
    double noise_sigma = -1.0;  // < 0: recon.sigma
    uint64_t eval_seed = 99;
    std::vector<ModelRef> models;
  } sweep;

  struct AblationSection {
    // variant name -> checkpoint path, one per UStab reference variant
    std::vector<std::pair<std::string, std::string>> variants;
    std::vector<double> values{0.0, 0.004, 0.008};
  } ablation;

  void validate() const;
};

// Defaults when path is empty; strict parse otherwise.
RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& json_text);

// Fully resolved effective configuration, byte-stable across runs.
std::string effective_config_json(const RunConfig& cfg);

// --seed N: rederives every section seed from N (distinct streams per
// field), so one flag reseeds the whole pipeline reproducibly.
void apply_seed_override(RunConfig& cfg, uint64_t seed);

}  // namespace smug
