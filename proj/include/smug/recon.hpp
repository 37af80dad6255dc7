#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "smug/denoiser.hpp"
#include "smug/mri.hpp"
#include "smug/tape.hpp"

namespace smug::recon {

enum class Mode { vanilla, rs_e2e, smugv0, smug };

std::string mode_name(Mode m);
Mode mode_from_name(const std::string& name);

struct ReconConfig {
  Mode mode = Mode::smug;
  int unroll_steps = 8;     // N
  double lambda = 1.0;      // data-consistency weight
  double sigma = 0.01;      // smoothing noise std (per real/imag channel)
  int mc_samples = 10;      // m, Monte Carlo draws per expectation
  double cg_tol = 1e-6;     // relative to ||rhs||
  int cg_max_iter = 50;
  uint64_t seed = 42;       // noise plan seed
  int eval_mc_samples = 0;  // 0: use mc_samples at evaluation time too

  void validate() const;
};

// Seeded stream of Gaussian perturbations nu ~ N(0, sigma^2 I), indexed by
// (unroll step, sample index); entries are independent per real/imaginary
// channel. A given (seed, step, index) always produces the same tensor, in
// any evaluation order.
struct NoisePlan {
  uint64_t seed = 0;
  double sigma = 0.0;
  int height = 0, width = 0;

  ad::Tensor sample(int step, int index) const;
};

struct StepSolve {
  double residual_norm = 0.0;
  bool converged = false;
  int iterations = 0;
};

// Value-only reconstruction diagnostics, exportable as JSON.
struct ReconReport {
  Mode mode = Mode::vanilla;
  int unroll_steps = 0;
  std::vector<StepSolve> cg_solves;  // every data-consistency solve, in order

  int n_cg_solves() const { return static_cast<int>(cg_solves.size()); }
  bool all_converged() const;
  std::string to_json() const;
};

// Live trace of a reconstruction built on a tape. x_steps holds the iterates
// x_0..x_N of the stepwise modes (x_0 = the image-domain input); for rs-e2e,
// whose pipeline is m independent noisy chains, it holds {input, output}.
// noisy_denoised records the per-step D(x_n + nu_j) branches where the mode
// evaluates them, so losses can reuse the reconstruction's noise draws.
struct ReconTrace {
  ReconReport report;
  std::vector<ad::Var> x_steps;
  std::vector<ad::Var> z_steps;
  std::vector<std::vector<ad::Var>> noisy_denoised;
  uint64_t plan_seed = 0;
  ad::Tape* tape = nullptr;
  std::vector<ad::NodeId> param_ids;  // identity of the denoiser leaves used
};

// g(x) = E_nu[f(x + nu)] estimated by an m-sample Monte Carlo mean with the
// plan's draws for the given step; sigma = 0 short-circuits to f(x) exactly.
ad::Tensor rs_expectation(const std::function<ad::Tensor(const ad::Tensor&)>& f,
                          const ad::Tensor& x, double sigma, int m, const NoisePlan& plan,
                          int step);

ad::Var rs_expectation_node(const std::function<ad::Var(const ad::Var&)>& f, const ad::Var& x,
                            double sigma, int m, const NoisePlan& plan, int step,
                            std::vector<ad::Var>* branches = nullptr);

// Unrolled reconstruction from the image-domain input u (normally A^H y;
// perturbed under attack or input noise). The data-consistency steps solve
// (A^H A + lambda I) x = u + lambda z, so the whole computation is
// differentiable w.r.t. u and the denoiser parameters.
//   vanilla: z_n = D(x_n);               x_{n+1} = dc(z_n, u)
//   smug:    z_n = mean_j D(x_n + nu_j); x_{n+1} = dc(z_n, u)
//   smugv0:  x_{n+1} = mean_j dc(D(x_n + nu_j), u)
//   rs-e2e:  mean_j [vanilla chain applied to u + nu_j]
// N = 0 returns u for every mode. The model must outlive the tape.
ad::Var reconstruct_on_tape(const ReconConfig& cfg, const DenoiserVars& dn,
                            const mri::AcquisitionModel& model, const ad::Var& u,
                            ReconTrace* trace = nullptr);

// Forward-only reconstruction from an image-domain input.
std::pair<ad::Tensor, ReconReport> reconstruct_image(const ReconConfig& cfg,
                                                     const DenoiserParams& params,
                                                     const mri::AcquisitionModel& model,
                                                     const ad::Tensor& u);

// Forward-only reconstruction from measurements: u = A^H y.
std::pair<ad::Tensor, ReconReport> reconstruct(const ReconConfig& cfg,
                                               const DenoiserParams& params,
                                               const mri::AcquisitionModel& model,
                                               const ad::Tensor& y);

}  // namespace smug::recon
