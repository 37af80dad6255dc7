#include "smug/attack.hpp"

#include <cmath>
#include <stdexcept>

#include "smug/rng.hpp"

namespace smug {

void AttackConfig::validate() const {
  if (epsilon < 0.0) throw std::invalid_argument("attack: epsilon must be >= 0");
  if (steps < 0) throw std::invalid_argument("attack: steps must be >= 0");
  if (restarts < 1) throw std::invalid_argument("attack: restarts must be >= 1");
}

double AttackConfig::resolved_step_size() const {
  if (step_size > 0.0) return step_size;
  return steps > 0 ? 2.5 * epsilon / static_cast<double>(steps) : 0.0;
}

ReconBuilder make_recon_builder(const recon::ReconConfig& cfg, const DenoiserParams& params,
                                const mri::AcquisitionModel& model) {
  return [cfg, &params, &model](ad::Tape& tape, const ad::Var& u) {
    DenoiserVars dn = denoiser_constants(tape, params);
    return recon::reconstruct_on_tape(cfg, dn, model, u, nullptr);
  };
}

namespace {

double objective_and_grad(const ReconBuilder& recon_fn, const ad::Tensor& u0,
                          const ad::Tensor& delta, const ad::Tensor& target,
                          ad::Tensor* grad_out) {
  ad::Tape tape;
  ad::Tensor input = u0;
  input.add_(delta);
  ad::Var u = grad_out ? tape.leaf(input) : tape.constant(input);
  ad::Var x = recon_fn(tape, u);
  ad::Var obj = ad::sum_squares(ad::sub(x, tape.constant(target)));
  const double value = obj.value().data[0];
  if (grad_out) {
    tape.backward(obj);
    *grad_out = tape.grad(u);
  }
  return value;
}

}  // namespace

AttackResult pgd_attack_image(const ReconBuilder& recon_fn, const ad::Tensor& u0,
                              const ad::Tensor& target, const AttackConfig& cfg) {
  cfg.validate();
  AttackResult res;
  res.delta = ad::Tensor::zeros(u0.shape);
  res.clean_objective = objective_and_grad(recon_fn, u0, res.delta, target, nullptr);
  res.objective = res.clean_objective;
  if (cfg.steps == 0 || cfg.epsilon == 0.0) return res;

  const double alpha = cfg.resolved_step_size();
  for (int restart = 0; restart < cfg.restarts; ++restart) {
    ad::Tensor delta = ad::Tensor::zeros(u0.shape);
    if (restart > 0) {
      Rng rng(mix_seed(cfg.seed, static_cast<uint64_t>(restart)));
      for (double& v : delta.data) v = rng.uniform(-cfg.epsilon, cfg.epsilon);
    }
    for (int step = 0; step < cfg.steps; ++step) {
      ad::Tensor grad;
      const double obj = objective_and_grad(recon_fn, u0, delta, target, &grad);
      if (obj > res.objective) {
        res.objective = obj;
        res.delta = delta;
      }
      for (size_t i = 0; i < delta.data.size(); ++i) {
        const double g = grad.data[i];
        const double sign = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
        delta.data[i] =
            std::clamp(delta.data[i] + alpha * sign, -cfg.epsilon, cfg.epsilon);
      }
    }
    const double final_obj = objective_and_grad(recon_fn, u0, delta, target, nullptr);
    if (final_obj > res.objective) {
      res.objective = final_obj;
      res.delta = std::move(delta);
    }
  }
  return res;
}

AttackResult pgd_attack(const ReconBuilder& recon_fn, const mri::AcquisitionModel& model,
                        const ad::Tensor& y, const ad::Tensor& target,
                        const AttackConfig& cfg) {
  return pgd_attack_image(recon_fn, mri::adjoint(model, y), target, cfg);
}

}  // namespace smug
