#include "smug/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "smug/io.hpp"
#include "smug/metrics.hpp"
#include "smug/parallel.hpp"
#include "smug/rng.hpp"

namespace smug::train {

std::string ustab_reference_name(UStabReference r) {
  switch (r) {
    case UStabReference::denoised_target: return "denoised-target";
    case UStabReference::target: return "target";
    case UStabReference::denoised_step: return "denoised-step";
    case UStabReference::frozen_denoised_target: return "frozen-denoised-target";
    case UStabReference::frozen_denoised_step: return "frozen-denoised-step";
  }
  throw std::logic_error("ustab_reference_name: bad value");
}

UStabReference ustab_reference_from_name(const std::string& name) {
  if (name == "denoised-target") return UStabReference::denoised_target;
  if (name == "target") return UStabReference::target;
  if (name == "denoised-step") return UStabReference::denoised_step;
  if (name == "frozen-denoised-target") return UStabReference::frozen_denoised_target;
  if (name == "frozen-denoised-step") return UStabReference::frozen_denoised_step;
  throw std::invalid_argument("unknown ustab reference '" + name + "'");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (lr_initial <= 0.0) throw std::invalid_argument("train: lr_initial must be > 0");
  if (decay_start_epoch < 0) throw std::invalid_argument("train: decay_start_epoch must be >= 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw std::invalid_argument("train: betas must lie in [0, 1)");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (lambda_ell < 0.0) throw std::invalid_argument("train: lambda_ell must be >= 0");
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  const int last = cfg.epochs - 1;
  const int decay_from = std::min(cfg.decay_start_epoch, last);
  if (epoch < decay_from) return cfg.lr_initial;
  if (last == decay_from) return epoch < last ? cfg.lr_initial : 0.0;
  return cfg.lr_initial * static_cast<double>(last - epoch) /
         static_cast<double>(last - decay_from);
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               double lr, double beta1, double beta2, double eps) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: parameter/gradient size mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size())
    throw std::invalid_argument("adam_step: state size mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

ad::Var pretrain_loss_node(const DenoiserVars& dn, const ad::Tensor& target, double sigma,
                           int m, const recon::NoisePlan& plan) {
  if (m < 1) throw std::invalid_argument("pretrain_loss: m must be >= 1");
  ad::Tape& tape = *dn.kernels.at(0).tape;
  ad::Var t = tape.constant(target);
  if (sigma == 0.0) return ad::sum_squares(ad::sub(denoise(dn, t), t));
  std::vector<ad::Var> terms;
  terms.reserve(static_cast<size_t>(m));
  for (int j = 0; j < m; ++j) {
    ad::Var noisy = ad::add(t, tape.constant(plan.sample(0, j)));
    terms.push_back(ad::sum_squares(ad::sub(denoise(dn, noisy), t)));
  }
  return ad::mean_pairwise(terms);
}

double pretrain_loss(const DenoiserParams& params, const ad::Tensor& target, double sigma,
                     int m, const recon::NoisePlan& plan) {
  ad::Tape tape;
  DenoiserVars dn = denoiser_constants(tape, params);
  return pretrain_loss_node(dn, target, sigma, m, plan).value().data[0];
}

namespace {

std::vector<ad::NodeId> param_ids_of(const DenoiserVars& dn) {
  std::vector<ad::NodeId> ids;
  for (const ad::Var& k : dn.kernels) ids.push_back(k.id);
  for (const ad::Var& b : dn.biases) ids.push_back(b.id);
  return ids;
}

}  // namespace

ad::Var ustab_loss_node(const DenoiserVars& dn, const recon::ReconTrace& trace,
                        const ad::Tensor& target, double sigma, int m,
                        const recon::NoisePlan& plan, UStabReference reference,
                        const DenoiserParams* frozen, bool fresh_noise) {
  if (trace.tape == nullptr) throw std::invalid_argument("ustab_loss: trace has no tape");
  if (trace.tape != dn.kernels.at(0).tape)
    throw std::invalid_argument("ustab_loss: trace and parameters live on different tapes");
  if (param_ids_of(dn) != trace.param_ids)
    throw std::invalid_argument(
        "ustab_loss: trace was produced by different denoiser parameters");
  const bool needs_frozen = reference == UStabReference::frozen_denoised_target ||
                            reference == UStabReference::frozen_denoised_step;
  if (needs_frozen && frozen == nullptr)
    throw std::invalid_argument("ustab_loss: frozen reference requires a parameter snapshot");

  ad::Tape& tape = *trace.tape;
  const int steps = trace.report.unroll_steps;
  if (static_cast<int>(trace.x_steps.size()) < steps)
    throw std::invalid_argument("ustab_loss: trace does not expose the per-step iterates");
  ad::Var t = tape.constant(target);

  // shared reference for the target-based variants
  ad::Var ref_global;
  DenoiserVars frozen_vars;
  if (reference == UStabReference::denoised_target) {
    ref_global = denoise(dn, t);
  } else if (reference == UStabReference::target) {
    ref_global = t;
  } else if (reference == UStabReference::frozen_denoised_target) {
    ref_global = tape.constant(denoise_eval(*frozen, target));
  } else if (reference == UStabReference::frozen_denoised_step) {
    frozen_vars = denoiser_constants(tape, *frozen);
  }

  const recon::NoisePlan fresh_plan{mix_seed(plan.seed, 0x66726573ULL),  // "fres"
                                    plan.sigma, plan.height, plan.width};

  std::vector<ad::Var> step_losses;
  for (int n = 0; n < steps; ++n) {
    const ad::Var& x_n = trace.x_steps[static_cast<size_t>(n)];
    ad::Var ref = ref_global;
    if (reference == UStabReference::denoised_step) ref = denoise(dn, x_n);
    if (reference == UStabReference::frozen_denoised_step) ref = denoise(frozen_vars, x_n);

    std::vector<ad::Var> branches;
    const bool can_reuse = !fresh_noise && n < static_cast<int>(trace.noisy_denoised.size()) &&
                           !trace.noisy_denoised[static_cast<size_t>(n)].empty() &&
                           ((sigma == 0.0 &&
                             trace.noisy_denoised[static_cast<size_t>(n)].size() == 1) ||
                            static_cast<int>(trace.noisy_denoised[static_cast<size_t>(n)].size()) ==
                                m);
    if (can_reuse) {
      branches = trace.noisy_denoised[static_cast<size_t>(n)];
    } else if (sigma == 0.0) {
      branches.push_back(denoise(dn, x_n));
    } else {
      const recon::NoisePlan& p = fresh_noise ? fresh_plan : plan;
      for (int j = 0; j < m; ++j) {
        ad::Var noisy = ad::add(x_n, tape.constant(p.sample(n, j)));
        branches.push_back(denoise(dn, noisy));
      }
    }

    std::vector<ad::Var> terms;
    terms.reserve(branches.size());
    for (const ad::Var& d : branches) terms.push_back(ad::sum_squares(ad::sub(d, ref)));
    step_losses.push_back(ad::mean_pairwise(terms));
  }
  if (step_losses.empty()) return tape.constant(ad::Tensor::scalar(0.0));
  return ad::sum_pairwise(step_losses);
}

FinetuneLoss finetune_loss_node(const DenoiserVars& dn, const recon::ReconConfig& cfg,
                                const mri::AcquisitionModel& model, const ad::Tensor& y,
                                const ad::Tensor& target, double lambda_ell,
                                UStabReference reference, const DenoiserParams* frozen,
                                bool fresh_noise, recon::ReconTrace* out_trace) {
  if (cfg.mode != recon::Mode::smug && cfg.mode != recon::Mode::smugv0)
    throw std::invalid_argument(
        "finetune_loss: objective is defined for the RS-applied modes (smug|smugv0), got " +
        recon::mode_name(cfg.mode));
  ad::Tape& tape = *dn.kernels.at(0).tape;
  ad::Var u = tape.constant(mri::adjoint(model, y));
  recon::ReconTrace local_trace;
  recon::ReconTrace& trace = out_trace ? *out_trace : local_trace;
  ad::Var x_final = reconstruct_on_tape(cfg, dn, model, u, &trace);
  ad::Var t = tape.constant(target);
  ad::Var recon_err = ad::sum_squares(ad::sub(x_final, t));
  const recon::NoisePlan plan{cfg.seed, cfg.sigma, model.height(), model.width()};
  ad::Var ustab = ustab_loss_node(dn, trace, target, cfg.sigma, cfg.mc_samples, plan,
                                  reference, frozen, fresh_noise);
  FinetuneLoss out{ad::add(ad::scale(recon_err, lambda_ell), ustab),
                   recon_err.value().data[0], ustab.value().data[0]};
  return out;
}

double finetune_loss(const DenoiserParams& params, const recon::ReconConfig& cfg,
                     const mri::AcquisitionModel& model, const ad::Tensor& y,
                     const ad::Tensor& target, double lambda_ell, UStabReference reference,
                     const DenoiserParams* frozen, bool fresh_noise) {
  ad::Tape tape;
  DenoiserVars dn = denoiser_leaves(tape, params);
  return finetune_loss_node(dn, cfg, model, y, target, lambda_ell, reference, frozen,
                            fresh_noise)
      .total.value()
      .data[0];
}

std::string training_log_csv(std::span<const EpochLog> log) {
  std::string out = "epoch,lr,train_loss,val_psnr,val_ssim,wall_time_s\n";
  for (const EpochLog& e : log) {
    out += std::to_string(e.epoch) + "," + io::format_double(e.lr) + "," +
           io::format_double(e.train_loss) + "," + io::format_double(e.val_psnr) + "," +
           io::format_double(e.val_ssim) + "," + io::format_double(e.wall_time_s) + "\n";
  }
  return out;
}

namespace {

struct ValScore {
  double psnr = 0.0;
  double ssim_v = 0.0;
};

ValScore eval_validation(Objective objective, const DenoiserParams& params,
                         const data::Dataset& val_set, const recon::ReconConfig& rcfg,
                         const TrainConfig& tcfg, int threads) {
  const int n = val_set.count();
  if (n == 0) return {0.0, 0.0};
  std::vector<double> psnrs(static_cast<size_t>(n)), ssims(static_cast<size_t>(n));
  parallel_for(n, threads, [&](int i) {
    const data::Sample& s = val_set.samples[static_cast<size_t>(i)];
    const double range = data_range_of(s.target);
    ad::Tensor out;
    if (objective == Objective::pretrain) {
      ad::Tensor input = s.target;
      if (rcfg.sigma > 0.0) {
        const recon::NoisePlan plan{mix_seed(tcfg.seed, 0x76616cULL, static_cast<uint64_t>(i)),
                                    rcfg.sigma, val_set.height, val_set.width};
        input.add_(plan.sample(0, 0));
      }
      out = denoise_eval(params, input);
    } else {
      out = recon::reconstruct(rcfg, params, val_set.model, s.kspace).first;
    }
    psnrs[static_cast<size_t>(i)] = psnr(out, s.target, range).db;
    ssims[static_cast<size_t>(i)] = ssim(out, s.target, range);
  });
  return {aggregate_metric(psnrs).mean, aggregate_metric(ssims).mean};
}

}  // namespace

TrainResult run_training(Objective objective, const data::Dataset& train_set,
                         const data::Dataset& val_set, DenoiserParams init,
                         const recon::ReconConfig& rcfg, const TrainConfig& tcfg,
                         const DenoiserParams* frozen, int threads,
                         const ResumeState* resume, int stop_after_epoch) {
  tcfg.validate();
  recon::ReconConfig rcfg_run = rcfg;
  if (objective == Objective::vanilla_mse) rcfg_run.mode = recon::Mode::vanilla;
  rcfg_run.validate();
  if (train_set.count() == 0) throw std::invalid_argument("run_training: empty dataset");
  if (objective == Objective::finetune && rcfg_run.mode != recon::Mode::smug &&
      rcfg_run.mode != recon::Mode::smugv0)
    throw std::invalid_argument("run_training: fine-tuning requires mode smug or smugv0");

  TrainResult res;
  res.params = std::move(init);
  res.best_params = res.params;
  res.best_val_psnr = -1e300;
  int start_epoch = 0;
  if (resume) {
    res.opt = resume->opt;
    res.best_params = resume->best_params;
    res.best_val_psnr = resume->best_val_psnr;
    start_epoch = resume->start_epoch;
  }

  std::vector<double> flat = res.params.flatten();
  const int n_train = train_set.count();
  const int stop_epoch =
      stop_after_epoch >= 0 ? std::min(stop_after_epoch, tcfg.epochs) : tcfg.epochs;

  for (int epoch = start_epoch; epoch < stop_epoch; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at_epoch(tcfg, epoch);

    std::vector<int> order(static_cast<size_t>(n_train));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(mix_seed(tcfg.seed, 0x73687566ULL, static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (int b0 = 0; b0 < n_train; b0 += tcfg.batch_size) {
      const int bn = std::min(tcfg.batch_size, n_train - b0);
      std::vector<std::vector<double>> grads(static_cast<size_t>(bn));
      std::vector<double> losses(static_cast<size_t>(bn));
      parallel_for(bn, threads, [&](int k) {
        const int idx = order[static_cast<size_t>(b0 + k)];
        const data::Sample& s = train_set.samples[static_cast<size_t>(idx)];
        const uint64_t plan_seed =
            mix_seed(tcfg.seed, static_cast<uint64_t>(epoch) + 1, static_cast<uint64_t>(idx) + 1);

        ad::Tape tape;
        DenoiserVars dn = denoiser_leaves(tape, res.params);
        ad::Var loss;
        if (objective == Objective::pretrain) {
          const recon::NoisePlan plan{plan_seed, rcfg_run.sigma, train_set.height, train_set.width};
          loss = pretrain_loss_node(dn, s.target, rcfg_run.sigma, rcfg_run.mc_samples, plan);
        } else if (objective == Objective::vanilla_mse) {
          recon::ReconConfig cfg = rcfg_run;
          cfg.mode = recon::Mode::vanilla;
          cfg.seed = plan_seed;
          ad::Var u = tape.constant(mri::adjoint(train_set.model, s.kspace));
          ad::Var x_final = reconstruct_on_tape(cfg, dn, train_set.model, u, nullptr);
          loss = ad::sum_squares(ad::sub(x_final, tape.constant(s.target)));
        } else {
          recon::ReconConfig cfg = rcfg_run;
          cfg.seed = plan_seed;
          loss = finetune_loss_node(dn, cfg, train_set.model, s.kspace, s.target,
                                    tcfg.lambda_ell, tcfg.ustab_reference, frozen,
                                    tcfg.ustab_fresh_noise)
                     .total;
        }
        tape.backward(loss);
        losses[static_cast<size_t>(k)] = loss.value().data[0];
        std::vector<double>& g = grads[static_cast<size_t>(k)];
        g.reserve(flat.size());
        for (int l = 0; l < res.params.config.depth; ++l) {
          const ad::Tensor& gk = tape.grad(dn.kernels[static_cast<size_t>(l)]);
          g.insert(g.end(), gk.data.begin(), gk.data.end());
          const ad::Tensor& gb = tape.grad(dn.biases[static_cast<size_t>(l)]);
          g.insert(g.end(), gb.data.begin(), gb.data.end());
        }
      });
      // fixed-order batch reduction
      std::vector<double> mean_grad(flat.size(), 0.0);
      for (int k = 0; k < bn; ++k)
        for (size_t i = 0; i < flat.size(); ++i) mean_grad[i] += grads[static_cast<size_t>(k)][i];
      const double inv = 1.0 / static_cast<double>(bn);
      for (double& v : mean_grad) v *= inv;
      for (int k = 0; k < bn; ++k) loss_sum += losses[static_cast<size_t>(k)];

      adam_step(res.opt, flat, mean_grad, lr, tcfg.beta1, tcfg.beta2);
      res.params = DenoiserParams::unflatten(res.params.config, flat);
    }

    const ValScore val = eval_validation(objective, res.params, val_set, rcfg_run, tcfg, threads);
    const auto t1 = std::chrono::steady_clock::now();
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.train_loss = loss_sum / static_cast<double>(n_train);
    log.val_psnr = val.psnr;
    log.val_ssim = val.ssim_v;
    log.wall_time_s =
        tcfg.log_wall_time ? std::chrono::duration<double>(t1 - t0).count() : 0.0;
    res.log.push_back(log);

    if (val.psnr > res.best_val_psnr) {
      res.best_val_psnr = val.psnr;
      res.best_params = res.params;
    }
  }
  return res;
}

TrainResult run_pretrain(const data::Dataset& train_set, const data::Dataset& val_set,
                         DenoiserParams init, const recon::ReconConfig& rcfg,
                         const TrainConfig& tcfg, int threads) {
  return run_training(Objective::pretrain, train_set, val_set, std::move(init), rcfg, tcfg,
                      nullptr, threads);
}

TrainResult run_finetune(const data::Dataset& train_set, const data::Dataset& val_set,
                         DenoiserParams pretrained, const recon::ReconConfig& rcfg,
                         const TrainConfig& tcfg, const DenoiserParams* frozen, int threads) {
  return run_training(Objective::finetune, train_set, val_set, std::move(pretrained), rcfg,
                      tcfg, frozen, threads);
}

TrainResult run_train_vanilla(const data::Dataset& train_set, const data::Dataset& val_set,
                              DenoiserParams init, const recon::ReconConfig& rcfg,
                              const TrainConfig& tcfg, int threads) {
  recon::ReconConfig cfg = rcfg;
  cfg.mode = recon::Mode::vanilla;
  return run_training(Objective::vanilla_mse, train_set, val_set, std::move(init), cfg, tcfg,
                      nullptr, threads);
}

static const char* kCheckpointMagic = "SMUGCKP1";

namespace {

double sanitize(double v) {
  if (std::isnan(v)) return 0.0;
  if (std::isinf(v)) return v > 0 ? 1e300 : -1e300;
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const std::vector<double> p = ck.params.flatten();
  const std::vector<double> bp = ck.best_params.flatten();
  nlohmann::json h;
  h["format_version"] = 1;
  h["kind"] = "checkpoint";
  h["denoiser"] = {{"depth", ck.params.config.depth},
                   {"channels", ck.params.config.channels},
                   {"kernel", ck.params.config.kernel},
                   {"residual", ck.params.config.residual}};
  h["param_count"] = p.size();
  h["trained_mode"] = ck.trained_mode;
  h["epochs_done"] = ck.epochs_done;
  h["best_val_psnr"] = sanitize(ck.best_val_psnr);
  h["has_optimizer"] = !ck.opt.m.empty();
  h["adam_step"] = ck.opt.step;
  h["meta"] = ck.meta_json.empty() ? nlohmann::json()
                                   : nlohmann::json::parse(ck.meta_json);
  std::vector<double> payload;
  payload.reserve(p.size() * 2 + ck.opt.m.size() + ck.opt.v.size());
  payload.insert(payload.end(), p.begin(), p.end());
  payload.insert(payload.end(), bp.begin(), bp.end());
  payload.insert(payload.end(), ck.opt.m.begin(), ck.opt.m.end());
  payload.insert(payload.end(), ck.opt.v.begin(), ck.opt.v.end());
  io::write_blob(path, kCheckpointMagic, std::move(h), payload);
}

Checkpoint load_checkpoint(const std::string& path) {
  io::Blob b = io::read_blob(path, kCheckpointMagic);
  const nlohmann::json& h = b.header;
  DenoiserConfig cfg;
  cfg.depth = h.at("denoiser").at("depth").get<int>();
  cfg.channels = h.at("denoiser").at("channels").get<int>();
  cfg.kernel = h.at("denoiser").at("kernel").get<int>();
  cfg.residual = h.at("denoiser").at("residual").get<bool>();
  const size_t n = h.at("param_count").get<size_t>();
  if (static_cast<int64_t>(n) != denoiser_param_count(cfg))
    throw std::runtime_error("load_checkpoint: " + path + ": param_count " + std::to_string(n) +
                             " does not match the declared architecture");
  const bool has_opt = h.at("has_optimizer").get<bool>();
  const size_t expect = has_opt ? 4 * n : 2 * n;
  if (b.payload.size() != expect)
    throw std::runtime_error("load_checkpoint: " + path + ": payload holds " +
                             std::to_string(b.payload.size()) + " doubles, expected " +
                             std::to_string(expect));
  Checkpoint ck;
  ck.params = DenoiserParams::unflatten(cfg, std::span(b.payload).subspan(0, n));
  ck.best_params = DenoiserParams::unflatten(cfg, std::span(b.payload).subspan(n, n));
  if (has_opt) {
    ck.opt.m.assign(b.payload.begin() + static_cast<int64_t>(2 * n),
                    b.payload.begin() + static_cast<int64_t>(3 * n));
    ck.opt.v.assign(b.payload.begin() + static_cast<int64_t>(3 * n),
                    b.payload.begin() + static_cast<int64_t>(4 * n));
  }
  ck.opt.step = h.at("adam_step").get<int64_t>();
  ck.epochs_done = h.at("epochs_done").get<int>();
  ck.best_val_psnr = h.at("best_val_psnr").get<double>();
  ck.trained_mode = h.at("trained_mode").get<std::string>();
  ck.meta_json = h.at("meta").is_null() ? "" : h.at("meta").dump();
  return ck;
}

}  // namespace smug::train
