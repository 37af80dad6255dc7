#include "smug/recon.hpp"

#include <stdexcept>

#include "json.hpp"
#include "smug/rng.hpp"

namespace smug::recon {

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::vanilla: return "vanilla";
    case Mode::rs_e2e: return "rs-e2e";
    case Mode::smugv0: return "smugv0";
    case Mode::smug: return "smug";
  }
  throw std::logic_error("mode_name: bad mode");
}

Mode mode_from_name(const std::string& name) {
  if (name == "vanilla") return Mode::vanilla;
  if (name == "rs-e2e") return Mode::rs_e2e;
  if (name == "smugv0") return Mode::smugv0;
  if (name == "smug") return Mode::smug;
  throw std::invalid_argument("unknown reconstruction mode '" + name +
                              "' (want vanilla|rs-e2e|smugv0|smug)");
}

void ReconConfig::validate() const {
  if (unroll_steps < 0) throw std::invalid_argument("recon: unroll_steps must be >= 0");
  if (lambda <= 0.0) throw std::invalid_argument("recon: lambda must be > 0");
  if (sigma < 0.0) throw std::invalid_argument("recon: sigma must be >= 0");
  if (mc_samples < 1) throw std::invalid_argument("recon: mc_samples must be >= 1");
  if (eval_mc_samples < 0) throw std::invalid_argument("recon: eval_mc_samples must be >= 0");
  if (cg_tol <= 0.0) throw std::invalid_argument("recon: cg_tol must be > 0");
  if (cg_max_iter < 1) throw std::invalid_argument("recon: cg_max_iter must be >= 1");
}

ad::Tensor NoisePlan::sample(int step, int index) const {
  Rng rng(mix_seed(seed, static_cast<uint64_t>(step) + 1, static_cast<uint64_t>(index) + 1));
  ad::Tensor t({height, width, 2});
  for (double& v : t.data) v = sigma * rng.normal();
  return t;
}

bool ReconReport::all_converged() const {
  for (const StepSolve& s : cg_solves)
    if (!s.converged) return false;
  return true;
}

std::string ReconReport::to_json() const {
  nlohmann::json j;
  j["mode"] = mode_name(mode);
  j["unroll_steps"] = unroll_steps;
  j["n_cg_solves"] = n_cg_solves();
  j["all_converged"] = all_converged();
  nlohmann::json solves = nlohmann::json::array();
  for (const StepSolve& s : cg_solves)
    solves.push_back({{"residual_norm", s.residual_norm},
                      {"converged", s.converged},
                      {"iterations", s.iterations}});
  j["cg_solves"] = solves;
  return j.dump(2);
}

namespace {

std::vector<ad::Tensor> plan_draws(const NoisePlan& plan, int step, int m) {
  std::vector<ad::Tensor> out;
  out.reserve(static_cast<size_t>(m));
  for (int j = 0; j < m; ++j) out.push_back(plan.sample(step, j));
  return out;
}

// pairwise sum on plain tensors, same reduction tree as ad::sum_pairwise
ad::Tensor sum_pairwise_plain(std::vector<ad::Tensor> xs) {
  while (xs.size() > 1) {
    std::vector<ad::Tensor> next;
    next.reserve((xs.size() + 1) / 2);
    for (size_t i = 0; i + 1 < xs.size(); i += 2) {
      xs[i].add_(xs[i + 1]);
      next.push_back(std::move(xs[i]));
    }
    if (xs.size() % 2 == 1) next.push_back(std::move(xs.back()));
    xs = std::move(next);
  }
  return xs[0];
}

}  // namespace

ad::Tensor rs_expectation(const std::function<ad::Tensor(const ad::Tensor&)>& f,
                          const ad::Tensor& x, double sigma, int m, const NoisePlan& plan,
                          int step) {
  if (m < 1) throw std::invalid_argument("rs_expectation: m must be >= 1");
  if (sigma == 0.0) return f(x);
  std::vector<ad::Tensor> vals;
  vals.reserve(static_cast<size_t>(m));
  for (int j = 0; j < m; ++j) {
    ad::Tensor noisy = x;
    noisy.add_(plan.sample(step, j));
    vals.push_back(f(noisy));
  }
  ad::Tensor out = sum_pairwise_plain(std::move(vals));
  out.scale_(1.0 / static_cast<double>(m));
  return out;
}

ad::Var rs_expectation_node(const std::function<ad::Var(const ad::Var&)>& f, const ad::Var& x,
                            double sigma, int m, const NoisePlan& plan, int step,
                            std::vector<ad::Var>* branches) {
  if (m < 1) throw std::invalid_argument("rs_expectation: m must be >= 1");
  if (sigma == 0.0) {
    ad::Var out = f(x);
    if (branches) branches->push_back(out);
    return out;
  }
  std::vector<ad::Var> outs;
  outs.reserve(static_cast<size_t>(m));
  for (int j = 0; j < m; ++j) {
    ad::Var noisy = ad::add(x, x.tape->constant(plan.sample(step, j)));
    outs.push_back(f(noisy));
  }
  if (branches) *branches = outs;
  return ad::mean_pairwise(outs);
}

namespace {

struct Builder {
  const ReconConfig& cfg;
  const DenoiserVars& dn;
  const mri::AcquisitionModel& model;
  ReconTrace* trace;

  void record_solve(const mri::DcNodeInfo& info) {
    if (trace)
      trace->report.cg_solves.push_back({info.residual_norm, info.converged, info.iterations});
  }

  ad::Var dc(const ad::Var& z, const ad::Var& u) {
    mri::DcNodeInfo info;
    ad::Var x = mri::dc_consistency(z, u, model, cfg.lambda, cfg.cg_tol, cfg.cg_max_iter, &info);
    record_solve(info);
    return x;
  }

  // one vanilla chain x_0 = u0; z = D(x); x = dc(z, u0)
  ad::Var vanilla_chain(const ad::Var& u0, bool record_steps) {
    ad::Var x = u0;
    for (int n = 0; n < cfg.unroll_steps; ++n) {
      ad::Var z = denoise(dn, x);
      x = dc(z, u0);
      if (record_steps && trace) {
        trace->z_steps.push_back(z);
        trace->x_steps.push_back(x);
      }
    }
    return x;
  }

  ad::Var build(const ad::Var& u, const NoisePlan& plan) {
    const int m = cfg.mc_samples;
    if (trace) trace->x_steps.push_back(u);
    if (cfg.unroll_steps == 0) return u;  // no unrolled model to smooth

    switch (cfg.mode) {
      case Mode::vanilla:
        return vanilla_chain(u, true);

      case Mode::rs_e2e: {
        if (cfg.sigma == 0.0) {
          ad::Var out = vanilla_chain(u, true);
          return out;
        }
        std::vector<ad::Var> outs;
        outs.reserve(static_cast<size_t>(m));
        for (int j = 0; j < m; ++j) {
          ad::Var uj = ad::add(u, u.tape->constant(plan.sample(0, j)));
          outs.push_back(vanilla_chain(uj, false));
        }
        ad::Var out = ad::mean_pairwise(outs);
        if (trace) trace->x_steps.push_back(out);
        return out;
      }

      case Mode::smug: {
        ad::Var x = u;
        for (int n = 0; n < cfg.unroll_steps; ++n) {
          std::vector<ad::Var> branches;
          ad::Var z = rs_expectation_node([&](const ad::Var& v) { return denoise(dn, v); }, x,
                                          cfg.sigma, m, plan, n, &branches);
          x = dc(z, u);
          if (trace) {
            trace->noisy_denoised.push_back(std::move(branches));
            trace->z_steps.push_back(z);
            trace->x_steps.push_back(x);
          }
        }
        return x;
      }

      case Mode::smugv0: {
        ad::Var x = u;
        for (int n = 0; n < cfg.unroll_steps; ++n) {
          if (cfg.sigma == 0.0) {
            ad::Var z = denoise(dn, x);
            x = dc(z, u);
            if (trace) {
              trace->noisy_denoised.push_back({z});
              trace->z_steps.push_back(z);
              trace->x_steps.push_back(x);
            }
            continue;
          }
          std::vector<ad::Var> branches;
          std::vector<ad::Var> outs;
          outs.reserve(static_cast<size_t>(m));
          for (int j = 0; j < m; ++j) {
            ad::Var noisy = ad::add(x, x.tape->constant(plan.sample(n, j)));
            ad::Var d = denoise(dn, noisy);
            branches.push_back(d);
            outs.push_back(dc(d, u));
          }
          x = ad::mean_pairwise(outs);
          if (trace) {
            trace->noisy_denoised.push_back(std::move(branches));
            trace->x_steps.push_back(x);
          }
        }
        return x;
      }
    }
    throw std::logic_error("reconstruct: bad mode");
  }
};

}  // namespace

ad::Var reconstruct_on_tape(const ReconConfig& cfg, const DenoiserVars& dn,
                            const mri::AcquisitionModel& model, const ad::Var& u,
                            ReconTrace* trace) {
  cfg.validate();
  NoisePlan plan{cfg.seed, cfg.sigma, model.height(), model.width()};
  if (trace) {
    trace->report.mode = cfg.mode;
    trace->report.unroll_steps = cfg.unroll_steps;
    trace->plan_seed = cfg.seed;
    trace->tape = u.tape;
    for (const ad::Var& k : dn.kernels) trace->param_ids.push_back(k.id);
    for (const ad::Var& b : dn.biases) trace->param_ids.push_back(b.id);
  }
  Builder b{cfg, dn, model, trace};
  return b.build(u, plan);
}

std::pair<ad::Tensor, ReconReport> reconstruct_image(const ReconConfig& cfg,
                                                     const DenoiserParams& params,
                                                     const mri::AcquisitionModel& model,
                                                     const ad::Tensor& u) {
  ad::Tape tape;
  DenoiserVars dn = denoiser_constants(tape, params);
  ReconTrace trace;
  ad::Var out = reconstruct_on_tape(cfg, dn, model, tape.constant(u), &trace);
  return {out.value(), std::move(trace.report)};
}

std::pair<ad::Tensor, ReconReport> reconstruct(const ReconConfig& cfg,
                                               const DenoiserParams& params,
                                               const mri::AcquisitionModel& model,
                                               const ad::Tensor& y) {
  return reconstruct_image(cfg, params, model, mri::adjoint(model, y));
}

}  // namespace smug::recon
