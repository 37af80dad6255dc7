#include <cmath>

#include "doctest.h"
#include "smug/phantom.hpp"
#include "smug/recon.hpp"
#include "smug/rng.hpp"
#include "test_util.hpp"

using namespace smug;
using namespace smug::ad;
using namespace smug::recon;
using testutil::random_tensor;

namespace {

mri::AcquisitionModel test_model(int h = 8, int w = 8, int coils = 2, int accel = 2) {
  return mri::make_model(mri::build_cartesian_mask(h, w, accel, 2, 5),
                         mri::synth_sensitivities(h, w, coils));
}

DenoiserParams small_denoiser(uint64_t seed = 3) {
  DenoiserConfig cfg;
  cfg.depth = 2;
  cfg.channels = 4;
  return init_denoiser(cfg, seed);
}

DenoiserParams identity_denoiser() {
  DenoiserConfig cfg;  // residual on
  cfg.depth = 2;
  cfg.channels = 4;
  return DenoiserParams::unflatten(
      cfg, std::vector<double>(static_cast<size_t>(denoiser_param_count(cfg)), 0.0));
}

ReconConfig base_config(Mode mode, int steps = 3, double sigma = 0.02, int m = 3) {
  ReconConfig cfg;
  cfg.mode = mode;
  cfg.unroll_steps = steps;
  cfg.sigma = sigma;
  cfg.mc_samples = m;
  cfg.seed = 77;
  return cfg;
}

}  // namespace

TEST_CASE("NoisePlan: deterministic per (seed, step, index) and N(0, sigma^2)") {
  NoisePlan plan{9, 0.05, 50, 50};
  CHECK(plan.sample(2, 5).data == plan.sample(2, 5).data);
  CHECK(plan.sample(2, 5).data != plan.sample(2, 6).data);
  CHECK(plan.sample(2, 5).data != plan.sample(3, 5).data);

  double sum = 0.0, sq = 0.0;
  int n = 0;
  for (int j = 0; j < 4; ++j) {
    Tensor t = plan.sample(0, j);
    for (double v : t.data) {
      sum += v;
      sq += v * v;
      ++n;
    }
  }
  const double mean = sum / n;
  const double stdev = std::sqrt(sq / n - mean * mean);
  CHECK(std::abs(mean) < 3.0 * 0.05 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(stdev - 0.05) < 0.02 * 0.05);
}

TEST_CASE("rs_expectation: sigma = 0 gives f(x) exactly") {
  NoisePlan plan{4, 0.0, 8, 8};
  Rng rng(71);
  Tensor x = random_tensor({8, 8, 2}, rng);
  auto f = [](const Tensor& v) { return scale(v, 2.0); };
  Tensor g = rs_expectation(f, x, 0.0, 5, plan, 0);
  CHECK(g.data == f(x).data);
}

TEST_CASE("rs_expectation: linear map Monte Carlo mean concentrates") {
  const double sigma = 0.1;
  const int m = 10000;
  NoisePlan plan{12, sigma, 8, 8};
  Rng rng(72);
  Tensor x = random_tensor({8, 8, 2}, rng);
  const double op_norm = 0.5;
  auto f = [&](const Tensor& v) { return scale(v, op_norm); };
  Tensor g = rs_expectation(f, x, sigma, m, plan, 0);
  Tensor expect = f(x);
  const double bound = 3.0 * sigma * op_norm / std::sqrt(static_cast<double>(m));
  for (size_t i = 0; i < g.data.size(); ++i)
    CHECK(std::abs(g.data[i] - expect.data[i]) <= bound);
}

TEST_CASE("rs_expectation: m = 1 reproduces the planned draw") {
  const double sigma = 0.3;
  NoisePlan plan{21, sigma, 8, 8};
  Rng rng(73);
  Tensor x = random_tensor({8, 8, 2}, rng);
  auto f = [](const Tensor& v) { return v; };
  Tensor g = rs_expectation(f, x, sigma, 1, plan, 4);
  Tensor expect = x;
  expect.add_(plan.sample(4, 0));
  CHECK(g.data == expect.data);
}

TEST_CASE("reconstruct: sigma = 0 collapses all four modes bitwise") {
  auto model = test_model();
  DenoiserParams params = small_denoiser();
  data::Phantom p = data::generate_phantom(8, 8, 5);
  Tensor y = mri::forward(model, p.image);

  auto out_vanilla = reconstruct(base_config(Mode::vanilla, 3, 0.0), params, model, y).first;
  for (Mode mode : {Mode::rs_e2e, Mode::smugv0, Mode::smug}) {
    auto out = reconstruct(base_config(mode, 3, 0.0), params, model, y).first;
    CHECK(out.data == out_vanilla.data);
  }
}

TEST_CASE("reconstruct: N = 0 returns A^H y for every mode") {
  auto model = test_model();
  DenoiserParams params = small_denoiser();
  data::Phantom p = data::generate_phantom(8, 8, 6);
  Tensor y = mri::forward(model, p.image);
  Tensor u0 = mri::adjoint(model, y);
  for (Mode mode : {Mode::vanilla, Mode::rs_e2e, Mode::smugv0, Mode::smug}) {
    auto [out, report] = reconstruct(base_config(mode, 0), params, model, y);
    CHECK(out.data == u0.data);
    CHECK(report.n_cg_solves() == 0);
  }
}

TEST_CASE("reconstruct: identity denoiser monotone error and dense fixed-point oracle") {
  auto model = test_model(8, 8, 2, 2);
  DenoiserParams ident = identity_denoiser();
  data::Phantom p = data::generate_phantom(8, 8, 9);
  Tensor y = mri::forward(model, p.image);  // noiseless
  Tensor u0 = mri::adjoint(model, y);

  // dense oracle of the fixed-point iteration x_{n+1} = (A^H A + I)^{-1}(u0 + x_n)
  // evaluated with very tight CG as the reference solve
  ReconConfig cfg = base_config(Mode::vanilla, 0, 0.0);
  cfg.cg_tol = 1e-12;
  cfg.cg_max_iter = 400;

  Tensor x_ref = u0;
  double prev_err = 1e300;
  for (int n = 1; n <= 5; ++n) {
    x_ref = mri::dc_solve_image(model, x_ref, u0, cfg.lambda, 1e-13, 500).x;
    cfg.unroll_steps = n;
    Tensor x_n = reconstruct(cfg, ident, model, y).first;
    CHECK(max_abs_diff(x_n, x_ref) < 1e-8);

    Tensor diff = x_n;
    diff.sub_(p.image);
    const double err = norm2(diff);
    CHECK(err <= prev_err * (1.0 + 1e-9));
    prev_err = err;
  }
}

TEST_CASE("fixed point: exact data and identity denoiser stay put") {
  auto model = test_model(8, 8, 2, 2);
  data::Phantom p = data::generate_phantom(8, 8, 10);
  const Tensor& x_star = p.image;
  Tensor u = mri::adjoint(model, mri::forward(model, x_star));
  mri::DcResult r = mri::dc_solve_image(model, x_star, u, 1.0, 1e-6, 50);
  CHECK(r.iterations == 0);
  CHECK(r.x.data == x_star.data);
}

TEST_CASE("trace accounting: smug runs N solves, smugv0 and rs-e2e run N*m") {
  auto model = test_model();
  DenoiserParams params = small_denoiser();
  data::Phantom p = data::generate_phantom(8, 8, 11);
  Tensor y = mri::forward(model, p.image);
  const int N = 3, m = 4;

  auto count = [&](Mode mode) {
    return reconstruct(base_config(mode, N, 0.02, m), params, model, y).second.n_cg_solves();
  };
  CHECK(count(Mode::vanilla) == N);
  CHECK(count(Mode::smug) == N);
  CHECK(count(Mode::smugv0) == N * m);
  CHECK(count(Mode::rs_e2e) == N * m);
}

TEST_CASE("reconstruct: (seed, params, y) fully determine the output") {
  auto model = test_model();
  DenoiserParams params = small_denoiser();
  data::Phantom p = data::generate_phantom(8, 8, 12);
  Tensor y = mri::forward(model, p.image);
  ReconConfig cfg = base_config(Mode::smug);
  auto a = reconstruct(cfg, params, model, y).first;
  auto b = reconstruct(cfg, params, model, y).first;
  CHECK(a.data == b.data);
  cfg.seed = 78;
  auto c = reconstruct(cfg, params, model, y).first;
  CHECK(a.data != c.data);
}

TEST_CASE("rs-e2e equals the hand-rolled mean of noisy vanilla chains") {
  auto model = test_model();
  DenoiserParams params = small_denoiser();
  data::Phantom p = data::generate_phantom(8, 8, 13);
  Tensor y = mri::forward(model, p.image);
  ReconConfig cfg = base_config(Mode::rs_e2e, 2, 0.05, 3);
  Tensor out = reconstruct(cfg, params, model, y).first;

  // oracle: vanilla pipeline applied to each noisy input, pairwise mean
  ReconConfig vcfg = cfg;
  vcfg.mode = Mode::vanilla;
  NoisePlan plan{cfg.seed, cfg.sigma, 8, 8};
  Tensor u0 = mri::adjoint(model, y);
  std::vector<Tensor> outs;
  for (int j = 0; j < cfg.mc_samples; ++j) {
    Tensor uj = u0;
    uj.add_(plan.sample(0, j));
    outs.push_back(reconstruct_image(vcfg, params, model, uj).first);
  }
  Tensor mean = outs[0];
  mean.add_(outs[1]);  // pairwise: ((0+1)) then +2 tail
  Tensor expect = mean;
  expect.add_(outs[2]);
  expect.scale_(1.0 / 3.0);
  CHECK(max_abs_diff(out, expect) < 1e-15);
}

TEST_CASE("smug z-step equals the Monte Carlo mean of noisy denoiser outputs") {
  auto model = test_model();
  DenoiserParams params = small_denoiser();
  data::Phantom p = data::generate_phantom(8, 8, 14);
  Tensor y = mri::forward(model, p.image);
  ReconConfig cfg = base_config(Mode::smug, 1, 0.05, 4);

  ad::Tape tape;
  DenoiserVars dn = denoiser_constants(tape, params);
  ReconTrace trace;
  reconstruct_on_tape(cfg, dn, model, tape.constant(mri::adjoint(model, y)), &trace);
  REQUIRE(trace.z_steps.size() == 1);
  REQUIRE(trace.noisy_denoised.size() == 1);
  REQUIRE(trace.noisy_denoised[0].size() == 4);

  // oracle via the plain-tensor expectation with the same plan
  NoisePlan plan{cfg.seed, cfg.sigma, 8, 8};
  Tensor z = rs_expectation([&](const Tensor& v) { return denoise_eval(params, v); },
                            mri::adjoint(model, y), cfg.sigma, 4, plan, 0);
  CHECK(max_abs_diff(trace.z_steps[0].value(), z) < 1e-15);
}

TEST_CASE("trace: x_steps has length N+1 and starts at A^H y for stepwise modes") {
  auto model = test_model();
  DenoiserParams params = small_denoiser();
  data::Phantom p = data::generate_phantom(8, 8, 15);
  Tensor y = mri::forward(model, p.image);
  Tensor u0 = mri::adjoint(model, y);
  for (Mode mode : {Mode::vanilla, Mode::smug, Mode::smugv0}) {
    ad::Tape tape;
    DenoiserVars dn = denoiser_constants(tape, params);
    ReconTrace trace;
    reconstruct_on_tape(base_config(mode, 3, 0.02, 2), dn, model, tape.constant(u0), &trace);
    REQUIRE(trace.x_steps.size() == 4);
    CHECK(trace.x_steps[0].value().data == u0.data);
  }
}

TEST_CASE("reconstruct: trace JSON exports residuals and convergence flags") {
  auto model = test_model();
  DenoiserParams params = small_denoiser();
  data::Phantom p = data::generate_phantom(8, 8, 16);
  Tensor y = mri::forward(model, p.image);
  auto [out, report] = reconstruct(base_config(Mode::vanilla, 2, 0.0), params, model, y);
  const std::string j = report.to_json();
  CHECK(j.find("\"n_cg_solves\": 2") != std::string::npos);
  CHECK(j.find("residual_norm") != std::string::npos);
  CHECK(j.find("converged") != std::string::npos);
}
