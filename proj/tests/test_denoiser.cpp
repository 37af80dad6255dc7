#include <cmath>

#include "doctest.h"
#include "smug/denoiser.hpp"
#include "smug/rng.hpp"
#include "test_util.hpp"

using namespace smug;
using namespace smug::ad;
using testutil::random_tensor;

namespace {

DenoiserParams zero_params(const DenoiserConfig& cfg) {
  return DenoiserParams::unflatten(
      cfg, std::vector<double>(static_cast<size_t>(denoiser_param_count(cfg)), 0.0));
}

}  // namespace

TEST_CASE("denoise: zero weights with residual path is exactly the identity") {
  DenoiserConfig cfg;  // residual on
  DenoiserParams p = zero_params(cfg);
  Rng rng(61);
  Tensor x = random_tensor({12, 10, 2}, rng);
  CHECK(denoise_eval(p, x).data == x.data);
}

TEST_CASE("denoise: zero weights without residual is the zero image") {
  DenoiserConfig cfg;
  cfg.residual = false;
  DenoiserParams p = zero_params(cfg);
  Rng rng(62);
  Tensor x = random_tensor({8, 8, 2}, rng);
  for (double v : denoise_eval(p, x).data) CHECK(v == 0.0);
}

TEST_CASE("denoiser parameter count matches the analytic formula") {
  DenoiserConfig cfg;  // L=3, C=16, k=3
  // 2->16: 16*2*9+16, 16->16: 16*16*9+16, 16->2: 2*16*9+2
  CHECK(denoiser_param_count(cfg) == 304 + 2320 + 290);
  DenoiserParams p = init_denoiser(cfg, 1);
  CHECK(p.param_count() == 2914);
  CHECK(static_cast<int64_t>(p.flatten().size()) == 2914);

  DenoiserConfig single;
  single.depth = 1;
  single.channels = 5;  // unused by a single 2->2 layer
  CHECK(denoiser_param_count(single) == 2 * 2 * 9 + 2);
}

TEST_CASE("flatten/unflatten is a bijection") {
  DenoiserConfig cfg;
  cfg.depth = 2;
  cfg.channels = 4;
  DenoiserParams p = init_denoiser(cfg, 9);
  std::vector<double> flat = p.flatten();
  DenoiserParams q = DenoiserParams::unflatten(cfg, flat);
  CHECK(q.flatten() == flat);
  for (int l = 0; l < cfg.depth; ++l) {
    CHECK(q.kernels[l].data == p.kernels[l].data);
    CHECK(q.biases[l].data == p.biases[l].data);
  }
  CHECK_THROWS_AS(DenoiserParams::unflatten(cfg, std::vector<double>(3)),
                  std::invalid_argument);
}

TEST_CASE("init_denoiser: deterministic, zero biases, Kaiming-scaled kernels") {
  DenoiserConfig cfg;  // middle layer fan_in = 16*9 = 144 >= 128
  DenoiserParams a = init_denoiser(cfg, 7);
  DenoiserParams b = init_denoiser(cfg, 7);
  CHECK(a.flatten() == b.flatten());
  for (const Tensor& bias : a.biases)
    for (double v : bias.data) CHECK(v == 0.0);

  const Tensor& mid = a.kernels[1];  // [16,16,3,3], 2304 entries
  double var = 0.0;
  for (double v : mid.data) var += v * v;
  const double emp_std = std::sqrt(var / static_cast<double>(mid.data.size()));
  const double expect = std::sqrt(2.0 / 144.0);
  CHECK(std::abs(emp_std - expect) < 0.1 * expect);
}

TEST_CASE("denoise: gradient w.r.t. parameters matches finite differences") {
  DenoiserConfig cfg;
  cfg.depth = 2;
  cfg.channels = 4;
  DenoiserParams p = init_denoiser(cfg, 3);
  Rng rng(63);
  Tensor x = random_tensor({8, 8, 2}, rng);

  std::vector<Tensor> inputs;
  for (int l = 0; l < cfg.depth; ++l) {
    inputs.push_back(p.kernels[l]);
    inputs.push_back(p.biases[l]);
  }
  const double err = testutil::fd_rel_err(
      [&](Tape& tape, std::vector<Var>& leaves) {
        DenoiserVars d;
        d.config = cfg;
        for (int l = 0; l < cfg.depth; ++l) {
          d.kernels.push_back(leaves[static_cast<size_t>(2 * l)]);
          d.biases.push_back(leaves[static_cast<size_t>(2 * l + 1)]);
        }
        return sum_squares(denoise(d, tape.constant(x)));
      },
      inputs);
  CHECK(err < 1e-4);
}

TEST_CASE("complex <-> channel representation round trip is exact") {
  Rng rng(64);
  Tensor x = random_tensor({6, 5, 2}, rng);
  Tape tape;
  Var v = tape.leaf(x);
  Var back = channels_to_image(image_to_channels(v));
  CHECK(back.value().data == x.data);

  // and the permutations are exact adjoints of each other
  const double err = testutil::fd_rel_err(
      [](Tape&, std::vector<Var>& l) {
        return sum_squares(image_to_channels(l[0]));
      },
      {x});
  CHECK(err < 1e-6);
}

TEST_CASE("denoise is deterministic") {
  DenoiserConfig cfg;
  DenoiserParams p = init_denoiser(cfg, 5);
  Rng rng(65);
  Tensor x = random_tensor({16, 16, 2}, rng);
  CHECK(denoise_eval(p, x).data == denoise_eval(p, x).data);
}
