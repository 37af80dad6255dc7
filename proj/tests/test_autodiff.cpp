#include <cmath>
#include <vector>

#include "doctest.h"
#include "smug/rng.hpp"
#include "smug/tape.hpp"
#include "test_util.hpp"

using namespace smug;
using namespace smug::ad;
using testutil::fd_rel_err;
using testutil::random_tensor;
using testutil::random_tensor_away_from_zero;

TEST_CASE("conv2d: 1x1 identity kernel reproduces the input") {
  Rng rng(1);
  Tensor in = random_tensor({1, 4, 5}, rng);
  Tape tape;
  Var x = tape.leaf(in);
  Var k = tape.constant(Tensor::from({1, 1, 1, 1}, {1.0}));
  Var b = tape.constant(Tensor::zeros({1}));
  Var out = conv2d(x, k, b);
  CHECK(max_abs_diff(out.value(), in) == 0.0);
}

TEST_CASE("conv2d: zero input yields the per-channel bias everywhere") {
  Tape tape;
  Var x = tape.constant(Tensor::zeros({2, 3, 3}));
  Rng rng(2);
  Tensor kt = random_tensor({3, 2, 3, 3}, rng);
  Var k = tape.constant(kt);
  Var b = tape.constant(Tensor::from({3}, {0.5, -1.25, 2.0}));
  Var out = conv2d(x, k, b);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 3; ++y)
      for (int xp = 0; xp < 3; ++xp) CHECK(out.value().at3(c, y, xp) == b.value()[c]);
}

TEST_CASE("conv2d: matches a direct nested-loop cross-correlation oracle") {
  Rng rng(3);
  Tensor in = random_tensor({1, 3, 3}, rng);
  Tensor ker = random_tensor({1, 1, 3, 3}, rng);
  Tensor bias = random_tensor({1}, rng);
  Tape tape;
  Var out = conv2d(tape.leaf(in), tape.leaf(ker), tape.leaf(bias));

  // independent loop oracle, zero padding, stride 1
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) {
      double acc = bias[0];
      for (int dy = 0; dy < 3; ++dy) {
        for (int dx = 0; dx < 3; ++dx) {
          const int sy = y + dy - 1, sx = x + dx - 1;
          if (sy < 0 || sy >= 3 || sx < 0 || sx >= 3) continue;
          acc += in.at3(0, sy, sx) * ker.data[static_cast<size_t>(dy) * 3 + dx];
        }
      }
      CHECK(std::abs(out.value().at3(0, y, x) - acc) < 1e-12);
    }
  }
}

TEST_CASE("conv2d: shape errors name the offending axis") {
  Tape tape;
  Var x = tape.constant(Tensor::zeros({2, 4, 4}));
  Var k = tape.constant(Tensor::zeros({3, 5, 3, 3}));  // wrong input channels
  Var b = tape.constant(Tensor::zeros({3}));
  CHECK_THROWS_WITH_AS(conv2d(x, k, b),
                       doctest::Contains("kernel input-channel axis 1"), std::invalid_argument);
  Var k_even = tape.constant(Tensor::zeros({3, 2, 4, 4}));
  CHECK_THROWS_WITH_AS(conv2d(x, k_even, b), doctest::Contains("odd"), std::invalid_argument);
  Var b_bad = tape.constant(Tensor::zeros({2}));
  Var k_ok = tape.constant(Tensor::zeros({3, 2, 3, 3}));
  CHECK_THROWS_WITH_AS(conv2d(x, k_ok, b_bad), doctest::Contains("bias axis 0"),
                       std::invalid_argument);
}

TEST_CASE("relu: examples and gradient") {
  Tape tape;
  Var x = tape.leaf(Tensor::from({3}, {-1.0, 0.0, 2.0}));
  Var r = relu(x);
  CHECK(r.value().data == std::vector<double>{0.0, 0.0, 2.0});

  Var pos = tape.leaf(Tensor::from({3}, {0.5, 1.0, 7.0}));
  CHECK(max_abs_diff(relu(pos).value(), pos.value()) == 0.0);

  // gradient at random non-zero inputs vs central finite differences
  Rng rng(4);
  Tensor in = random_tensor_away_from_zero({4, 4}, rng, 1e-2);
  double err = fd_rel_err(
      [](Tape& t, std::vector<Var>& leaves) {
        (void)t;
        return sum_squares(relu(leaves[0]));
      },
      {in});
  CHECK(err < 1e-6);
}

TEST_CASE("backward: sum gives all-ones, squared norm gives 2x") {
  Rng rng(5);
  Tensor in = random_tensor({3, 4}, rng);
  Tape tape;
  Var x = tape.leaf(in);
  tape.backward(sum(x));
  for (double g : tape.grad(x).data) CHECK(g == 1.0);

  Tape tape2;
  Var x2 = tape2.leaf(in);
  tape2.backward(sum_squares(x2));
  Tensor expect = scale(in, 2.0);
  CHECK(max_abs_diff(tape2.grad(x2), expect) < 1e-15);
}

TEST_CASE("backward: non-scalar loss is rejected") {
  Tape tape;
  Var x = tape.leaf(Tensor::zeros({2, 2}));
  Var y = add(x, x);
  CHECK_THROWS_WITH_AS(tape.backward(y), doctest::Contains("scalar"), std::invalid_argument);
}

TEST_CASE("backward: gradients accumulate over repeated use of a node") {
  Tensor in = Tensor::from({2}, {1.5, -2.0});
  Tape tape;
  Var x = tape.leaf(in);
  Var y = add(x, x);  // loss = sum(2x)
  tape.backward(sum(y));
  for (double g : tape.grad(x).data) CHECK(g == 2.0);
}

TEST_CASE("backward: sum node distributes gradients additively") {
  Rng rng(6);
  Tensor a = random_tensor({5}, rng), b = random_tensor({5}, rng);
  Tape tape;
  Var va = tape.leaf(a), vb = tape.leaf(b);
  tape.backward(sum_squares(add(va, vb)));
  Tensor expect = add(a, b);
  expect.scale_(2.0);
  CHECK(max_abs_diff(tape.grad(va), expect) < 1e-15);
  CHECK(max_abs_diff(tape.grad(vb), expect) < 1e-15);
}

TEST_CASE("apply_linear: identity and scaled identity") {
  Rng rng(7);
  Tensor in = random_tensor({6}, rng);
  Tape tape;
  Var x = tape.leaf(in);
  LinearOp ident{[](const Tensor& v) { return v; }, [](const Tensor& v) { return v; }};
  Var y = apply_linear(x, ident);
  CHECK(max_abs_diff(y.value(), in) == 0.0);

  // L = 2I: gradient of ||Lx||^2 / 2 is 4x
  LinearOp twice{[](const Tensor& v) { return scale(v, 2.0); },
                 [](const Tensor& v) { return scale(v, 2.0); }};
  Tape tape2;
  Var x2 = tape2.leaf(in);
  Var loss = scale(sum_squares(apply_linear(x2, twice)), 0.5);
  tape2.backward(loss);
  Tensor expect = scale(in, 4.0);
  CHECK(max_abs_diff(tape2.grad(x2), expect) < 1e-12);
}

TEST_CASE("apply_linear: missing adjoint raises at registration") {
  Tape tape;
  Var x = tape.leaf(Tensor::zeros({2}));
  LinearOp no_adj{[](const Tensor& v) { return v; }, nullptr};
  CHECK_THROWS_WITH_AS(apply_linear(x, no_adj), doctest::Contains("adjoint"),
                       std::invalid_argument);
}

TEST_CASE("apply_linear: dense-matrix oracle for gradient of ||Lx||^2/2") {
  const int n = 7;
  Rng rng(8);
  std::vector<double> mat(n * n);
  for (double& v : mat) v = rng.uniform(-1.0, 1.0);
  auto matvec = [&, n](const Tensor& v) {
    Tensor out({n});
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += mat[static_cast<size_t>(i) * n + j] * v[j];
      out[i] = s;
    }
    return out;
  };
  auto matvec_t = [&, n](const Tensor& v) {
    Tensor out({n});
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += mat[static_cast<size_t>(j) * n + i] * v[j];
      out[i] = s;
    }
    return out;
  };
  Tensor in = random_tensor({n}, rng);
  Tape tape;
  Var x = tape.leaf(in);
  Var loss = scale(sum_squares(apply_linear(x, LinearOp{matvec, matvec_t})), 0.5);
  tape.backward(loss);
  Tensor expect = matvec_t(matvec(in));  // L^T (L x) by the dense oracle
  CHECK(max_abs_diff(tape.grad(x), expect) < 1e-12);
}

TEST_CASE("gradient-check property: every elementwise/reduction op") {
  Rng rng(9);
  auto check = [&](const char* name, const testutil::LossBuilder& build,
                   std::vector<Tensor> inputs) {
    const double err = fd_rel_err(build, std::move(inputs));
    INFO(name);
    CHECK(err < 1e-5);
  };

  check("add", [](Tape&, std::vector<Var>& l) { return sum_squares(add(l[0], l[1])); },
        {random_tensor({3, 3}, rng), random_tensor({3, 3}, rng)});
  check("sub", [](Tape&, std::vector<Var>& l) { return sum_squares(sub(l[0], l[1])); },
        {random_tensor({3, 3}, rng), random_tensor({3, 3}, rng)});
  check("mul", [](Tape&, std::vector<Var>& l) { return sum_squares(mul(l[0], l[1])); },
        {random_tensor({3, 3}, rng), random_tensor({3, 3}, rng)});
  check("scale", [](Tape&, std::vector<Var>& l) { return sum_squares(scale(l[0], -1.7)); },
        {random_tensor({4}, rng)});
  check("relu", [](Tape&, std::vector<Var>& l) { return sum_squares(relu(l[0])); },
        {random_tensor_away_from_zero({4, 4}, rng)});
  check("sum", [](Tape&, std::vector<Var>& l) { return mul(sum(l[0]), sum(l[0])); },
        {random_tensor({5}, rng)});
  check("sum_squares", [](Tape&, std::vector<Var>& l) { return sum_squares(l[0]); },
        {random_tensor({5}, rng)});
  check("conv2d",
        [](Tape&, std::vector<Var>& l) { return sum_squares(conv2d(l[0], l[1], l[2])); },
        {random_tensor({2, 5, 4}, rng), random_tensor({3, 2, 3, 3}, rng),
         random_tensor({3}, rng)});
  check("mean_pairwise",
        [](Tape&, std::vector<Var>& l) {
          std::vector<Var> xs = {l[0], l[1], l[2]};
          return sum_squares(mean_pairwise(xs));
        },
        {random_tensor({3}, rng), random_tensor({3}, rng), random_tensor({3}, rng)});
}

TEST_CASE("mean_pairwise: fixed order, exact mean for equal inputs") {
  Tape tape;
  std::vector<Var> xs;
  for (int i = 0; i < 10; ++i) xs.push_back(tape.constant(Tensor::full({3}, 0.5)));
  Var m = mean_pairwise(xs);
  // pairwise reduction of identical power-of-two friendly values is exact here
  for (double v : m.value().data) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("determinism: identical seeds give bit-identical values and gradients") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    Tensor in = random_tensor({2, 6, 6}, rng);
    Tensor ker = random_tensor({2, 2, 3, 3}, rng);
    Tensor bias = random_tensor({2}, rng);
    Tape tape;
    Var x = tape.leaf(in), k = tape.leaf(ker), b = tape.leaf(bias);
    Var loss = sum_squares(relu(conv2d(x, k, b)));
    tape.backward(loss);
    return std::make_tuple(loss.value().data[0], tape.grad(x).data, tape.grad(k).data);
  };
  auto [l1, gx1, gk1] = run(42);
  auto [l2, gx2, gk2] = run(42);
  CHECK(l1 == l2);
  CHECK(gx1 == gx2);
  CHECK(gk1 == gk2);
}

TEST_CASE("finiteness: ops on finite inputs stay finite") {
  Rng rng(10);
  Tensor in = random_tensor({3, 8, 8}, rng);
  Tensor ker = random_tensor({4, 3, 3, 3}, rng);
  Tensor bias = random_tensor({4}, rng);
  Tape tape;
  Var out = relu(conv2d(tape.leaf(in), tape.leaf(ker), tape.leaf(bias)));
  CHECK(out.value().all_finite());
}
