#pragma once

#include <functional>
#include <vector>

#include "smug/rng.hpp"
#include "smug/tape.hpp"
#include "smug/tensor.hpp"

namespace smug::testutil {

inline ad::Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0,
                                double hi = 1.0) {
  ad::Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Random tensor with every entry at least `margin` away from zero, for ops
// with a kink at zero.
inline ad::Tensor random_tensor_away_from_zero(std::vector<int> shape, Rng& rng,
                                               double margin = 1e-3) {
  ad::Tensor t(std::move(shape));
  for (double& v : t.data) {
    double x;
    do {
      x = rng.uniform(-1.0, 1.0);
    } while (std::abs(x) < margin);
    v = x;
  }
  return t;
}

// Finite-difference gradient checks need pre-activations bounded away from
// the ReLU kink; zero-initialized biases put exact-zero background pixels of
// a phantom right on it. Jittering the biases restores a valid check point.
template <typename Params>
Params kink_free(Params p, Rng& rng) {
  for (auto& b : p.biases)
    for (double& v : b.data) v = rng.uniform(0.01, 0.03);
  return p;
}

// Builds a scalar loss from leaves created from `inputs`; used both for the
// analytic gradient (reverse pass) and for central finite differences.
using LossBuilder = std::function<ad::Var(ad::Tape&, std::vector<ad::Var>&)>;

inline double loss_value(const LossBuilder& build, const std::vector<ad::Tensor>& inputs) {
  ad::Tape tape;
  std::vector<ad::Var> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
  return build(tape, leaves).value().data[0];
}

// Norm-based relative error between the tape gradient and central finite
// differences over all inputs.
inline double fd_rel_err(const LossBuilder& build, std::vector<ad::Tensor> inputs,
                         double h = 1e-5) {
  std::vector<ad::Tensor> analytic;
  {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
    ad::Var loss = build(tape, leaves);
    tape.backward(loss);
    for (const auto& v : leaves) analytic.push_back(tape.grad(v));
  }
  double diff2 = 0.0, fd2 = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (size_t j = 0; j < inputs[i].data.size(); ++j) {
      const double orig = inputs[i].data[j];
      inputs[i].data[j] = orig + h;
      const double fp = loss_value(build, inputs);
      inputs[i].data[j] = orig - h;
      const double fm = loss_value(build, inputs);
      inputs[i].data[j] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double d = analytic[i].data[j] - fd;
      diff2 += d * d;
      fd2 += fd * fd;
    }
  }
  return std::sqrt(diff2) / std::max(std::sqrt(fd2), 1e-300);
}

}  // namespace smug::testutil
