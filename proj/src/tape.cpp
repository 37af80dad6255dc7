#include "smug/tape.hpp"

#include <stdexcept>

namespace smug::ad {

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true});
  grads_valid_ = false;
  return Var{this, static_cast<NodeId>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false});
  grads_valid_ = false;
  return Var{this, static_cast<NodeId>(nodes_.size() - 1)};
}

Var Tape::make_node(Tensor value, std::initializer_list<NodeId> inputs, BackwardFn bw) {
  bool rg = false;
  for (NodeId i : inputs) rg = rg || nodes_[static_cast<size_t>(i)].requires_grad;
  Node n;
  n.value = std::move(value);
  n.requires_grad = rg;
  if (rg) n.backward = std::move(bw);  // no-grad subgraphs skip backward entirely
  nodes_.push_back(std::move(n));
  grads_valid_ = false;
  return Var{this, static_cast<NodeId>(nodes_.size() - 1)};
}

Tensor& Tape::grad_slot(NodeId id) {
  Tensor& g = grads_[static_cast<size_t>(id)];
  if (g.data.empty()) g = Tensor::zeros(nodes_[static_cast<size_t>(id)].value.shape);
  return g;
}

void Tape::accumulate(NodeId id, const Tensor& contribution) {
  if (!nodes_[static_cast<size_t>(id)].requires_grad) return;
  grad_slot(id).add_(contribution);
}

void Tape::accumulate_scaled(NodeId id, double a, const Tensor& x) {
  if (!nodes_[static_cast<size_t>(id)].requires_grad) return;
  grad_slot(id).axpy_(a, x);
}

void Tape::backward(const Var& loss) {
  if (loss.tape != this) throw std::invalid_argument("backward: loss from another tape");
  const Tensor& lv = value(loss.id);
  if (lv.numel() != 1)
    throw std::invalid_argument("backward: loss node must be scalar (numel == 1), got shape " +
                                shape_str(lv.shape));
  grads_.assign(nodes_.size(), Tensor{});
  grads_[static_cast<size_t>(loss.id)] = Tensor::full(lv.shape, 1.0);
  for (NodeId id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad || !n.backward) continue;
    Tensor& g = grads_[static_cast<size_t>(id)];
    if (g.data.empty()) continue;  // not an ancestor of the loss
    n.backward(*this, g);
  }
  // Materialize zero gradients so every tracked leaf can be queried.
  for (size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].requires_grad && grads_[i].data.empty())
      grads_[i] = Tensor::zeros(nodes_[i].value.shape);
  grads_valid_ = true;
}

const Tensor& Tape::grad(const Var& v) const {
  if (!grads_valid_) throw std::logic_error("grad: backward() has not been run");
  if (!nodes_[static_cast<size_t>(v.id)].requires_grad)
    throw std::logic_error("grad: node does not track gradients");
  return grads_[static_cast<size_t>(v.id)];
}

namespace {

void check_same_tape(const Var& a, const Var& b, const char* op) {
  if (a.tape != b.tape)
    throw std::invalid_argument(std::string(op) + ": operands live on different tapes");
}

}  // namespace

Var add(const Var& a, const Var& b) {
  check_same_tape(a, b, "add");
  check_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out.add_(b.value());
  NodeId ia = a.id, ib = b.id;
  return a.tape->make_node(std::move(out), {ia, ib},
                           [ia, ib](Tape& t, const Tensor& up) {
                             t.accumulate(ia, up);
                             t.accumulate(ib, up);
                           });
}

Var sub(const Var& a, const Var& b) {
  check_same_tape(a, b, "sub");
  check_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  out.sub_(b.value());
  NodeId ia = a.id, ib = b.id;
  return a.tape->make_node(std::move(out), {ia, ib},
                           [ia, ib](Tape& t, const Tensor& up) {
                             t.accumulate(ia, up);
                             t.accumulate_scaled(ib, -1.0, up);
                           });
}

Var mul(const Var& a, const Var& b) {
  check_same_tape(a, b, "mul");
  check_same_shape(a.value(), b.value(), "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out = av;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
  NodeId ia = a.id, ib = b.id;
  return a.tape->make_node(std::move(out), {ia, ib}, [ia, ib](Tape& t, const Tensor& up) {
    if (t.requires_grad(ia)) {
      Tensor& g = t.grad_slot(ia);
      const Tensor& bv2 = t.value(ib);
      for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += up.data[i] * bv2.data[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& g = t.grad_slot(ib);
      const Tensor& av2 = t.value(ia);
      for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += up.data[i] * av2.data[i];
    }
  });
}

Var scale(const Var& a, double c) {
  Tensor out = a.value();
  out.scale_(c);
  NodeId ia = a.id;
  return a.tape->make_node(std::move(out), {ia}, [ia, c](Tape& t, const Tensor& up) {
    t.accumulate_scaled(ia, c, up);
  });
}

Var relu(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  NodeId ia = a.id;
  return a.tape->make_node(std::move(out), {ia}, [ia](Tape& t, const Tensor& up) {
    if (!t.requires_grad(ia)) return;
    Tensor& g = t.grad_slot(ia);
    const Tensor& in = t.value(ia);
    for (size_t i = 0; i < g.data.size(); ++i)
      if (in.data[i] > 0.0) g.data[i] += up.data[i];
  });
}

namespace {

void check_conv_shapes(const Tensor& in, const Tensor& ker, const Tensor& bias) {
  if (in.rank() != 3)
    throw std::invalid_argument("conv2d: input must be rank 3 [channels,height,width], got " +
                                shape_str(in.shape));
  if (ker.rank() != 4)
    throw std::invalid_argument(
        "conv2d: kernel must be rank 4 [out_channels,in_channels,k,k], got " +
        shape_str(ker.shape));
  if (ker.shape[2] != ker.shape[3])
    throw std::invalid_argument("conv2d: kernel spatial axes 2 and 3 differ: " +
                                shape_str(ker.shape));
  if (ker.shape[2] % 2 == 0)
    throw std::invalid_argument("conv2d: kernel size (axis 2) must be odd, got " +
                                std::to_string(ker.shape[2]));
  if (ker.shape[1] != in.shape[0])
    throw std::invalid_argument(
        "conv2d: kernel input-channel axis 1 has extent " + std::to_string(ker.shape[1]) +
        " but input channel axis 0 has extent " + std::to_string(in.shape[0]));
  if (bias.rank() != 1 || bias.shape[0] != ker.shape[0])
    throw std::invalid_argument("conv2d: bias axis 0 must have extent " +
                                std::to_string(ker.shape[0]) + " (kernel out-channel axis 0), got " +
                                shape_str(bias.shape));
}

// out[co,y,x] = bias[co] + sum_{ci,dy,dx} in[ci,y+dy-c,x+dx-c] * ker[co,ci,dy,dx]
Tensor conv2d_value(const Tensor& in, const Tensor& ker, const Tensor& bias) {
  const int ci_n = in.shape[0], h = in.shape[1], w = in.shape[2];
  const int co_n = ker.shape[0], k = ker.shape[2], c = k / 2;
  Tensor out({co_n, h, w});
  for (int co = 0; co < co_n; ++co) {
    const double b = bias[co];
    double* op = &out.data[static_cast<size_t>(co) * h * w];
    for (int i = 0; i < h * w; ++i) op[i] = b;
    for (int ci = 0; ci < ci_n; ++ci) {
      const double* ip = &in.data[static_cast<size_t>(ci) * h * w];
      for (int dy = 0; dy < k; ++dy) {
        for (int dx = 0; dx < k; ++dx) {
          const double kv = ker.data[((static_cast<size_t>(co) * ci_n + ci) * k + dy) * k + dx];
          if (kv == 0.0) continue;
          const int oy = dy - c, ox = dx - c;
          const int y0 = std::max(0, -oy), y1 = std::min(h, h - oy);
          const int x0 = std::max(0, -ox), x1 = std::min(w, w - ox);
          for (int y = y0; y < y1; ++y) {
            double* orow = op + static_cast<size_t>(y) * w;
            const double* irow = ip + static_cast<size_t>(y + oy) * w + ox;
            for (int x = x0; x < x1; ++x) orow[x] += kv * irow[x];
          }
        }
      }
    }
  }
  return out;
}

}  // namespace

Var conv2d(const Var& input, const Var& kernel, const Var& bias) {
  check_same_tape(input, kernel, "conv2d");
  check_same_tape(input, bias, "conv2d");
  const Tensor& in = input.value();
  const Tensor& ker = kernel.value();
  const Tensor& bv = bias.value();
  check_conv_shapes(in, ker, bv);
  Tensor out = conv2d_value(in, ker, bv);
  NodeId ii = input.id, ik = kernel.id, ib = bias.id;
  return input.tape->make_node(std::move(out), {ii, ik, ib}, [ii, ik, ib](Tape& t,
                                                                          const Tensor& up) {
    const Tensor& in2 = t.value(ii);
    const Tensor& ker2 = t.value(ik);
    const int ci_n = in2.shape[0], h = in2.shape[1], w = in2.shape[2];
    const int co_n = ker2.shape[0], k = ker2.shape[2], c = k / 2;
    if (t.requires_grad(ii)) {
      Tensor& gi = t.grad_slot(ii);
      for (int co = 0; co < co_n; ++co) {
        const double* uprow0 = &up.data[static_cast<size_t>(co) * h * w];
        for (int ci = 0; ci < ci_n; ++ci) {
          double* gp = &gi.data[static_cast<size_t>(ci) * h * w];
          for (int dy = 0; dy < k; ++dy) {
            for (int dx = 0; dx < k; ++dx) {
              const double kv =
                  ker2.data[((static_cast<size_t>(co) * ci_n + ci) * k + dy) * k + dx];
              if (kv == 0.0) continue;
              const int oy = dy - c, ox = dx - c;
              const int y0 = std::max(0, -oy), y1 = std::min(h, h - oy);
              const int x0 = std::max(0, -ox), x1 = std::min(w, w - ox);
              for (int y = y0; y < y1; ++y) {
                const double* urow = uprow0 + static_cast<size_t>(y) * w;
                double* grow = gp + static_cast<size_t>(y + oy) * w + ox;
                for (int x = x0; x < x1; ++x) grow[x] += kv * urow[x];
              }
            }
          }
        }
      }
    }
    if (t.requires_grad(ik)) {
      Tensor& gk = t.grad_slot(ik);
      for (int co = 0; co < co_n; ++co) {
        const double* uprow0 = &up.data[static_cast<size_t>(co) * h * w];
        for (int ci = 0; ci < ci_n; ++ci) {
          const double* ip = &in2.data[static_cast<size_t>(ci) * h * w];
          for (int dy = 0; dy < k; ++dy) {
            for (int dx = 0; dx < k; ++dx) {
              const int oy = dy - c, ox = dx - c;
              const int y0 = std::max(0, -oy), y1 = std::min(h, h - oy);
              const int x0 = std::max(0, -ox), x1 = std::min(w, w - ox);
              double s = 0.0;
              for (int y = y0; y < y1; ++y) {
                const double* urow = uprow0 + static_cast<size_t>(y) * w;
                const double* irow = ip + static_cast<size_t>(y + oy) * w + ox;
                for (int x = x0; x < x1; ++x) s += urow[x] * irow[x];
              }
              gk.data[((static_cast<size_t>(co) * ci_n + ci) * k + dy) * k + dx] += s;
            }
          }
        }
      }
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_slot(ib);
      for (int co = 0; co < co_n; ++co) {
        const double* uprow0 = &up.data[static_cast<size_t>(co) * h * w];
        double s = 0.0;
        for (int i = 0; i < h * w; ++i) s += uprow0[i];
        gb.data[static_cast<size_t>(co)] += s;
      }
    }
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  NodeId ia = a.id;
  return a.tape->make_node(Tensor::scalar(s), {ia}, [ia](Tape& t, const Tensor& up) {
    if (!t.requires_grad(ia)) return;
    Tensor& g = t.grad_slot(ia);
    const double u = up.data[0];
    for (double& v : g.data) v += u;
  });
}

Var sum_squares(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data) s += v * v;
  NodeId ia = a.id;
  return a.tape->make_node(Tensor::scalar(s), {ia}, [ia](Tape& t, const Tensor& up) {
    if (!t.requires_grad(ia)) return;
    Tensor& g = t.grad_slot(ia);
    const Tensor& in = t.value(ia);
    const double u2 = 2.0 * up.data[0];
    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += u2 * in.data[i];
  });
}

Var apply_linear(const Var& x, LinearOp op) {
  if (!op.apply) throw std::invalid_argument("apply_linear: missing forward map");
  if (!op.adjoint) throw std::invalid_argument("apply_linear: missing adjoint map");
  Tensor out = op.apply(x.value());
  NodeId ix = x.id;
  auto adj = std::move(op.adjoint);
  return x.tape->make_node(std::move(out), {ix},
                           [ix, adj = std::move(adj)](Tape& t, const Tensor& up) {
                             t.accumulate(ix, adj(up));
                           });
}

Var sum_pairwise(std::span<const Var> xs) {
  if (xs.empty()) throw std::invalid_argument("sum_pairwise: empty input");
  // fixed pairwise reduction tree, independent of evaluation environment
  std::vector<Var> level(xs.begin(), xs.end());
  while (level.size() > 1) {
    std::vector<Var> next;
    next.reserve((level.size() + 1) / 2);
    for (size_t i = 0; i + 1 < level.size(); i += 2) next.push_back(add(level[i], level[i + 1]));
    if (level.size() % 2 == 1) next.push_back(level.back());
    level = std::move(next);
  }
  return level[0];
}

Var mean_pairwise(std::span<const Var> xs) {
  Var s = sum_pairwise(xs);
  return scale(s, 1.0 / static_cast<double>(xs.size()));
}

}  // namespace smug::ad
