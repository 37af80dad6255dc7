#include "smug/denoiser.hpp"

#include <cmath>
#include <stdexcept>

#include "smug/rng.hpp"

namespace smug {

void DenoiserConfig::validate() const {
  if (depth < 1) throw std::invalid_argument("denoiser: depth must be >= 1");
  if (channels < 1) throw std::invalid_argument("denoiser: channels must be >= 1");
  if (kernel < 1 || kernel % 2 == 0)
    throw std::invalid_argument("denoiser: kernel size must be odd and positive");
}

namespace {

int in_channels(const DenoiserConfig& c, int layer) { return layer == 0 ? 2 : c.channels; }
int out_channels(const DenoiserConfig& c, int layer) {
  return layer == c.depth - 1 ? 2 : c.channels;
}

}  // namespace

int64_t denoiser_param_count(const DenoiserConfig& cfg) {
  cfg.validate();
  int64_t n = 0;
  for (int l = 0; l < cfg.depth; ++l) {
    const int64_t ci = in_channels(cfg, l), co = out_channels(cfg, l);
    n += co * ci * cfg.kernel * cfg.kernel + co;
  }
  return n;
}

int64_t DenoiserParams::param_count() const { return denoiser_param_count(config); }

std::vector<double> DenoiserParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(static_cast<size_t>(param_count()));
  for (int l = 0; l < config.depth; ++l) {
    flat.insert(flat.end(), kernels[static_cast<size_t>(l)].data.begin(),
                kernels[static_cast<size_t>(l)].data.end());
    flat.insert(flat.end(), biases[static_cast<size_t>(l)].data.begin(),
                biases[static_cast<size_t>(l)].data.end());
  }
  return flat;
}

DenoiserParams DenoiserParams::unflatten(const DenoiserConfig& cfg,
                                         std::span<const double> flat) {
  if (static_cast<int64_t>(flat.size()) != denoiser_param_count(cfg))
    throw std::invalid_argument("DenoiserParams::unflatten: got " +
                                std::to_string(flat.size()) + " values, expected " +
                                std::to_string(denoiser_param_count(cfg)));
  DenoiserParams p;
  p.config = cfg;
  size_t off = 0;
  for (int l = 0; l < cfg.depth; ++l) {
    const int ci = in_channels(cfg, l), co = out_channels(cfg, l);
    ad::Tensor k({co, ci, cfg.kernel, cfg.kernel});
    std::copy(flat.begin() + static_cast<int64_t>(off),
              flat.begin() + static_cast<int64_t>(off + k.data.size()), k.data.begin());
    off += k.data.size();
    ad::Tensor b({co});
    std::copy(flat.begin() + static_cast<int64_t>(off),
              flat.begin() + static_cast<int64_t>(off + b.data.size()), b.data.begin());
    off += b.data.size();
    p.kernels.push_back(std::move(k));
    p.biases.push_back(std::move(b));
  }
  return p;
}

DenoiserParams init_denoiser(const DenoiserConfig& cfg, uint64_t seed) {
  cfg.validate();
  DenoiserParams p;
  p.config = cfg;
  for (int l = 0; l < cfg.depth; ++l) {
    const int ci = in_channels(cfg, l), co = out_channels(cfg, l);
    Rng rng(mix_seed(seed, 0x696e6974ULL, static_cast<uint64_t>(l)));  // "init"
    const double bound = std::sqrt(6.0 / (static_cast<double>(ci) * cfg.kernel * cfg.kernel));
    ad::Tensor k({co, ci, cfg.kernel, cfg.kernel});
    for (double& v : k.data) v = rng.uniform(-bound, bound);
    p.kernels.push_back(std::move(k));
    p.biases.push_back(ad::Tensor::zeros({co}));
  }
  return p;
}

ad::Var image_to_channels(const ad::Var& x) {
  const ad::Tensor& v = x.value();
  if (v.rank() != 3 || v.shape[2] != 2)
    throw std::invalid_argument("image_to_channels: expected [H,W,2], got " +
                                ad::shape_str(v.shape));
  const int h = v.shape[0], w = v.shape[1];
  ad::Tensor out({2, h, w});
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx) {
      const size_t i = (static_cast<size_t>(y) * w + xx) * 2;
      out.data[static_cast<size_t>(y) * w + xx] = v.data[i];
      out.data[static_cast<size_t>(h) * w + static_cast<size_t>(y) * w + xx] = v.data[i + 1];
    }
  ad::NodeId ix = x.id;
  return x.tape->make_node(std::move(out), {ix}, [ix, h, w](ad::Tape& t, const ad::Tensor& up) {
    if (!t.requires_grad(ix)) return;
    ad::Tensor& g = t.grad_slot(ix);
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        const size_t i = (static_cast<size_t>(y) * w + xx) * 2;
        g.data[i] += up.data[static_cast<size_t>(y) * w + xx];
        g.data[i + 1] += up.data[static_cast<size_t>(h) * w + static_cast<size_t>(y) * w + xx];
      }
  });
}

ad::Var channels_to_image(const ad::Var& x) {
  const ad::Tensor& v = x.value();
  if (v.rank() != 3 || v.shape[0] != 2)
    throw std::invalid_argument("channels_to_image: expected [2,H,W], got " +
                                ad::shape_str(v.shape));
  const int h = v.shape[1], w = v.shape[2];
  ad::Tensor out({h, w, 2});
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx) {
      const size_t i = (static_cast<size_t>(y) * w + xx) * 2;
      out.data[i] = v.data[static_cast<size_t>(y) * w + xx];
      out.data[i + 1] = v.data[static_cast<size_t>(h) * w + static_cast<size_t>(y) * w + xx];
    }
  ad::NodeId ix = x.id;
  return x.tape->make_node(std::move(out), {ix}, [ix, h, w](ad::Tape& t, const ad::Tensor& up) {
    if (!t.requires_grad(ix)) return;
    ad::Tensor& g = t.grad_slot(ix);
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        const size_t i = (static_cast<size_t>(y) * w + xx) * 2;
        g.data[static_cast<size_t>(y) * w + xx] += up.data[i];
        g.data[static_cast<size_t>(h) * w + static_cast<size_t>(y) * w + xx] += up.data[i + 1];
      }
  });
}

namespace {

DenoiserVars materialize(ad::Tape& tape, const DenoiserParams& p, bool trainable) {
  p.config.validate();
  if (static_cast<int>(p.kernels.size()) != p.config.depth ||
      static_cast<int>(p.biases.size()) != p.config.depth)
    throw std::invalid_argument("denoiser: parameter layer count does not match config depth");
  DenoiserVars d;
  d.config = p.config;
  for (int l = 0; l < p.config.depth; ++l) {
    const auto& k = p.kernels[static_cast<size_t>(l)];
    const auto& b = p.biases[static_cast<size_t>(l)];
    d.kernels.push_back(trainable ? tape.leaf(k) : tape.constant(k));
    d.biases.push_back(trainable ? tape.leaf(b) : tape.constant(b));
  }
  return d;
}

}  // namespace

DenoiserVars denoiser_leaves(ad::Tape& tape, const DenoiserParams& p) {
  return materialize(tape, p, true);
}

DenoiserVars denoiser_constants(ad::Tape& tape, const DenoiserParams& p) {
  return materialize(tape, p, false);
}

ad::Var denoise(const DenoiserVars& d, const ad::Var& x) {
  ad::Var h = image_to_channels(x);
  for (int l = 0; l < d.config.depth; ++l) {
    h = ad::conv2d(h, d.kernels[static_cast<size_t>(l)], d.biases[static_cast<size_t>(l)]);
    if (l + 1 < d.config.depth) h = ad::relu(h);
  }
  ad::Var out = channels_to_image(h);
  return d.config.residual ? ad::add(x, out) : out;
}

ad::Tensor denoise_eval(const DenoiserParams& p, const ad::Tensor& x) {
  ad::Tape tape;
  DenoiserVars d = denoiser_constants(tape, p);
  return denoise(d, tape.constant(x)).value();
}

}  // namespace smug
