#include "smug/mri.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"
#include "smug/fft.hpp"
#include "smug/rng.hpp"

namespace smug::mri {

bool SamplingMask::row_kept(int r) const {
  return std::binary_search(kept_rows.begin(), kept_rows.end(), r);
}

SamplingMask build_cartesian_mask(int height, int width, int acceleration, int acs_rows,
                                  uint64_t seed) {
  if (height < 1 || width < 1)
    throw std::invalid_argument("build_cartesian_mask: non-positive image extent");
  if (acceleration < 1)
    throw std::invalid_argument("build_cartesian_mask: acceleration must be >= 1");
  if (acs_rows < 0) throw std::invalid_argument("build_cartesian_mask: negative acs_rows");
  const int budget = static_cast<int>(
      std::llround(static_cast<double>(height) / static_cast<double>(acceleration)));
  if (budget < acs_rows)
    throw std::invalid_argument("build_cartesian_mask: row budget " + std::to_string(budget) +
                                " is smaller than acs_rows " + std::to_string(acs_rows));

  SamplingMask m;
  m.height = height;
  m.width = width;
  m.acceleration = acceleration;
  m.acs_rows = acs_rows;
  m.seed = seed;

  const int acs_start = (height - acs_rows) / 2;
  std::vector<char> kept(static_cast<size_t>(height), 0);
  for (int r = acs_start; r < acs_start + acs_rows; ++r) kept[static_cast<size_t>(r)] = 1;

  std::vector<int> candidates;
  for (int r = 0; r < height; ++r)
    if (!kept[static_cast<size_t>(r)]) candidates.push_back(r);
  Rng rng(mix_seed(seed, 0x6d61736bULL));  // "mask"
  rng.shuffle(candidates);
  for (int i = 0; i < budget - acs_rows; ++i) kept[static_cast<size_t>(candidates[i])] = 1;

  for (int r = 0; r < height; ++r)
    if (kept[static_cast<size_t>(r)]) m.kept_rows.push_back(r);
  return m;
}

std::string mask_to_json(const SamplingMask& mask) {
  nlohmann::json j;
  j["height"] = mask.height;
  j["width"] = mask.width;
  j["acceleration"] = mask.acceleration;
  j["acs_rows"] = mask.acs_rows;
  j["seed"] = mask.seed;
  j["kept_rows"] = mask.kept_rows;
  return j.dump();
}

SamplingMask mask_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  SamplingMask m;
  m.height = j.at("height").get<int>();
  m.width = j.at("width").get<int>();
  m.acceleration = j.at("acceleration").get<int>();
  m.acs_rows = j.at("acs_rows").get<int>();
  m.seed = j.at("seed").get<uint64_t>();
  m.kept_rows = j.at("kept_rows").get<std::vector<int>>();
  if (!std::is_sorted(m.kept_rows.begin(), m.kept_rows.end()))
    throw std::invalid_argument("mask_from_json: kept_rows not sorted");
  return m;
}

SensitivityMaps synth_sensitivities(int height, int width, int n_coils) {
  if (n_coils < 1) throw std::invalid_argument("synth_sensitivities: n_coils must be >= 1");
  SensitivityMaps s;
  s.height = height;
  s.width = width;
  s.n_coils = n_coils;
  s.maps = ad::Tensor({n_coils, height, width, 2});

  const double cy = 0.5 * (height - 1), cx = 0.5 * (width - 1);
  const double min_dim = static_cast<double>(std::min(height, width));
  const double lobe_radius = 0.55 * min_dim;
  const double lobe_sigma = 0.7 * min_dim;

  // fixed ring rotation keeps coil pairs off the mask axis, so A^H A does
  // not degenerate to a projection for small coil counts
  const double ring_offset = 0.35;
  for (int c = 0; c < n_coils; ++c) {
    const double ang = 2.0 * M_PI * c / n_coils + ring_offset;
    const double py = cy + lobe_radius * std::sin(ang);
    const double px = cx + lobe_radius * std::cos(ang);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double d2 = (y - py) * (y - py) + (x - px) * (x - px);
        const double mag = std::exp(-d2 / (2.0 * lobe_sigma * lobe_sigma));
        // mild coil-specific linear phase, smooth across the image
        const double phase =
            0.4 * M_PI * ((x - cx) * std::cos(ang) + (y - cy) * std::sin(ang)) / min_dim;
        const size_t i = ((static_cast<size_t>(c) * height + y) * width + x) * 2;
        s.maps.data[i] = mag * std::cos(phase);
        s.maps.data[i + 1] = mag * std::sin(phase);
      }
    }
  }

  // pixelwise sum-of-squares normalization
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double sos = 0.0;
      for (int c = 0; c < n_coils; ++c) {
        const size_t i = ((static_cast<size_t>(c) * height + y) * width + x) * 2;
        sos += s.maps.data[i] * s.maps.data[i] + s.maps.data[i + 1] * s.maps.data[i + 1];
      }
      const double inv = 1.0 / std::sqrt(sos);
      for (int c = 0; c < n_coils; ++c) {
        const size_t i = ((static_cast<size_t>(c) * height + y) * width + x) * 2;
        s.maps.data[i] *= inv;
        s.maps.data[i + 1] *= inv;
      }
    }
  }
  return s;
}

AcquisitionModel make_model(SamplingMask mask, SensitivityMaps sens) {
  if (mask.height != sens.height || mask.width != sens.width)
    throw std::invalid_argument("make_model: mask extent " + std::to_string(mask.height) + "x" +
                                std::to_string(mask.width) + " does not match maps " +
                                std::to_string(sens.height) + "x" + std::to_string(sens.width));
  return AcquisitionModel{std::move(mask), std::move(sens)};
}

namespace {

void check_image(const AcquisitionModel& m, const ad::Tensor& x, const char* op) {
  if (x.rank() != 3 || x.shape[0] != m.height() || x.shape[1] != m.width() || x.shape[2] != 2)
    throw std::invalid_argument(std::string(op) + ": expected image [" +
                                std::to_string(m.height()) + "," + std::to_string(m.width()) +
                                ",2], got " + ad::shape_str(x.shape));
}

void check_kspace(const AcquisitionModel& m, const ad::Tensor& y, const char* op) {
  if (y.rank() != 4 || y.shape[0] != m.n_coils() || y.shape[1] != m.height() ||
      y.shape[2] != m.width() || y.shape[3] != 2)
    throw std::invalid_argument(std::string(op) + ": expected k-space [" +
                                std::to_string(m.n_coils()) + "," + std::to_string(m.height()) +
                                "," + std::to_string(m.width()) + ",2], got " +
                                ad::shape_str(y.shape));
}

void zero_unkept_rows(const SamplingMask& mask, ad::Tensor& img) {
  const int h = img.shape[0], w = img.shape[1];
  size_t kept_idx = 0;
  for (int y = 0; y < h; ++y) {
    const bool kept = kept_idx < mask.kept_rows.size() && mask.kept_rows[kept_idx] == y;
    if (kept) {
      ++kept_idx;
      continue;
    }
    double* row = &img.data[static_cast<size_t>(y) * w * 2];
    std::fill(row, row + 2 * w, 0.0);
  }
}

}  // namespace

ad::Tensor forward(const AcquisitionModel& model, const ad::Tensor& x) {
  check_image(model, x, "forward");
  const int h = model.height(), w = model.width(), nc = model.n_coils();
  ad::Tensor y({nc, h, w, 2});
  ad::Tensor tmp({h, w, 2});
  for (int c = 0; c < nc; ++c) {
    const double* sm = &model.sens.maps.data[static_cast<size_t>(c) * h * w * 2];
    for (size_t i = 0; i < tmp.data.size(); i += 2) {
      const double sr = sm[i], si = sm[i + 1];
      const double xr = x.data[i], xi = x.data[i + 1];
      tmp.data[i] = sr * xr - si * xi;
      tmp.data[i + 1] = sr * xi + si * xr;
    }
    fft2(tmp, false);
    zero_unkept_rows(model.mask, tmp);
    std::copy(tmp.data.begin(), tmp.data.end(),
              y.data.begin() + static_cast<int64_t>(c) * h * w * 2);
  }
  return y;
}

ad::Tensor adjoint(const AcquisitionModel& model, const ad::Tensor& y) {
  check_kspace(model, y, "adjoint");
  const int h = model.height(), w = model.width(), nc = model.n_coils();
  ad::Tensor x({h, w, 2});
  ad::Tensor tmp({h, w, 2});
  for (int c = 0; c < nc; ++c) {
    std::copy(y.data.begin() + static_cast<int64_t>(c) * h * w * 2,
              y.data.begin() + static_cast<int64_t>(c + 1) * h * w * 2, tmp.data.begin());
    zero_unkept_rows(model.mask, tmp);  // adjoint ignores masked-out rows
    fft2(tmp, true);
    const double* sm = &model.sens.maps.data[static_cast<size_t>(c) * h * w * 2];
    for (size_t i = 0; i < tmp.data.size(); i += 2) {
      const double sr = sm[i], si = sm[i + 1];
      const double vr = tmp.data[i], vi = tmp.data[i + 1];
      // conj(S_c) * v
      x.data[i] += sr * vr + si * vi;
      x.data[i + 1] += sr * vi - si * vr;
    }
  }
  return x;
}

ad::Tensor normal(const AcquisitionModel& model, const ad::Tensor& x) {
  return adjoint(model, forward(model, x));
}

namespace {

DcResult cg_solve(const AcquisitionModel& model, double lambda, const ad::Tensor& rhs,
                  const ad::Tensor& x0, double tol, int max_iter) {
  auto op = [&](const ad::Tensor& v) {
    ad::Tensor r = normal(model, v);
    r.axpy_(lambda, v);
    return r;
  };

  DcResult res;
  res.x = x0;
  ad::Tensor r = rhs;
  r.sub_(op(res.x));
  ad::Tensor p = r;
  double rs = ad::norm2sq(r);
  const double rhs_norm = ad::norm2(rhs);
  const double threshold = tol * rhs_norm;
  res.residual_history.push_back(std::sqrt(rs));

  for (int it = 0; it < max_iter; ++it) {
    if (std::sqrt(rs) <= threshold) break;
    ad::Tensor ap = op(p);
    const double p_ap = ad::dot(p, ap);
    if (p_ap <= 0.0) break;  // operator is SPD; guard against total breakdown
    const double alpha = rs / p_ap;
    res.x.axpy_(alpha, p);
    r.axpy_(-alpha, ap);
    const double rs_new = ad::norm2sq(r);
    res.residual_history.push_back(std::sqrt(rs_new));
    const double beta = rs_new / rs;
    p.scale_(beta);
    p.add_(r);
    rs = rs_new;
    res.iterations = it + 1;
  }
  res.residual_norm = std::sqrt(rs);
  res.converged = res.residual_norm <= threshold;
  return res;
}

}  // namespace

DcResult dc_solve_image(const AcquisitionModel& model, const ad::Tensor& z,
                        const ad::Tensor& u, double lambda, double tol, int max_iter) {
  check_image(model, z, "dc_solve");
  check_image(model, u, "dc_solve");
  if (lambda <= 0.0) throw std::invalid_argument("dc_solve: lambda must be positive");
  if (tol <= 0.0) throw std::invalid_argument("dc_solve: tol must be positive");
  ad::Tensor rhs = u;
  rhs.axpy_(lambda, z);
  return cg_solve(model, lambda, rhs, z, tol, max_iter);
}

DcResult dc_solve(const AcquisitionModel& model, const ad::Tensor& z, const ad::Tensor& y,
                  double lambda, double tol, int max_iter) {
  check_kspace(model, y, "dc_solve");
  return dc_solve_image(model, z, adjoint(model, y), lambda, tol, max_iter);
}

ad::Tensor dc_solve_grad(const AcquisitionModel& model, double lambda, double tol,
                         int max_iter, const ad::Tensor& upstream) {
  check_image(model, upstream, "dc_solve_grad");
  ad::Tensor zero = ad::Tensor::zeros(upstream.shape);
  DcResult r = cg_solve(model, lambda, upstream, zero, tol, max_iter);
  r.x.scale_(lambda);
  return r.x;
}

ad::Var forward_node(const ad::Var& x, const AcquisitionModel& model) {
  const AcquisitionModel* m = &model;
  return ad::apply_linear(x, ad::LinearOp{
                                 [m](const ad::Tensor& v) { return forward(*m, v); },
                                 [m](const ad::Tensor& v) { return adjoint(*m, v); },
                             });
}

ad::Var adjoint_node(const ad::Var& y, const AcquisitionModel& model) {
  const AcquisitionModel* m = &model;
  return ad::apply_linear(y, ad::LinearOp{
                                 [m](const ad::Tensor& v) { return adjoint(*m, v); },
                                 [m](const ad::Tensor& v) { return forward(*m, v); },
                             });
}

ad::Var dc_consistency(const ad::Var& z, const ad::Var& u, const AcquisitionModel& model,
                       double lambda, double tol, int max_iter, DcNodeInfo* info) {
  if (z.tape != u.tape)
    throw std::invalid_argument("dc_consistency: operands live on different tapes");
  DcResult res = dc_solve_image(model, z.value(), u.value(), lambda, tol, max_iter);
  if (info) {
    info->residual_norm = res.residual_norm;
    info->converged = res.converged;
    info->iterations = res.iterations;
  }
  const AcquisitionModel* m = &model;
  ad::NodeId iz = z.id, iu = u.id;
  return z.tape->make_node(
      std::move(res.x), {iz, iu},
      [iz, iu, m, lambda, tol, max_iter](ad::Tape& t, const ad::Tensor& up) {
        ad::Tensor zero = ad::Tensor::zeros(up.shape);
        DcResult s = cg_solve(*m, lambda, up, zero, tol, max_iter);
        t.accumulate(iu, s.x);
        t.accumulate_scaled(iz, lambda, s.x);
      });
}

}  // namespace smug::mri
