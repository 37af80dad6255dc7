#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smug/tape.hpp"
#include "smug/tensor.hpp"

namespace smug::mri {

// Complex images are [H,W,2] tensors, k-space data [C,H,W,2], with the
// trailing axis holding real/imaginary parts.

// Cartesian phase-encode row mask: the central acs_rows rows are always
// kept, the remaining budget round(height/acceleration) - acs_rows is filled
// with uniformly random rows drawn from the given seed.
struct SamplingMask {
  int height = 0;
  int width = 0;
  int acceleration = 1;
  int acs_rows = 0;
  uint64_t seed = 0;
  std::vector<int> kept_rows;  // sorted, unique

  bool row_kept(int r) const;
  double sampling_rate() const {
    return static_cast<double>(kept_rows.size()) / static_cast<double>(height);
  }
};

SamplingMask build_cartesian_mask(int height, int width, int acceleration, int acs_rows,
                                  uint64_t seed);

// JSON object {height, width, acceleration, acs_rows, seed, kept_rows};
// kept_rows is stored explicitly so consumers never re-derive it.
std::string mask_to_json(const SamplingMask& mask);
SamplingMask mask_from_json(const std::string& text);

// Per-coil complex weightings, sum-of-squares normalized so that
// sum_c |S_c(p)|^2 = 1 at every pixel.
struct SensitivityMaps {
  int height = 0;
  int width = 0;
  int n_coils = 0;
  ad::Tensor maps;  // [C,H,W,2]
};

// Smooth complex Gaussian-lobe maps centered at n_coils equispaced border
// points, then normalized. Deterministic in its arguments.
SensitivityMaps synth_sensitivities(int height, int width, int n_coils);

// A = M F S_c with the orthonormal 2-D DFT convention; with a full mask and
// a single unit-magnitude coil A is unitary.
struct AcquisitionModel {
  SamplingMask mask;
  SensitivityMaps sens;

  int height() const { return mask.height; }
  int width() const { return mask.width; }
  int n_coils() const { return sens.n_coils; }
};

AcquisitionModel make_model(SamplingMask mask, SensitivityMaps sens);

// y_c = M o F(S_c o x); masked-out rows are exactly zero.
ad::Tensor forward(const AcquisitionModel& model, const ad::Tensor& x);

// x~ = sum_c conj(S_c) o F^{-1}(M o y_c); exact adjoint of forward.
ad::Tensor adjoint(const AcquisitionModel& model, const ad::Tensor& y);

// A^H A x, computed as adjoint(forward(x)).
ad::Tensor normal(const AcquisitionModel& model, const ad::Tensor& x);

// Conjugate-gradient solve of (A^H A + lambda I) x = rhs, started from x0,
// stopping when ||r||_2 <= tol * ||rhs||_2 or after max_iter iterations.
struct DcResult {
  ad::Tensor x;
  double residual_norm = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> residual_history;  // includes the initial residual
};

// rhs = A^H y + lambda z, CG warm-started at z.
DcResult dc_solve(const AcquisitionModel& model, const ad::Tensor& z, const ad::Tensor& y,
                  double lambda, double tol, int max_iter);

// Same solve with the image-domain term u passed directly: rhs = u + lambda z.
// The reconstruction pipeline uses this form with u the (possibly perturbed)
// network input A^H y.
DcResult dc_solve_image(const AcquisitionModel& model, const ad::Tensor& z,
                        const ad::Tensor& u, double lambda, double tol, int max_iter);

// Gradient of the solve w.r.t. z: lambda * (A^H A + lambda I)^{-1} upstream,
// computed by a second CG solve (the system is self-adjoint).
ad::Tensor dc_solve_grad(const AcquisitionModel& model, double lambda, double tol,
                         int max_iter, const ad::Tensor& upstream);

// --- differentiable nodes ---

// A and A^H as linear tape nodes (backward applies the exact adjoint).
ad::Var forward_node(const ad::Var& x, const AcquisitionModel& model);
ad::Var adjoint_node(const ad::Var& y, const AcquisitionModel& model);

struct DcNodeInfo {
  double residual_norm = 0.0;
  bool converged = false;
  int iterations = 0;
};

// Data-consistency step as a tape node: value solves
// (A^H A + lambda I) x = u + lambda z from x0 = z; backward solves the same
// system on the upstream gradient (grad_u = s, grad_z = lambda * s).
// The model must outlive the tape.
ad::Var dc_consistency(const ad::Var& z, const ad::Var& u, const AcquisitionModel& model,
                       double lambda, double tol, int max_iter, DcNodeInfo* info);

}  // namespace smug::mri
