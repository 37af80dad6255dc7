#pragma once

#include "smug/tensor.hpp"

namespace smug::mri {

// In-place orthonormal (unitary) 2-D DFT over a [H,W,2] tensor, the trailing
// axis holding interleaved real/imaginary parts. Radix-2 for power-of-two
// extents, direct O(n^2) transform otherwise; both scaled by 1/sqrt(n) per
// axis so forward and inverse are exact adjoints of each other.
void fft2(ad::Tensor& img, bool inverse);

ad::Tensor fft2_copy(const ad::Tensor& img, bool inverse);

}  // namespace smug::mri
