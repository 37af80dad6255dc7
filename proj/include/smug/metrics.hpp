#pragma once

#include <span>

#include "smug/tensor.hpp"

namespace smug {

// |a| per pixel of a [H,W,2] complex image -> [H,W].
ad::Tensor magnitude_image(const ad::Tensor& img);

double data_range_of(const ad::Tensor& target);  // max magnitude

// PSNR over magnitude images: 10 log10(range^2 / MSE). Equal inputs yield
// the +infinity sentinel (is_infinite set, serialized as null-with-flag).
struct PsnrValue {
  double db = 0.0;
  bool is_infinite = false;
};

PsnrValue psnr(const ad::Tensor& a, const ad::Tensor& b, double data_range);

// Mean local SSIM over magnitude images: 11x11 Gaussian window (sigma 1.5),
// K1 = 0.01, K2 = 0.03, valid windows only. Throws when the image is smaller
// than the window.
double ssim(const ad::Tensor& a, const ad::Tensor& b, double data_range);

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
  int n = 0;
  bool has_infinite = false;
};

Aggregate aggregate_metric(std::span<const double> values);

}  // namespace smug
