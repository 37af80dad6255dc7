#include "smug/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace smug {

ad::Tensor magnitude_image(const ad::Tensor& img) {
  if (img.rank() != 3 || img.shape[2] != 2)
    throw std::invalid_argument("magnitude_image: expected [H,W,2], got " +
                                ad::shape_str(img.shape));
  ad::Tensor out({img.shape[0], img.shape[1]});
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = std::hypot(img.data[2 * i], img.data[2 * i + 1]);
  return out;
}

double data_range_of(const ad::Tensor& target) {
  ad::Tensor m = magnitude_image(target);
  double r = 0.0;
  for (double v : m.data) r = std::max(r, v);
  return r;
}

PsnrValue psnr(const ad::Tensor& a, const ad::Tensor& b, double data_range) {
  if (!a.same_shape(b))
    throw std::invalid_argument("psnr: shapes differ: " + ad::shape_str(a.shape) + " vs " +
                                ad::shape_str(b.shape));
  if (data_range <= 0.0) throw std::invalid_argument("psnr: data_range must be positive");
  ad::Tensor ma = magnitude_image(a), mb = magnitude_image(b);
  double mse = 0.0;
  for (size_t i = 0; i < ma.data.size(); ++i) {
    const double d = ma.data[i] - mb.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(ma.data.size());
  if (mse == 0.0) return {std::numeric_limits<double>::infinity(), true};
  return {10.0 * std::log10(data_range * data_range / mse), false};
}

namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;

const double* gaussian_window() {
  static const auto w = [] {
    std::array<double, kWindow * kWindow> win{};
    const int c = kWindow / 2;
    double sum = 0.0;
    for (int y = 0; y < kWindow; ++y)
      for (int x = 0; x < kWindow; ++x) {
        const double d2 = (y - c) * (y - c) + (x - c) * (x - c);
        win[static_cast<size_t>(y) * kWindow + x] =
            std::exp(-d2 / (2.0 * kWindowSigma * kWindowSigma));
        sum += win[static_cast<size_t>(y) * kWindow + x];
      }
    for (double& v : win) v /= sum;
    return win;
  }();
  return w.data();
}

}  // namespace

double ssim(const ad::Tensor& a, const ad::Tensor& b, double data_range) {
  if (!a.same_shape(b))
    throw std::invalid_argument("ssim: shapes differ: " + ad::shape_str(a.shape) + " vs " +
                                ad::shape_str(b.shape));
  if (data_range <= 0.0) throw std::invalid_argument("ssim: data_range must be positive");
  ad::Tensor ma = magnitude_image(a), mb = magnitude_image(b);
  const int h = ma.shape[0], w = ma.shape[1];
  if (h < kWindow || w < kWindow)
    throw std::invalid_argument("ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                                " smaller than the " + std::to_string(kWindow) + "x" +
                                std::to_string(kWindow) + " window");
  const double* win = gaussian_window();
  const double c1 = (kK1 * data_range) * (kK1 * data_range);
  const double c2 = (kK2 * data_range) * (kK2 * data_range);

  double total = 0.0;
  int count = 0;
  for (int y0 = 0; y0 + kWindow <= h; ++y0) {
    for (int x0 = 0; x0 + kWindow <= w; ++x0) {
      double mu_a = 0.0, mu_b = 0.0, aa = 0.0, bb = 0.0, ab = 0.0;
      for (int wy = 0; wy < kWindow; ++wy) {
        const double* ra = &ma.data[static_cast<size_t>(y0 + wy) * w + x0];
        const double* rb = &mb.data[static_cast<size_t>(y0 + wy) * w + x0];
        const double* rw = &win[static_cast<size_t>(wy) * kWindow];
        for (int wx = 0; wx < kWindow; ++wx) {
          mu_a += rw[wx] * ra[wx];
          mu_b += rw[wx] * rb[wx];
          aa += rw[wx] * ra[wx] * ra[wx];
          bb += rw[wx] * rb[wx] * rb[wx];
          ab += rw[wx] * ra[wx] * rb[wx];
        }
      }
      const double var_a = aa - mu_a * mu_a;
      const double var_b = bb - mu_b * mu_b;
      const double cov = ab - mu_a * mu_b;
      const double numer = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
      const double denom = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
      total += numer / denom;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

Aggregate aggregate_metric(std::span<const double> values) {
  Aggregate agg;
  agg.n = static_cast<int>(values.size());
  if (values.empty()) return agg;
  for (double v : values)
    if (std::isinf(v)) agg.has_infinite = true;
  double sum = 0.0;
  for (double v : values) sum += v;
  agg.mean = sum / static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) {
    const double d = v - agg.mean;
    var += d * d;
  }
  agg.stddev = std::sqrt(var / static_cast<double>(values.size()));
  return agg;
}

}  // namespace smug
