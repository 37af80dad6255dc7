#include "smug/fft.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

namespace smug::mri {

namespace {

using cplx = std::complex<double>;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

void fft_radix2(std::vector<cplx>& a, bool inverse) {
  const int n = static_cast<int>(a.size());
  // bit-reversal permutation
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * M_PI / len;
    for (int i = 0; i < n; i += len) {
      for (int j = 0; j < len / 2; ++j) {
        const cplx w = std::polar(1.0, ang * j);
        const cplx u = a[i + j];
        const cplx v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
      }
    }
  }
}

void dft_direct(std::vector<cplx>& a, bool inverse) {
  const int n = static_cast<int>(a.size());
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<cplx> roots(n);
  for (int r = 0; r < n; ++r) roots[r] = std::polar(1.0, sign * 2.0 * M_PI * r / n);
  std::vector<cplx> out(n);
  for (int k = 0; k < n; ++k) {
    cplx s(0.0, 0.0);
    for (int j = 0; j < n; ++j) s += a[j] * roots[static_cast<int>((int64_t(j) * k) % n)];
    out[k] = s;
  }
  a = std::move(out);
}

void transform_line(std::vector<cplx>& a, bool inverse) {
  const int n = static_cast<int>(a.size());
  if (n == 1) return;
  if (is_pow2(n))
    fft_radix2(a, inverse);
  else
    dft_direct(a, inverse);
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  for (cplx& v : a) v *= s;
}

}  // namespace

void fft2(ad::Tensor& img, bool inverse) {
  if (img.rank() != 3 || img.shape[2] != 2)
    throw std::invalid_argument("fft2: expected [H,W,2] tensor, got " + ad::shape_str(img.shape));
  const int h = img.shape[0], w = img.shape[1];
  std::vector<cplx> line(std::max(h, w));

  line.resize(w);
  for (int y = 0; y < h; ++y) {
    double* row = &img.data[static_cast<size_t>(y) * w * 2];
    for (int x = 0; x < w; ++x) line[x] = cplx(row[2 * x], row[2 * x + 1]);
    transform_line(line, inverse);
    for (int x = 0; x < w; ++x) {
      row[2 * x] = line[x].real();
      row[2 * x + 1] = line[x].imag();
    }
  }

  line.resize(h);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) {
      const size_t i = (static_cast<size_t>(y) * w + x) * 2;
      line[y] = cplx(img.data[i], img.data[i + 1]);
    }
    transform_line(line, inverse);
    for (int y = 0; y < h; ++y) {
      const size_t i = (static_cast<size_t>(y) * w + x) * 2;
      img.data[i] = line[y].real();
      img.data[i + 1] = line[y].imag();
    }
  }
}

ad::Tensor fft2_copy(const ad::Tensor& img, bool inverse) {
  ad::Tensor out = img;
  fft2(out, inverse);
  return out;
}

}  // namespace smug::mri
