#ifndef APN_TEST_HELPERS_HPP
#define APN_TEST_HELPERS_HPP

#include <vector>

#include "apn/rng.hpp"
#include "apn/tensor.hpp"

namespace apn::test {

template <typename T>
Tensor<T> random_tensor(std::vector<size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data) v = (T)rng.uniform(lo, hi);
  return t;
}

// Brute-force direct convolution; the independent oracle for conv2d.
template <typename T>
Tensor<T> conv2d_direct(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>* bias, int stride,
                        int pad) {
  const int n = (int)in.dim(0), cin = (int)in.dim(1), h = (int)in.dim(2), wdt = (int)in.dim(3);
  const int cout = (int)w.dim(0), k = (int)w.dim(2);
  const int oh = (h + 2 * pad - k) / stride + 1;
  const int ow = (wdt + 2 * pad - k) / stride + 1;
  Tensor<T> out({(size_t)n, (size_t)cout, (size_t)oh, (size_t)ow});
  for (int b = 0; b < n; ++b)
    for (int co = 0; co < cout; ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          T acc = bias ? (*bias)[co] : T(0);
          for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * stride - pad + ky;
                const int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wdt) continue;
                acc += in.at(b, ci, iy, ix) * w.at(co, ci, ky, kx);
              }
          out.at(b, co, oy, ox) = acc;
        }
  return out;
}

// Independent per-pixel align-corners bilinear interpolation oracle.
template <typename T>
T bilinear_at(const Tensor<T>& src, int y, int x, int oh, int ow) {
  const int h = (int)src.dim(0), w = (int)src.dim(1);
  const double sy = oh <= 1 ? 0.0 : (double)y * (h - 1) / (oh - 1);
  const double sx = ow <= 1 ? 0.0 : (double)x * (w - 1) / (ow - 1);
  const int y0 = std::min((int)sy, h - 1), y1 = std::min(y0 + 1, h - 1);
  const int x0 = std::min((int)sx, w - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = sy - y0, fx = sx - x0;
  const double v = (double)src.at(y0, x0) * (1 - fx) * (1 - fy) +
                   (double)src.at(y0, x1) * fx * (1 - fy) +
                   (double)src.at(y1, x0) * (1 - fx) * fy + (double)src.at(y1, x1) * fx * fy;
  return (T)v;
}

}  // namespace apn::test

#endif
