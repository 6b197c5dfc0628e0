#include "apn/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <memory>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace apn::kernels {

bool parallel_ok() {
#ifdef _OPENMP
  return omp_get_max_threads() > 1 && !omp_in_parallel();
#else
  return false;
#endif
}

// ---------- naive direct-loop reference ----------

template <typename T>
void conv2d_fwd_ref(const T* in, const T* w, const T* bias, T* out, const ConvShape& s) {
  const int oh = s.oh(), ow = s.ow();
  for (int n = 0; n < s.n; ++n)
    for (int co = 0; co < s.cout; ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          T acc = bias ? bias[co] : T(0);
          for (int ci = 0; ci < s.cin; ++ci)
            for (int ky = 0; ky < s.k; ++ky)
              for (int kx = 0; kx < s.k; ++kx) {
                const int iy = oy * s.stride - s.pad + ky;
                const int ix = ox * s.stride - s.pad + kx;
                if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w) continue;
                acc += in[(((size_t)n * s.cin + ci) * s.h + iy) * s.w + ix] *
                       w[(((size_t)co * s.cin + ci) * s.k + ky) * s.k + kx];
              }
          out[(((size_t)n * s.cout + co) * oh + oy) * ow + ox] = acc;
        }
}

template <typename T>
void conv2d_bwd_input_ref(const T* gout, const T* w, T* gin, const ConvShape& s) {
  const int oh = s.oh(), ow = s.ow();
  for (int n = 0; n < s.n; ++n)
    for (int co = 0; co < s.cout; ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const T g = gout[(((size_t)n * s.cout + co) * oh + oy) * ow + ox];
          for (int ci = 0; ci < s.cin; ++ci)
            for (int ky = 0; ky < s.k; ++ky)
              for (int kx = 0; kx < s.k; ++kx) {
                const int iy = oy * s.stride - s.pad + ky;
                const int ix = ox * s.stride - s.pad + kx;
                if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w) continue;
                gin[(((size_t)n * s.cin + ci) * s.h + iy) * s.w + ix] +=
                    g * w[(((size_t)co * s.cin + ci) * s.k + ky) * s.k + kx];
              }
        }
}

template <typename T>
void conv2d_bwd_weight_ref(const T* gout, const T* in, T* gw, T* gbias, const ConvShape& s) {
  const int oh = s.oh(), ow = s.ow();
  for (int n = 0; n < s.n; ++n)
    for (int co = 0; co < s.cout; ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const T g = gout[(((size_t)n * s.cout + co) * oh + oy) * ow + ox];
          if (gbias) gbias[co] += g;
          for (int ci = 0; ci < s.cin; ++ci)
            for (int ky = 0; ky < s.k; ++ky)
              for (int kx = 0; kx < s.k; ++kx) {
                const int iy = oy * s.stride - s.pad + ky;
                const int ix = ox * s.stride - s.pad + kx;
                if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w) continue;
                gw[(((size_t)co * s.cin + ci) * s.k + ky) * s.k + kx] +=
                    g * in[(((size_t)n * s.cin + ci) * s.h + iy) * s.w + ix];
              }
        }
}

// ---------- im2col production path ----------

namespace {

// uninitialized scratch; every element is written before it is read
template <typename T>
struct Scratch {
  explicit Scratch(size_t n) : p(new T[n]) {}
  T* data() { return p.get(); }
  std::unique_ptr<T[]> p;
};

// patches[r, c] with r = oy*ow + ox and c = (ci*k + ky)*k + kx; zero padding
// materializes as zeros so the inner loops need no bounds checks.
template <typename T>
void im2col(const T* in, const ConvShape& s, T* patches) {
  const int oh = s.oh(), ow = s.ow();
  const size_t cols = s.patch_cols();
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      T* row = patches + ((size_t)oy * ow + ox) * cols;
      size_t c = 0;
      for (int ci = 0; ci < s.cin; ++ci) {
        const T* plane = in + (size_t)ci * s.h * s.w;
        for (int ky = 0; ky < s.k; ++ky) {
          const int iy = oy * s.stride - s.pad + ky;
          if (iy < 0 || iy >= s.h) {
            for (int kx = 0; kx < s.k; ++kx) row[c++] = T(0);
            continue;
          }
          const T* srow = plane + (size_t)iy * s.w;
          const int ix0 = ox * s.stride - s.pad;
          for (int kx = 0; kx < s.k; ++kx) {
            const int ix = ix0 + kx;
            row[c++] = (ix < 0 || ix >= s.w) ? T(0) : srow[ix];
          }
        }
      }
    }
}

template <typename T>
void col2im_add(const T* patches, const ConvShape& s, T* gin) {
  const int oh = s.oh(), ow = s.ow();
  const size_t cols = s.patch_cols();
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      const T* row = patches + ((size_t)oy * ow + ox) * cols;
      size_t c = 0;
      for (int ci = 0; ci < s.cin; ++ci) {
        T* plane = gin + (size_t)ci * s.h * s.w;
        for (int ky = 0; ky < s.k; ++ky) {
          const int iy = oy * s.stride - s.pad + ky;
          if (iy < 0 || iy >= s.h) {
            c += s.k;
            continue;
          }
          T* drow = plane + (size_t)iy * s.w;
          const int ix0 = ox * s.stride - s.pad;
          for (int kx = 0; kx < s.k; ++kx) {
            const int ix = ix0 + kx;
            if (ix >= 0 && ix < s.w) drow[ix] += row[c];
            ++c;
          }
        }
      }
    }
}

// Fixed-lane partial sums: the lanes are independent, so the loop vectorizes
// under strict FP semantics, and the summation order stays deterministic.
template <typename T>
inline T dot_span(const T* a, const T* b, size_t n) {
  T lane[8] = {};
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int j = 0; j < 8; ++j) lane[j] += a[i + j] * b[i + j];
  T acc = T(0);
  for (; i < n; ++i) acc += a[i] * b[i];
  for (int j = 0; j < 8; ++j) acc += lane[j];
  return acc;
}

template <typename T>
inline void axpy_span(T* dst, const T* src, T g, size_t n) {
  for (size_t i = 0; i < n; ++i) dst[i] += g * src[i];
}

}  // namespace

template <typename T>
void conv2d_fwd(const T* in, const T* w, const T* bias, T* out, const ConvShape& s) {
  const size_t rows = s.patch_rows(), cols = s.patch_cols();
  Scratch<T> patches(rows * cols);
  // weights transposed to [cols, cout] so the inner accumulation is a
  // contiguous axpy over output channels
  Scratch<T> wt((size_t)s.cout * cols);
  for (int co = 0; co < s.cout; ++co)
    for (size_t c = 0; c < cols; ++c) wt.data()[c * s.cout + co] = w[(size_t)co * cols + c];
  Scratch<T> out_t(rows * s.cout);
  for (int n = 0; n < s.n; ++n) {
    im2col(in + (size_t)n * s.cin * s.h * s.w, s, patches.data());
    const bool par = parallel_ok() && rows * cols >= 4096;
#pragma omp parallel for schedule(static) if (par)
    for (size_t r = 0; r < rows; ++r) {
      T* orow = out_t.data() + r * s.cout;
      if (bias)
        std::copy(bias, bias + s.cout, orow);
      else
        std::fill(orow, orow + s.cout, T(0));
      const T* prow = patches.data() + r * cols;
      for (size_t c = 0; c < cols; ++c) axpy_span(orow, wt.data() + c * s.cout, prow[c], (size_t)s.cout);
    }
    T* dst = out + (size_t)n * s.cout * rows;
    for (int co = 0; co < s.cout; ++co)
      for (size_t r = 0; r < rows; ++r) dst[(size_t)co * rows + r] = out_t.data()[r * s.cout + co];
  }
}

template <typename T>
void conv2d_bwd_input(const T* gout, const T* w, T* gin, const ConvShape& s) {
  const size_t rows = s.patch_rows(), cols = s.patch_cols();
  Scratch<T> gpatchbuf(rows * cols);
  T* gpatches = gpatchbuf.data();
  for (int n = 0; n < s.n; ++n) {
    const T* g = gout + (size_t)n * s.cout * rows;
    const bool par = parallel_ok() && rows * cols >= 4096;
#pragma omp parallel for schedule(static) if (par)
    for (size_t r = 0; r < rows; ++r) {
      T* row = gpatches + r * cols;
      std::fill(row, row + cols, T(0));
      for (int co = 0; co < s.cout; ++co)
        axpy_span(row, w + (size_t)co * cols, g[(size_t)co * rows + r], cols);
    }
    col2im_add(gpatches, s, gin + (size_t)n * s.cin * s.h * s.w);
  }
}

template <typename T>
void conv2d_bwd_weight(const T* gout, const T* in, T* gw, T* gbias, const ConvShape& s) {
  const size_t rows = s.patch_rows(), cols = s.patch_cols();
  Scratch<T> patches(rows * cols);
  for (int n = 0; n < s.n; ++n) {
    im2col(in + (size_t)n * s.cin * s.h * s.w, s, patches.data());
    const T* g = gout + (size_t)n * s.cout * rows;
    const bool par = parallel_ok() && s.cout * rows >= 1024;
#pragma omp parallel for schedule(static) if (par)
    for (int co = 0; co < s.cout; ++co) {
      const T* grow = g + (size_t)co * rows;
      if (gbias) {
        T acc = T(0);
        for (size_t r = 0; r < rows; ++r) acc += grow[r];
        gbias[co] += acc;
      }
      T* wrow = gw + (size_t)co * cols;
      for (size_t r = 0; r < rows; ++r) axpy_span(wrow, patches.data() + r * cols, grow[r], cols);
    }
  }
}

// ---------- bilinear / nearest ----------

namespace {

template <typename T>
inline T src_coord(int i, int on, int in_n) {
  if (on <= 1) return T(0);
  return T(i) * T(in_n - 1) / T(on - 1);
}

template <typename T>
inline void bilinear_row(const T* src, int h, int w, T* dst, int oh, int ow, int y) {
  const T sy = src_coord<T>(y, oh, h);
  const int y0 = std::min((int)sy, h - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const T fy = sy - (T)y0;
  for (int x = 0; x < ow; ++x) {
    const T sx = src_coord<T>(x, ow, w);
    const int x0 = std::min((int)sx, w - 1);
    const int x1 = std::min(x0 + 1, w - 1);
    const T fx = sx - (T)x0;
    const T top = src[y0 * w + x0] * (T(1) - fx) + src[y0 * w + x1] * fx;
    const T bot = src[y1 * w + x0] * (T(1) - fx) + src[y1 * w + x1] * fx;
    dst[y * ow + x] = top * (T(1) - fy) + bot * fy;
  }
}

}  // namespace

template <typename T>
void upsample_bilinear_serial(const T* src, int h, int w, T* dst, int oh, int ow) {
  for (int y = 0; y < oh; ++y) bilinear_row(src, h, w, dst, oh, ow, y);
}

template <typename T>
void upsample_bilinear_omp(const T* src, int h, int w, T* dst, int oh, int ow) {
#pragma omp parallel for schedule(static)
  for (int y = 0; y < oh; ++y) bilinear_row(src, h, w, dst, oh, ow, y);
}

template <typename T>
void upsample_bilinear(const T* src, int h, int w, T* dst, int oh, int ow) {
  if (parallel_ok() && (size_t)oh * ow >= 65536)
    upsample_bilinear_omp(src, h, w, dst, oh, ow);
  else
    upsample_bilinear_serial(src, h, w, dst, oh, ow);
}

template <typename T>
void upsample_bilinear_bwd(const T* gdst, int oh, int ow, T* gsrc, int h, int w) {
  for (int y = 0; y < oh; ++y) {
    const T sy = src_coord<T>(y, oh, h);
    const int y0 = std::min((int)sy, h - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const T fy = sy - (T)y0;
    for (int x = 0; x < ow; ++x) {
      const T sx = src_coord<T>(x, ow, w);
      const int x0 = std::min((int)sx, w - 1);
      const int x1 = std::min(x0 + 1, w - 1);
      const T fx = sx - (T)x0;
      const T g = gdst[y * ow + x];
      gsrc[y0 * w + x0] += g * (T(1) - fx) * (T(1) - fy);
      gsrc[y0 * w + x1] += g * fx * (T(1) - fy);
      gsrc[y1 * w + x0] += g * (T(1) - fx) * fy;
      gsrc[y1 * w + x1] += g * fx * fy;
    }
  }
}

template <typename T>
void upsample_nearest(const T* src, int h, int w, T* dst, int oh, int ow) {
  for (int y = 0; y < oh; ++y) {
    const int sy = std::min((int)((int64_t)y * h / oh), h - 1);
    for (int x = 0; x < ow; ++x) {
      const int sx = std::min((int)((int64_t)x * w / ow), w - 1);
      dst[y * ow + x] = src[sy * w + sx];
    }
  }
}

#define APN_INSTANTIATE(T)                                                                   \
  template void conv2d_fwd_ref<T>(const T*, const T*, const T*, T*, const ConvShape&);      \
  template void conv2d_bwd_input_ref<T>(const T*, const T*, T*, const ConvShape&);          \
  template void conv2d_bwd_weight_ref<T>(const T*, const T*, T*, T*, const ConvShape&);     \
  template void conv2d_fwd<T>(const T*, const T*, const T*, T*, const ConvShape&);          \
  template void conv2d_bwd_input<T>(const T*, const T*, T*, const ConvShape&);              \
  template void conv2d_bwd_weight<T>(const T*, const T*, T*, T*, const ConvShape&);         \
  template void upsample_bilinear_serial<T>(const T*, int, int, T*, int, int);              \
  template void upsample_bilinear_omp<T>(const T*, int, int, T*, int, int);                 \
  template void upsample_bilinear<T>(const T*, int, int, T*, int, int);                     \
  template void upsample_bilinear_bwd<T>(const T*, int, int, T*, int, int);                 \
  template void upsample_nearest<T>(const T*, int, int, T*, int, int);

APN_INSTANTIATE(float)
APN_INSTANTIATE(double)

}  // namespace apn::kernels
