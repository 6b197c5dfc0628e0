#ifndef APN_KERNELS_HPP
#define APN_KERNELS_HPP

#include <cstddef>

namespace apn::kernels {

// Hot numeric kernels.
//
// Production conv kernels use an im2col layout so the inner loops run over
// contiguous spans of length cin*k*k and vectorize well. They may open an
// OpenMP region, but every output element is accumulated in a fixed order,
// so results are bitwise identical for any thread count (including inside
// an enclosing parallel region, where they degrade to serial).
//
// The _ref kernels are the naive direct-loop serial reference. They are the
// correctness oracle for tests and the baseline for the benchmark; the
// production path matches them to rounding, not bitwise.

struct ConvShape {
  int n, cin, h, w;   // input  [n, cin, h, w]
  int cout, k;        // weight [cout, cin, k, k]
  int stride, pad;
  int oh() const { return (h + 2 * pad - k) / stride + 1; }
  int ow() const { return (w + 2 * pad - k) / stride + 1; }
  size_t patch_cols() const { return (size_t)cin * k * k; }
  size_t patch_rows() const { return (size_t)oh() * ow(); }
};

template <typename T>
void conv2d_fwd_ref(const T* in, const T* w, const T* bias, T* out, const ConvShape& s);
template <typename T>
void conv2d_bwd_input_ref(const T* gout, const T* w, T* gin, const ConvShape& s);
template <typename T>
void conv2d_bwd_weight_ref(const T* gout, const T* in, T* gw, T* gbias, const ConvShape& s);

template <typename T>
void conv2d_fwd(const T* in, const T* w, const T* bias, T* out, const ConvShape& s);
// gin is accumulated into (callers zero it once per backward pass).
template <typename T>
void conv2d_bwd_input(const T* gout, const T* w, T* gin, const ConvShape& s);
// gw/gbias are accumulated into; gbias may be null.
template <typename T>
void conv2d_bwd_weight(const T* gout, const T* in, T* gw, T* gbias, const ConvShape& s);

// Align-corners bilinear interpolation of a single [h,w] map to [oh,ow].
// Serial and OpenMP variants are bitwise identical.
template <typename T>
void upsample_bilinear_serial(const T* src, int h, int w, T* dst, int oh, int ow);
template <typename T>
void upsample_bilinear_omp(const T* src, int h, int w, T* dst, int oh, int ow);
template <typename T>
void upsample_bilinear(const T* src, int h, int w, T* dst, int oh, int ow);

// Adjoint of the above; gsrc is accumulated into.
template <typename T>
void upsample_bilinear_bwd(const T* gdst, int oh, int ow, T* gsrc, int h, int w);

// Nearest-neighbor upsample for binary masks: dst(y,x) = src(y*h/oh, x*w/ow).
template <typename T>
void upsample_nearest(const T* src, int h, int w, T* dst, int oh, int ow);

// True when a kernel launched here may open its own parallel region.
bool parallel_ok();

}  // namespace apn::kernels

#endif
