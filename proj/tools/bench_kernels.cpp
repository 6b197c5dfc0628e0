// Times the production (im2col + OpenMP) conv kernels against the naive
// serial reference, checks agreement, and confirms the production path is
// bitwise invariant to the thread count.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "apn/kernels.hpp"
#include "apn/rng.hpp"

using namespace apn;
using Clock = std::chrono::steady_clock;

namespace {

template <typename Fn>
double time_it(int reps, const Fn& fn) {
  fn();  // warm up
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  return std::chrono::duration<double>(Clock::now() - t0).count() / reps;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs((double)a[i] - b[i]));
  return m;
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void bench_conv(const kernels::ConvShape& s, int reps) {
  Rng rng(1);
  std::vector<float> in((size_t)s.n * s.cin * s.h * s.w);
  std::vector<float> w((size_t)s.cout * s.cin * s.k * s.k);
  std::vector<float> bias(s.cout);
  for (auto& v : in) v = (float)rng.uniform(-1, 1);
  for (auto& v : w) v = (float)rng.uniform(-1, 1);
  for (auto& v : bias) v = (float)rng.uniform(-1, 1);
  const size_t out_n = (size_t)s.n * s.cout * s.oh() * s.ow();
  std::vector<float> out_r(out_n), out_f(out_n), out_1(out_n);
  std::vector<float> gin_r(in.size()), gin_f(in.size()), gin_1(in.size());
  std::vector<float> gw_r(w.size()), gw_f(w.size()), gw_1(w.size());
  std::vector<float> gb_r(bias.size()), gb_f(bias.size()), gb_1(bias.size());

  const double macs = (double)s.n * s.cout * s.oh() * s.ow() * s.cin * s.k * s.k;
  const int nthreads = max_threads();

  const double t_fr = time_it(reps, [&] {
    kernels::conv2d_fwd_ref(in.data(), w.data(), bias.data(), out_r.data(), s);
  });
  const double t_ff = time_it(reps, [&] {
    kernels::conv2d_fwd(in.data(), w.data(), bias.data(), out_f.data(), s);
  });
  const double t_ir = time_it(reps, [&] {
    std::fill(gin_r.begin(), gin_r.end(), 0.f);
    kernels::conv2d_bwd_input_ref(out_r.data(), w.data(), gin_r.data(), s);
  });
  const double t_if = time_it(reps, [&] {
    std::fill(gin_f.begin(), gin_f.end(), 0.f);
    kernels::conv2d_bwd_input(out_r.data(), w.data(), gin_f.data(), s);
  });
  const double t_wr = time_it(reps, [&] {
    std::fill(gw_r.begin(), gw_r.end(), 0.f);
    std::fill(gb_r.begin(), gb_r.end(), 0.f);
    kernels::conv2d_bwd_weight_ref(out_r.data(), in.data(), gw_r.data(), gb_r.data(), s);
  });
  const double t_wf = time_it(reps, [&] {
    std::fill(gw_f.begin(), gw_f.end(), 0.f);
    std::fill(gb_f.begin(), gb_f.end(), 0.f);
    kernels::conv2d_bwd_weight(out_r.data(), in.data(), gw_f.data(), gb_f.data(), s);
  });

  // production path must not depend on the thread count
  set_threads(1);
  kernels::conv2d_fwd(in.data(), w.data(), bias.data(), out_1.data(), s);
  std::fill(gin_1.begin(), gin_1.end(), 0.f);
  kernels::conv2d_bwd_input(out_r.data(), w.data(), gin_1.data(), s);
  std::fill(gw_1.begin(), gw_1.end(), 0.f);
  std::fill(gb_1.begin(), gb_1.end(), 0.f);
  kernels::conv2d_bwd_weight(out_r.data(), in.data(), gw_1.data(), gb_1.data(), s);
  set_threads(nthreads);
  const bool invariant =
      std::memcmp(out_1.data(), out_f.data(), out_n * sizeof(float)) == 0 &&
      std::memcmp(gin_1.data(), gin_f.data(), gin_f.size() * sizeof(float)) == 0 &&
      std::memcmp(gw_1.data(), gw_f.data(), gw_f.size() * sizeof(float)) == 0;

  const double diff = std::max({max_abs_diff(out_r, out_f), max_abs_diff(gin_r, gin_f),
                                max_abs_diff(gw_r, gw_f), max_abs_diff(gb_r, gb_f)});

  std::printf("conv %dx%dx%dx%d -> %d (k=%d s=%d):\n", s.n, s.cin, s.h, s.w, s.cout, s.k,
              s.stride);
  std::printf("  fwd    %6.2f -> %6.2f GMAC/s (%4.1fx)\n", macs / t_fr / 1e9, macs / t_ff / 1e9,
              t_fr / t_ff);
  std::printf("  bwd_in %6.2f -> %6.2f GMAC/s (%4.1fx)\n", macs / t_ir / 1e9, macs / t_if / 1e9,
              t_ir / t_if);
  std::printf("  bwd_w  %6.2f -> %6.2f GMAC/s (%4.1fx)\n", macs / t_wr / 1e9, macs / t_wf / 1e9,
              t_wr / t_wf);
  std::printf("  ref vs production max |diff| %.2e   thread-invariant: %s\n", diff,
              invariant ? "yes" : "NO");
}

void bench_upsample(int h, int w, int side, int reps) {
  Rng rng(2);
  std::vector<float> src((size_t)h * w);
  for (auto& v : src) v = (float)rng.uniform(-1, 1);
  std::vector<float> dst_s((size_t)side * side), dst_p((size_t)side * side);
  const double t_s = time_it(reps, [&] {
    kernels::upsample_bilinear_serial(src.data(), h, w, dst_s.data(), side, side);
  });
  const double t_p = time_it(reps, [&] {
    kernels::upsample_bilinear_omp(src.data(), h, w, dst_p.data(), side, side);
  });
  const bool same = std::memcmp(dst_s.data(), dst_p.data(), dst_s.size() * sizeof(float)) == 0;
  std::printf("bilinear %dx%d -> %dx%d: %.1f/%.1f Mpix/s (serial/omp)  %s\n", h, w, side, side,
              side * (double)side / t_s / 1e6, side * (double)side / t_p / 1e6,
              same ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 20;
  if (argc > 1) reps = std::atoi(argv[1]);
  std::printf("threads: %d\n", max_threads());
  // the three encoder blocks of the default model, single-image and batched
  bench_conv({1, 3, 64, 64, 16, 3, 2, 1}, reps);
  bench_conv({1, 16, 32, 32, 32, 3, 2, 1}, reps);
  bench_conv({1, 32, 16, 16, 64, 3, 2, 1}, reps);
  bench_conv({8, 16, 32, 32, 32, 3, 2, 1}, reps);
  bench_upsample(8, 8, 64, reps);
  bench_upsample(64, 64, 512, reps);
  return 0;
}
