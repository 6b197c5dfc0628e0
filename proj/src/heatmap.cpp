#include "apn/heatmap.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <memory>

namespace apn {

namespace {

using File = std::unique_ptr<std::FILE, int (*)(std::FILE*)>;

File open_out(const std::string& path) {
  File f(std::fopen(path.c_str(), "wb"), std::fclose);
  check(f != nullptr, ErrKind::io, "open-failed", path + ": cannot open for writing");
  return f;
}

void put(std::FILE* f, const std::string& path, const void* p, size_t n) {
  check(std::fwrite(p, 1, n, f) == n, ErrKind::io, "write-failed", path + ": short write");
}

unsigned char to_byte(double v) {
  return (unsigned char)std::clamp((int)std::lround(v * 255.0), 0, 255);
}

}  // namespace

template <typename T>
void write_pgm(const std::string& path, const Tensor<T>& map) {
  check(map.ndim() == 2 && !map.empty(), ErrKind::data, "shape-mismatch",
        "pgm writer expects a nonempty [H,W] map");
  const size_t h = map.dim(0), w = map.dim(1);
  T lo = map[0], hi = map[0];
  for (size_t i = 1; i < map.numel(); ++i) {
    lo = std::min(lo, map[i]);
    hi = std::max(hi, map[i]);
  }
  const double range = (double)(hi - lo);
  std::vector<unsigned char> bytes(map.numel());
  for (size_t i = 0; i < map.numel(); ++i)
    bytes[i] = range > 0 ? to_byte(((double)map[i] - (double)lo) / range) : 0;
  File f = open_out(path);
  char head[64];
  int n = std::snprintf(head, sizeof(head), "P5\n%zu %zu\n255\n", w, h);
  put(f.get(), path, head, (size_t)n);
  put(f.get(), path, bytes.data(), bytes.size());
}

template <typename T>
void write_ppm(const std::string& path, const Tensor<T>& image, const PartBox* box) {
  check(image.ndim() == 3 && image.dim(0) == 3, ErrKind::data, "shape-mismatch",
        "ppm writer expects a [3,H,W] image");
  const size_t h = image.dim(1), w = image.dim(2);
  std::vector<unsigned char> bytes(h * w * 3);
  for (size_t y = 0; y < h; ++y)
    for (size_t x = 0; x < w; ++x)
      for (size_t c = 0; c < 3; ++c)
        bytes[(y * w + x) * 3 + c] = to_byte((double)image.data[(c * h + y) * w + x]);
  if (box) {
    auto mark = [&](int x, int y) {
      if (x < 0 || y < 0 || x >= (int)w || y >= (int)h) return;
      unsigned char* px = &bytes[((size_t)y * w + x) * 3];
      px[0] = 255;
      px[1] = 0;
      px[2] = 0;
    };
    for (int x = box->x0; x <= box->x1; ++x) {
      mark(x, box->y0);
      mark(x, box->y1);
    }
    for (int y = box->y0; y <= box->y1; ++y) {
      mark(box->x0, y);
      mark(box->x1, y);
    }
  }
  File f = open_out(path);
  char head[64];
  int n = std::snprintf(head, sizeof(head), "P6\n%zu %zu\n255\n", w, h);
  put(f.get(), path, head, (size_t)n);
  put(f.get(), path, bytes.data(), bytes.size());
}

template <typename T>
std::vector<std::string> export_heatmaps(const model::ForwardTrace<T>& trace,
                                         const Tensor<T>& image, const std::string& dir,
                                         const std::vector<int>& attributes, double rho,
                                         const PartBox* object_box) {
  std::filesystem::create_directories(dir);
  const int side = (int)image.dim(1);
  std::vector<std::string> written;
  for (int k : attributes) {
    Tensor<T> heat;
    LocalizeResult loc = localize(trace, k, side, rho, object_box, &heat);
    const std::string heat_path = dir + "/attr_" + std::to_string(k) + "_heat.pgm";
    const std::string box_path = dir + "/attr_" + std::to_string(k) + "_box.ppm";
    write_pgm(heat_path, heat);
    write_ppm(box_path, image, &loc.box);
    written.push_back(heat_path);
    written.push_back(box_path);
  }
  return written;
}

template void write_pgm<float>(const std::string&, const Tensor<float>&);
template void write_pgm<double>(const std::string&, const Tensor<double>&);
template void write_ppm<float>(const std::string&, const Tensor<float>&, const PartBox*);
template void write_ppm<double>(const std::string&, const Tensor<double>&, const PartBox*);
template std::vector<std::string> export_heatmaps<float>(const model::ForwardTrace<float>&,
                                                         const Tensor<float>&, const std::string&,
                                                         const std::vector<int>&, double,
                                                         const PartBox*);
template std::vector<std::string> export_heatmaps<double>(const model::ForwardTrace<double>&,
                                                          const Tensor<double>&,
                                                          const std::string&,
                                                          const std::vector<int>&, double,
                                                          const PartBox*);

}  // namespace apn
