#ifndef APN_BUNDLE_IO_HPP
#define APN_BUNDLE_IO_HPP

#include <cstdio>
#include <string>
#include <variant>
#include <vector>

#include "apn/schema.hpp"

namespace apn {

// Named tensor record stream, shared by dataset bundles (`tensors.bin`) and
// checkpoints. Layout (little-endian): magic "APNTEN1\0", u32 record count;
// per record u16 name length, name bytes, u8 dtype (0=f32, 1=f64), u8 ndim,
// ndim x u64 dims, raw row-major payload.
struct NamedTensor {
  std::string name;
  std::variant<Tensor<float>, Tensor<double>> value;

  bool is_f32() const { return value.index() == 0; }
  const Tensor<float>& f32() const { return std::get<0>(value); }
  const Tensor<double>& f64() const { return std::get<1>(value); }
};

void write_tensor_records(std::FILE* f, const std::vector<NamedTensor>& records,
                          const std::string& path_for_errors);
std::vector<NamedTensor> read_tensor_records(std::FILE* f, const std::string& path_for_errors);

// Dataset bundle directory: schema.txt, classes.tsv, samples.tsv,
// tensors.bin, optional parts.tsv.
void save_bundle(const DatasetBundle& bundle, const std::string& dir);
DatasetBundle load_bundle(const std::string& dir);

// FNV-1a over the bundle files in fixed order; equal digests mean
// byte-identical bundles.
uint64_t bundle_digest(const std::string& dir);

}  // namespace apn

#endif
