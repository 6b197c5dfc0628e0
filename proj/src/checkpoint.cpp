#include "apn/checkpoint.hpp"

#include <cstring>
#include <map>

#include "apn/bundle_io.hpp"
#include "apn/config_file.hpp"

namespace apn {

namespace {

constexpr char kMagic[8] = {'A', 'P', 'N', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::string& path, const char* mode) {
  std::FILE* f = std::fopen(path.c_str(), mode);
  check(f != nullptr, ErrKind::io, "open-failed", path + ": cannot open");
  return File(f);
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, const model::ModelParams<T>& params,
                     const std::string& config_text) {
  File f = open_file(path, "wb");
  check(std::fwrite(kMagic, 1, 8, f.get()) == 8, ErrKind::io, "write-failed", path);
  check(std::fwrite(&kVersion, 4, 1, f.get()) == 1, ErrKind::io, "write-failed", path);

  std::vector<NamedTensor> records;
  params.visit([&](const std::string& name, const Tensor<T>& t) {
    records.push_back(NamedTensor{name, t});
  });
  write_tensor_records(f.get(), records, path);

  // model geometry travels with the config text
  std::string text = config_text;
  text += "model.input_size = " + std::to_string(params.cfg.input_size) + "\n";
  text += "model.kernel = " + std::to_string(params.cfg.kernel) + "\n";
  std::string ch;
  for (int c : params.cfg.channels) ch += (ch.empty() ? "" : ",") + std::to_string(c);
  text += "model.channels = " + ch + "\n";
  text += "model.k_attrs = " + std::to_string(params.k_attrs) + "\n";
  const uint32_t len = (uint32_t)text.size();
  check(std::fwrite(&len, 4, 1, f.get()) == 1, ErrKind::io, "write-failed", path);
  check(std::fwrite(text.data(), 1, len, f.get()) == len, ErrKind::io, "write-failed", path);
}

namespace {

std::string read_trailing_text(std::FILE* f, const std::string& path) {
  uint32_t len = 0;
  check(std::fread(&len, 4, 1, f) == 1, ErrKind::data, "truncated", path + ": truncated file");
  std::string text(len, '\0');
  check(std::fread(text.data(), 1, len, f) == len, ErrKind::data, "truncated",
        path + ": truncated file");
  return text;
}

void read_header(std::FILE* f, const std::string& path) {
  char magic[8];
  check(std::fread(magic, 1, 8, f) == 8, ErrKind::data, "truncated", path + ": truncated file");
  check(std::memcmp(magic, kMagic, 8) == 0, ErrKind::data, "bad-magic", path + ": bad magic");
  uint32_t version = 0;
  check(std::fread(&version, 4, 1, f) == 1, ErrKind::data, "truncated",
        path + ": truncated file");
  check(version == kVersion, ErrKind::data, "version-mismatch",
        path + ": checkpoint version " + std::to_string(version) + " unsupported");
}

}  // namespace

template <typename T>
model::ModelParams<T> load_checkpoint(const std::string& path, std::string* config_text) {
  File f = open_file(path, "rb");
  read_header(f.get(), path);
  std::vector<NamedTensor> records = read_tensor_records(f.get(), path);
  std::string text = read_trailing_text(f.get(), path);
  if (config_text) *config_text = text;

  KeyValues kv = parse_key_values(text, /*reject_unknown=*/nullptr);
  model::ModelParams<T> p;
  p.cfg.input_size = kv.get_int("model.input_size");
  p.cfg.kernel = kv.get_int("model.kernel");
  p.cfg.channels.clear();
  for (const std::string& c : kv.get_list("model.channels"))
    p.cfg.channels.push_back(std::stoi(c));
  p.k_attrs = kv.get_int("model.k_attrs");

  std::map<std::string, NamedTensor*> by_name;
  for (auto& r : records) by_name[r.name] = &r;
  auto take = [&](const std::string& name) -> Tensor<T> {
    auto it = by_name.find(name);
    check(it != by_name.end(), ErrKind::data, "missing-tensor",
          path + ": checkpoint lacks tensor '" + name + "'");
    if constexpr (std::is_same_v<T, float>) {
      check(it->second->is_f32(), ErrKind::data, "bad-dtype",
            path + ": tensor '" + name + "' is f64 but an f32 model was requested");
      return it->second->f32();
    } else {
      if (it->second->is_f32()) return cast<double>(it->second->f32());
      return it->second->f64();
    }
  };
  p.enc.resize(p.cfg.channels.size());
  for (size_t i = 0; i < p.enc.size(); ++i) {
    p.enc[i].w = take("enc" + std::to_string(i) + ".w");
    p.enc[i].b = take("enc" + std::to_string(i) + ".b");
  }
  p.V = take("V");
  p.P = take("P");
  check((int)p.V.dim(1) == p.k_attrs && (int)p.P.dim(0) == p.k_attrs, ErrKind::data,
        "dim-mismatch", path + ": V/P dimensions disagree with K");
  return p;
}

std::string checkpoint_config(const std::string& path) {
  File f = open_file(path, "rb");
  read_header(f.get(), path);
  read_tensor_records(f.get(), path);
  return read_trailing_text(f.get(), path);
}

uint64_t file_digest(const std::string& path) {
  File f = open_file(path, "rb");
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), f.get())) > 0) h = fnv1a(buf, n, h);
  return h;
}

template void save_checkpoint<float>(const std::string&, const model::ModelParams<float>&,
                                     const std::string&);
template void save_checkpoint<double>(const std::string&, const model::ModelParams<double>&,
                                      const std::string&);
template model::ModelParams<float> load_checkpoint<float>(const std::string&, std::string*);
template model::ModelParams<double> load_checkpoint<double>(const std::string&, std::string*);

}  // namespace apn
