#include "apn/bundle_io.hpp"

#include <cinttypes>
#include <cstring>
#include <filesystem>
#include <map>
#include <memory>

namespace fs = std::filesystem;

namespace apn {

namespace {

constexpr char kMagic[8] = {'A', 'P', 'N', 'T', 'E', 'N', '1', '\0'};

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

void write_bytes(std::FILE* f, const void* p, size_t n, const std::string& path) {
  check(std::fwrite(p, 1, n, f) == n, ErrKind::io, "write-failed", path + ": short write");
}

void read_bytes(std::FILE* f, void* p, size_t n, const std::string& path) {
  check(std::fread(p, 1, n, f) == n, ErrKind::data, "truncated", path + ": truncated file");
}

template <typename T>
void write_le(std::FILE* f, T v, const std::string& path) {
  // host is little-endian on every supported target; keep the write explicit
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  write_bytes(f, buf, sizeof(T), path);
}

template <typename T>
T read_le(std::FILE* f, const std::string& path) {
  unsigned char buf[sizeof(T)];
  read_bytes(f, buf, sizeof(T), path);
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

std::string fmt_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", (double)v);
  return buf;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  File f = open_file(path, "rb");
  std::string all;
  char buf[4096];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), f.get())) > 0) all.append(buf, n);
  std::vector<std::string> lines;
  size_t start = 0;
  for (size_t i = 0; i <= all.size(); ++i)
    if (i == all.size() || all[i] == '\n') {
      if (i > start) lines.push_back(all.substr(start, i - start));
      start = i + 1;
    }
  return lines;
}

}  // namespace

void write_tensor_records(std::FILE* f, const std::vector<NamedTensor>& records,
                          const std::string& path) {
  write_bytes(f, kMagic, 8, path);
  write_le<uint32_t>(f, (uint32_t)records.size(), path);
  for (const auto& r : records) {
    check(r.name.size() <= 0xffff, ErrKind::data, "bad-name", path + ": record name too long");
    write_le<uint16_t>(f, (uint16_t)r.name.size(), path);
    write_bytes(f, r.name.data(), r.name.size(), path);
    const uint8_t dtype = r.is_f32() ? 0 : 1;
    write_le<uint8_t>(f, dtype, path);
    auto write_payload = [&](const auto& t) {
      write_le<uint8_t>(f, (uint8_t)t.ndim(), path);
      for (size_t d : t.shape) write_le<uint64_t>(f, (uint64_t)d, path);
      write_bytes(f, t.data.data(), t.data.size() * sizeof(t.data[0]), path);
    };
    if (r.is_f32())
      write_payload(r.f32());
    else
      write_payload(r.f64());
  }
}

std::vector<NamedTensor> read_tensor_records(std::FILE* f, const std::string& path) {
  char magic[8];
  read_bytes(f, magic, 8, path);
  if (std::memcmp(magic, "APNTEN", 6) == 0 && magic[7] == '\0' && magic[6] != '1')
    throw Error(ErrKind::data, "version-mismatch",
                path + ": tensor stream version '" + std::string(1, magic[6]) + "' unsupported");
  check(std::memcmp(magic, kMagic, 8) == 0, ErrKind::data, "bad-magic", path + ": bad magic");
  const uint32_t count = read_le<uint32_t>(f, path);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    NamedTensor r;
    const uint16_t name_len = read_le<uint16_t>(f, path);
    r.name.resize(name_len);
    read_bytes(f, r.name.data(), name_len, path);
    const uint8_t dtype = read_le<uint8_t>(f, path);
    check(dtype <= 1, ErrKind::data, "bad-dtype",
          path + ": unknown dtype " + std::to_string(dtype));
    const uint8_t ndim = read_le<uint8_t>(f, path);
    std::vector<size_t> shape(ndim);
    size_t numel = 1;
    for (int d = 0; d < ndim; ++d) {
      shape[d] = (size_t)read_le<uint64_t>(f, path);
      numel *= shape[d];
    }
    check(numel < (size_t(1) << 33), ErrKind::data, "bad-shape",
          path + ": tensor record unreasonably large");
    if (dtype == 0) {
      Tensor<float> t(shape);
      read_bytes(f, t.data.data(), numel * sizeof(float), path);
      r.value = std::move(t);
    } else {
      Tensor<double> t(shape);
      read_bytes(f, t.data.data(), numel * sizeof(double), path);
      r.value = std::move(t);
    }
    out.push_back(std::move(r));
  }
  return out;
}

void save_bundle(const DatasetBundle& b, const std::string& dir) {
  b.validate();
  fs::create_directories(dir);

  {
    const std::string path = dir + "/schema.txt";
    File f = open_file(path, "wb");
    std::string head = std::to_string(b.schema.k) + " " + std::to_string(b.schema.l) + "\n";
    write_bytes(f.get(), head.data(), head.size(), path);
    for (int k = 0; k < b.schema.k; ++k) {
      std::string line = std::to_string(k + 1) + " " + std::to_string(b.schema.group_of[k]) + " " +
                         b.schema.names[k] + "\n";
      write_bytes(f.get(), line.data(), line.size(), path);
    }
  }

  {
    const std::string path = dir + "/classes.tsv";
    File f = open_file(path, "wb");
    for (const auto& c : b.classes.classes) {
      std::string line = std::to_string(c.id);
      line += "\t";
      line += split_name(c.split);
      for (float v : c.phi) {
        line += "\t";
        line += fmt_float(v);
      }
      line += "\n";
      write_bytes(f.get(), line.data(), line.size(), path);
    }
  }

  {
    const std::string path = dir + "/samples.tsv";
    File f = open_file(path, "wb");
    for (const auto& s : b.samples) {
      std::string line =
          std::to_string(s.image_id) + "\t" + std::to_string(s.class_id) + "\n";
      write_bytes(f.get(), line.data(), line.size(), path);
    }
  }

  bool any_parts = false;
  for (const auto& s : b.samples) any_parts |= !s.parts.empty();
  if (any_parts) {
    const std::string path = dir + "/parts.tsv";
    File f = open_file(path, "wb");
    for (const auto& s : b.samples)
      for (const auto& p : s.parts) {
        std::string line = std::to_string(s.image_id) + "\t" + std::to_string(p.part) + "\t" +
                           std::to_string(p.x0) + "\t" + std::to_string(p.y0) + "\t" +
                           std::to_string(p.x1) + "\t" + std::to_string(p.y1) + "\n";
        write_bytes(f.get(), line.data(), line.size(), path);
      }
  }

  {
    const std::string path = dir + "/tensors.bin";
    File f = open_file(path, "wb");
    std::vector<NamedTensor> records;
    records.reserve(b.samples.size());
    for (const auto& s : b.samples) {
      NamedTensor r;
      if (!s.image.empty()) {
        r.name = "img/" + std::to_string(s.image_id);
        r.value = s.image;
      } else {
        r.name = "feat/" + std::to_string(s.image_id);
        r.value = s.feature;
      }
      records.push_back(std::move(r));
    }
    write_tensor_records(f.get(), records, path);
  }
}

DatasetBundle load_bundle(const std::string& dir) {
  DatasetBundle b;

  {
    const std::string path = dir + "/schema.txt";
    std::vector<std::string> lines = read_lines(path);
    check(!lines.empty(), ErrKind::data, "truncated", path + ": empty schema file");
    auto head = split_ws(lines[0]);
    check(head.size() == 2, ErrKind::data, "bad-schema", path + ": first line must be 'K L'");
    b.schema.k = std::stoi(head[0]);
    b.schema.l = std::stoi(head[1]);
    check((int)lines.size() == b.schema.k + 1, ErrKind::data, "dim-mismatch",
          path + ": expected " + std::to_string(b.schema.k) + " attribute lines, found " +
              std::to_string(lines.size() - 1));
    b.schema.names.resize(b.schema.k);
    b.schema.group_of.resize(b.schema.k);
    for (int k = 0; k < b.schema.k; ++k) {
      auto t = split_ws(lines[k + 1]);
      check(t.size() == 3, ErrKind::data, "bad-schema",
            path + ": attribute line must be 'index group name'");
      check(std::stoi(t[0]) == k + 1, ErrKind::data, "bad-schema",
            path + ": attribute indices must be 1..K in order");
      b.schema.group_of[k] = std::stoi(t[1]);
      b.schema.names[k] = t[2];
    }
    for (int l = 1; l <= b.schema.l; ++l)
      b.schema.group_names.push_back("group" + std::to_string(l));
    b.schema.validate();
  }

  {
    const std::string path = dir + "/classes.tsv";
    for (const auto& line : read_lines(path)) {
      auto t = split_ws(line);
      check(t.size() >= 2, ErrKind::data, "bad-class", path + ": malformed class line");
      ClassInfo c;
      c.id = std::stoi(t[0]);
      c.split = split_from(t[1]);
      check((int)t.size() - 2 == b.schema.k, ErrKind::data, "dim-mismatch",
            path + ": class " + t[0] + " has " + std::to_string(t.size() - 2) +
                " attribute values, schema K is " + std::to_string(b.schema.k));
      for (size_t i = 2; i < t.size(); ++i) c.phi.push_back(std::stof(t[i]));
      b.classes.classes.push_back(std::move(c));
    }
  }

  std::map<int, int> sample_of_image;
  {
    const std::string path = dir + "/samples.tsv";
    for (const auto& line : read_lines(path)) {
      auto t = split_ws(line);
      check(t.size() == 2, ErrKind::data, "bad-sample", path + ": malformed sample line");
      SampleRecord s;
      s.image_id = std::stoi(t[0]);
      s.class_id = std::stoi(t[1]);
      sample_of_image[s.image_id] = (int)b.samples.size();
      b.samples.push_back(std::move(s));
    }
  }

  if (fs::exists(dir + "/parts.tsv")) {
    const std::string path = dir + "/parts.tsv";
    for (const auto& line : read_lines(path)) {
      auto t = split_ws(line);
      check(t.size() == 6, ErrKind::data, "bad-part", path + ": malformed part line");
      auto it = sample_of_image.find(std::stoi(t[0]));
      check(it != sample_of_image.end(), ErrKind::data, "bad-part",
            path + ": part references unknown image " + t[0]);
      b.samples[it->second].parts.push_back(
          PartBox{std::stoi(t[1]), std::stoi(t[2]), std::stoi(t[3]), std::stoi(t[4]),
                  std::stoi(t[5])});
    }
  }

  {
    const std::string path = dir + "/tensors.bin";
    File f = open_file(path, "rb");
    for (auto& r : read_tensor_records(f.get(), path)) {
      check(r.is_f32(), ErrKind::data, "bad-dtype", path + ": bundle tensors must be f32");
      const bool is_img = r.name.rfind("img/", 0) == 0;
      const bool is_feat = r.name.rfind("feat/", 0) == 0;
      check(is_img || is_feat, ErrKind::data, "bad-name",
            path + ": record name must start with img/ or feat/: " + r.name);
      const int id = std::stoi(r.name.substr(is_img ? 4 : 5));
      auto it = sample_of_image.find(id);
      check(it != sample_of_image.end(), ErrKind::data, "bad-name",
            path + ": tensor for unknown image " + std::to_string(id));
      if (is_img)
        b.samples[it->second].image = std::move(std::get<0>(r.value));
      else
        b.samples[it->second].feature = std::move(std::get<0>(r.value));
    }
  }

  b.validate();
  return b;
}

uint64_t bundle_digest(const std::string& dir) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const char* name : {"schema.txt", "classes.tsv", "samples.tsv", "parts.tsv", "tensors.bin"}) {
    const std::string path = dir + "/" + name;
    if (!fs::exists(path)) continue;
    File f = open_file(path, "rb");
    char buf[65536];
    size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), f.get())) > 0) h = fnv1a(buf, n, h);
  }
  return h;
}

}  // namespace apn
