#ifndef APN_SCHEMA_HPP
#define APN_SCHEMA_HPP

#include <string>
#include <vector>

#include "apn/error.hpp"
#include "apn/tensor.hpp"

namespace apn {

// K named attributes partitioned into L disjoint groups. group_of[k] in
// [0,L]; 0 means ungrouped (excluded from decorrelation and zoom selection).
struct AttributeSchema {
  int k = 0;
  int l = 0;
  std::vector<std::string> names;
  std::vector<int> group_of;
  std::vector<std::string> group_names;

  // 0-based attribute index sets per group 1..L.
  std::vector<std::vector<int>> groups() const {
    std::vector<std::vector<int>> g(l);
    for (int i = 0; i < k; ++i)
      if (group_of[i] >= 1) g[group_of[i] - 1].push_back(i);
    return g;
  }

  void validate() const;
  bool operator==(const AttributeSchema&) const = default;
};

enum class Split { seen, unseen, val };

const char* split_name(Split s);
Split split_from(const std::string& name);

struct ClassInfo {
  int id = 0;
  Split split = Split::seen;
  std::vector<float> phi;  // length K, values in [0,1]

  bool operator==(const ClassInfo&) const = default;
};

struct ClassTable {
  std::vector<ClassInfo> classes;

  int index_of(int class_id) const {
    for (size_t i = 0; i < classes.size(); ++i)
      if (classes[i].id == class_id) return (int)i;
    return -1;
  }
  std::vector<int> ids_with(Split s) const {
    std::vector<int> out;
    for (const auto& c : classes)
      if (c.split == s) out.push_back(c.id);
    return out;
  }
  bool operator==(const ClassTable&) const = default;
};

struct PartBox {
  int part = 0;  // references a group id (1..L)
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive pixel rectangle

  bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  long area() const { return (long)(x1 - x0 + 1) * (y1 - y0 + 1); }
  bool operator==(const PartBox&) const = default;
};

struct SampleRecord {
  int image_id = 0;
  int class_id = 0;
  Tensor<float> image;    // [3,S,S] in [0,1]; empty in feature bundles
  Tensor<float> feature;  // [C,H,W]; empty in raw-image bundles
  std::vector<PartBox> parts;

  bool operator==(const SampleRecord&) const = default;
};

struct DatasetBundle {
  AttributeSchema schema;
  ClassTable classes;
  std::vector<SampleRecord> samples;

  bool has_images() const { return !samples.empty() && !samples[0].image.empty(); }
  bool has_features() const { return !samples.empty() && !samples[0].feature.empty(); }
  int image_size() const { return has_images() ? (int)samples[0].image.dim(1) : 0; }

  const ClassInfo& class_info(int class_id) const {
    int idx = classes.index_of(class_id);
    check(idx >= 0, ErrKind::data, "unknown-class",
          "class id " + std::to_string(class_id) + " not in class table");
    return classes.classes[idx];
  }

  std::vector<int> sample_indices_of_class(int class_id) const {
    std::vector<int> out;
    for (size_t i = 0; i < samples.size(); ++i)
      if (samples[i].class_id == class_id) out.push_back((int)i);
    return out;
  }

  // Per-class image holdout: every holdout_every-th image of a class is
  // reserved for evaluation and never trained on. Applies to seen/val
  // classes; unseen classes are evaluation-only anyway.
  std::vector<int> train_indices_of_class(int class_id, int holdout_every) const;
  std::vector<int> heldout_indices_of_class(int class_id, int holdout_every) const;

  void validate() const;
  bool operator==(const DatasetBundle&) const = default;
};

}  // namespace apn

#endif
