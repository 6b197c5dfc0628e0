#include "apn/schema.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace apn {

const char* split_name(Split s) {
  switch (s) {
    case Split::seen: return "seen";
    case Split::unseen: return "unseen";
    case Split::val: return "val";
  }
  return "?";
}

Split split_from(const std::string& name) {
  if (name == "seen") return Split::seen;
  if (name == "unseen") return Split::unseen;
  if (name == "val") return Split::val;
  throw Error(ErrKind::data, "bad-split", "unknown split tag '" + name + "'");
}

void AttributeSchema::validate() const {
  check(k >= 1, ErrKind::data, "bad-schema", "attribute count must be >= 1");
  check((int)names.size() == k && (int)group_of.size() == k, ErrKind::data, "bad-schema",
        "schema name/group arrays must have K entries");
  check(l >= 0, ErrKind::data, "bad-schema", "group count must be >= 0");
  for (int g : group_of)
    check(g >= 0 && g <= l, ErrKind::data, "bad-schema", "attribute group index out of range");
}

std::vector<int> DatasetBundle::train_indices_of_class(int class_id, int holdout_every) const {
  std::vector<int> all = sample_indices_of_class(class_id);
  if (holdout_every <= 0) return all;
  std::vector<int> out;
  for (size_t i = 0; i < all.size(); ++i)
    if ((int)(i % holdout_every) != holdout_every - 1) out.push_back(all[i]);
  return out;
}

std::vector<int> DatasetBundle::heldout_indices_of_class(int class_id, int holdout_every) const {
  std::vector<int> all = sample_indices_of_class(class_id);
  if (holdout_every <= 0) return all;
  std::vector<int> out;
  for (size_t i = 0; i < all.size(); ++i)
    if ((int)(i % holdout_every) == holdout_every - 1) out.push_back(all[i]);
  return out;
}

void DatasetBundle::validate() const {
  schema.validate();
  std::set<int> ids;
  for (const auto& c : classes.classes) {
    check(ids.insert(c.id).second, ErrKind::data, "dup-class",
          "duplicate class id " + std::to_string(c.id));
    check((int)c.phi.size() == schema.k, ErrKind::data, "dim-mismatch",
          "class " + std::to_string(c.id) + " has phi length " + std::to_string(c.phi.size()) +
              ", schema K is " + std::to_string(schema.k));
    for (float v : c.phi)
      check(std::isfinite(v) && v >= 0.0f && v <= 1.0f, ErrKind::data, "bad-phi",
            "phi values must be finite and in [0,1]");
  }
  bool imgs = false, feats = false;
  int s = 0;
  for (const auto& smp : samples) {
    check(ids.count(smp.class_id) > 0, ErrKind::data, "unknown-class",
          "sample " + std::to_string(smp.image_id) + " references missing class " +
              std::to_string(smp.class_id));
    const bool has_img = !smp.image.empty(), has_feat = !smp.feature.empty();
    check(has_img != has_feat, ErrKind::data, "bad-sample",
          "sample must carry exactly one of image/feature");
    imgs |= has_img;
    feats |= has_feat;
    if (has_img) {
      check(smp.image.ndim() == 3 && smp.image.dim(0) == 3, ErrKind::data, "bad-sample",
            "image must be [3,S,S]");
      s = (int)smp.image.dim(1);
      for (const auto& b : smp.parts) {
        check(b.part >= 1 && b.part <= schema.l, ErrKind::data, "bad-part",
              "part id must reference a group");
        check(b.x0 >= 0 && b.y0 >= 0 && b.x1 < s && b.y1 < s && b.x0 <= b.x1 && b.y0 <= b.y1,
              ErrKind::data, "bad-part", "part box out of image bounds");
      }
    }
  }
  check(!(imgs && feats), ErrKind::data, "bad-bundle",
        "bundle mixes raw images and feature maps");
}

}  // namespace apn
