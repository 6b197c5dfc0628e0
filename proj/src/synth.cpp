#include "apn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "apn/rng.hpp"

namespace apn {

namespace {

struct Rgb {
  float r, g, b;
};

// Bright, mutually distinguishable glyph colors.
const Rgb kPalette[8] = {
    {1.0f, 0.15f, 0.15f}, {0.15f, 1.0f, 0.15f}, {0.25f, 0.45f, 1.0f}, {1.0f, 1.0f, 0.2f},
    {1.0f, 0.25f, 1.0f},  {0.2f, 1.0f, 1.0f},   {1.0f, 0.6f, 0.15f},  {0.9f, 0.9f, 0.9f},
};

const char* kShapeNames[3] = {"square", "disc", "diamond"};
const char* kColorNames[8] = {"red", "green", "blue", "yellow", "magenta", "cyan", "orange", "white"};

// Distinct signatures for n classes over variants^groups combinations.
std::vector<std::vector<int>> pick_signatures(int n, int groups, int variants, Rng& rng) {
  double space = std::pow((double)variants, (double)groups);
  if (space <= 200000.0) {
    int total = (int)std::llround(space);
    std::vector<int> order(total);
    for (int i = 0; i < total; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<std::vector<int>> out;
    for (int i = 0; i < n; ++i) {
      std::vector<int> sig(groups);
      int x = order[i];
      for (int l = 0; l < groups; ++l) {
        sig[l] = x % variants;
        x /= variants;
      }
      out.push_back(std::move(sig));
    }
    return out;
  }
  std::set<std::vector<int>> seen;
  std::vector<std::vector<int>> out;
  while ((int)out.size() < n) {
    std::vector<int> sig(groups);
    for (int l = 0; l < groups; ++l) sig[l] = rng.uniform_int(variants);
    if (seen.insert(sig).second) out.push_back(sig);
  }
  return out;
}

// Arranges the class signatures as [unseen..., val..., seen...] such that the
// seen split makes zero-shot transfer learnable, not merely well-defined:
//   - a "star": one base signature plus every single-group variation of it.
//     Any two star classes that differ do so in exactly one group, so the
//     embedding must discriminate every within-group variant pair;
//   - the remaining seen classes picked greedily to even out per-variant
//     counts (a variant occurring in one class trains a useless column).
// Unseen and validation classes come from the remaining combinations, which
// by distinctness never repeat a seen signature.
void arrange_splits(std::vector<std::vector<int>>& sigs, int split_from, int groups,
                    int variants, Rng& rng) {
  const int n = (int)sigs.size();
  const int n_seen = n - split_from;
  std::vector<char> taken(n, 0);
  std::vector<int> count((size_t)groups * variants, 0);
  std::vector<std::vector<int>> seen;

  auto take = [&](int c) {
    taken[c] = 1;
    seen.push_back(sigs[c]);
    for (int l = 0; l < groups; ++l) count[(size_t)l * variants + sigs[c][l]]++;
  };

  // star around a random base signature
  const std::vector<int> base = sigs[rng.uniform_int(n)];
  auto find_sig = [&](const std::vector<int>& want) {
    for (int c = 0; c < n; ++c)
      if (!taken[c] && sigs[c] == want) return c;
    return -1;
  };
  if (int c0 = find_sig(base); c0 >= 0 && (int)seen.size() < n_seen) take(c0);
  for (int l = 0; l < groups && (int)seen.size() < n_seen; ++l)
    for (int v = 0; v < variants && (int)seen.size() < n_seen; ++v) {
      if (v == base[l]) continue;
      std::vector<int> varied = base;
      varied[l] = v;
      if (int c = find_sig(varied); c >= 0) take(c);
    }

  // fill the rest of the seen split by coverage balance
  while ((int)seen.size() < n_seen) {
    int best = -1;
    long best_score = -1;
    for (int c = 0; c < n; ++c) {
      if (taken[c]) continue;
      long score = 0;
      for (int l = 0; l < groups; ++l)
        score += 1000 - std::min(count[(size_t)l * variants + sigs[c][l]], 1000);
      if (score > best_score) {
        best_score = score;
        best = c;
      }
    }
    take(best);
  }

  std::vector<std::vector<int>> rest;
  for (int c = 0; c < n; ++c)
    if (!taken[c]) rest.push_back(sigs[c]);
  rng.shuffle(rest);
  for (int i = 0; i < split_from; ++i) sigs[i] = rest[i];
  for (int i = split_from; i < n; ++i) sigs[i] = seen[i - split_from];
}

bool seen_covers_all_attributes(const std::vector<std::vector<int>>& sigs, int n_seen_from,
                                int groups, int variants) {
  std::vector<char> hit((size_t)groups * variants, 0);
  for (size_t c = n_seen_from; c < sigs.size(); ++c)
    for (int l = 0; l < groups; ++l) hit[(size_t)l * variants + sigs[c][l]] = 1;
  return std::all_of(hit.begin(), hit.end(), [](char h) { return h == 1; });
}

struct GlyphStamp {
  PartBox box;
};

// Paints glyph `variant` for group `part` into the slot; returns the exact
// pixel extent of what was painted.
GlyphStamp paint_glyph(Tensor<float>& img, int part, int variant, int slot_x, int slot_y,
                       int slot_w, int slot_h, int extent, Rng& rng) {
  const int s = (int)img.dim(1);
  const int mx = std::max(0, slot_w - extent), my = std::max(0, slot_h - extent);
  const int ox = slot_x + (mx > 0 ? rng.uniform_int(mx + 1) : 0);
  const int oy = slot_y + (my > 0 ? rng.uniform_int(my + 1) : 0);
  const Rgb col = kPalette[((part - 1) * 3 + variant) % 8];
  const float bright = (float)rng.uniform(0.75, 1.0);
  const int shape = variant % 3;
  const float c = (extent - 1) * 0.5f;
  const float rad = extent * 0.5f;

  int x0 = s, y0 = s, x1 = -1, y1 = -1;
  for (int dy = 0; dy < extent; ++dy)
    for (int dx = 0; dx < extent; ++dx) {
      bool on = false;
      switch (shape) {
        case 0: on = true; break;  // square
        case 1: {
          const float ddx = dx - c, ddy = dy - c;
          on = ddx * ddx + ddy * ddy <= rad * rad;
          break;  // disc
        }
        case 2: on = std::abs(dx - c) + std::abs(dy - c) <= rad; break;  // diamond
      }
      if (!on) continue;
      const int px = ox + dx, py = oy + dy;
      if (px < 0 || px >= s || py < 0 || py >= s) continue;
      img.at(0, py, px) = col.r * bright;
      img.at(1, py, px) = col.g * bright;
      img.at(2, py, px) = col.b * bright;
      x0 = std::min(x0, px);
      x1 = std::max(x1, px);
      y0 = std::min(y0, py);
      y1 = std::max(y1, py);
    }
  check(x1 >= 0, ErrKind::numeric, "empty-glyph", "glyph painted no pixels");
  return GlyphStamp{PartBox{part, x0, y0, x1, y1}};
}

}  // namespace

DatasetBundle generate_synthetic(const SynthConfig& cfg) {
  check(cfg.l_groups >= 1, ErrKind::usage, "bad-config", "need at least one attribute group");
  check(cfg.k_attrs % cfg.l_groups == 0, ErrKind::usage, "bad-config",
        "k_attrs must be divisible by l_groups");
  check(cfg.n_unseen < cfg.n_classes, ErrKind::usage, "bad-config",
        "n_unseen must be smaller than n_classes");
  check(cfg.n_unseen + cfg.n_val < cfg.n_classes, ErrKind::usage, "bad-config",
        "unseen+val classes must leave at least one seen class");
  check(cfg.image_size >= 8, ErrKind::usage, "bad-config", "image size too small");
  const int variants = cfg.k_attrs / cfg.l_groups;
  const double space = std::pow((double)variants, (double)cfg.l_groups);
  if ((double)cfg.n_classes > space)
    throw Error(ErrKind::data, "infeasible",
                "cannot build " + std::to_string(cfg.n_classes) + " distinct signatures from " +
                    std::to_string(variants) + "^" + std::to_string(cfg.l_groups) +
                    " glyph combinations");

  Rng rng(cfg.seed);

  // Signatures + split assignment; retry until the seen split covers every
  // attribute (always possible: all signatures are distinct and seen is the
  // largest split by construction).
  std::vector<std::vector<int>> sigs;
  const int split_from = cfg.n_unseen + cfg.n_val;
  for (int attempt = 0;; ++attempt) {
    check(attempt < 1000, ErrKind::data, "infeasible",
          "could not find a seen split covering all attributes");
    Rng sub = rng.fork(attempt);
    sigs = pick_signatures(cfg.n_classes, cfg.l_groups, variants, sub);
    arrange_splits(sigs, split_from, cfg.l_groups, variants, sub);
    if (seen_covers_all_attributes(sigs, split_from, cfg.l_groups, variants)) break;
  }

  DatasetBundle b;
  b.schema.k = cfg.k_attrs;
  b.schema.l = cfg.l_groups;
  for (int l = 1; l <= cfg.l_groups; ++l) b.schema.group_names.push_back("group" + std::to_string(l));
  for (int l = 0; l < cfg.l_groups; ++l)
    for (int v = 0; v < variants; ++v) {
      b.schema.group_of.push_back(l + 1);
      b.schema.names.push_back("slot" + std::to_string(l + 1) + "_" +
                               kColorNames[(l * 3 + v) % 8] + "_" + kShapeNames[v % 3]);
    }

  for (int c = 0; c < cfg.n_classes; ++c) {
    ClassInfo ci;
    ci.id = c;
    ci.split = c < cfg.n_unseen            ? Split::unseen
               : c < cfg.n_unseen + cfg.n_val ? Split::val
                                              : Split::seen;
    ci.phi.assign(cfg.k_attrs, 0.0f);
    for (int l = 0; l < cfg.l_groups; ++l) ci.phi[l * variants + sigs[c][l]] = 1.0f;
    Rng crng = rng.fork(1000 + c);
    for (float& v : ci.phi) {
      v += (float)crng.uniform(-cfg.phi_jitter, cfg.phi_jitter);
      v = std::clamp(v, 0.0f, 1.0f);
    }
    b.classes.classes.push_back(std::move(ci));
  }

  // Slot grid: gw x gh cells covering the image.
  const int gw = (int)std::ceil(std::sqrt((double)cfg.l_groups));
  const int gh = (cfg.l_groups + gw - 1) / gw;
  const int slot_w = cfg.image_size / gw, slot_h = cfg.image_size / gh;
  const int extent = std::max(4, (int)std::lround(std::min(slot_w, slot_h) * cfg.glyph_frac));

  int next_image_id = 0;
  for (int c = 0; c < cfg.n_classes; ++c) {
    Rng irng = rng.fork(2000 + c);
    for (int i = 0; i < cfg.imgs_per_class; ++i) {
      SampleRecord smp;
      smp.image_id = next_image_id++;
      smp.class_id = c;
      smp.image = Tensor<float>({3, (size_t)cfg.image_size, (size_t)cfg.image_size});
      for (float& v : smp.image.data) v = (float)irng.uniform(0.0, cfg.noise_amp);
      for (int l = 0; l < cfg.l_groups; ++l) {
        const int sx = (l % gw) * slot_w, sy = (l / gw) * slot_h;
        GlyphStamp g =
            paint_glyph(smp.image, l + 1, sigs[c][l], sx, sy, slot_w, slot_h, extent, irng);
        smp.parts.push_back(g.box);
      }
      b.samples.push_back(std::move(smp));
    }
  }

  b.validate();
  validate_synthetic(b);
  return b;
}

void validate_synthetic(const DatasetBundle& b) {
  // Active attribute set per class = indices with phi >= 0.5 (glyph present).
  auto active = [&](const ClassInfo& c) {
    std::vector<int> a;
    for (int k = 0; k < b.schema.k; ++k)
      if (c.phi[k] >= 0.5f) a.push_back(k);
    return a;
  };
  std::set<std::vector<int>> seen_sigs, unseen_sigs;
  std::set<int> covered;
  for (const auto& c : b.classes.classes) {
    std::vector<int> a = active(c);
    if (c.split == Split::unseen) unseen_sigs.insert(a);
    if (c.split == Split::seen) {
      seen_sigs.insert(a);
      covered.insert(a.begin(), a.end());
    }
  }
  for (const auto& s : unseen_sigs)
    check(seen_sigs.count(s) == 0, ErrKind::data, "leaked-signature",
          "an unseen class signature also occurs among seen classes");
  for (int k = 0; k < b.schema.k; ++k)
    check(covered.count(k) == 1, ErrKind::data, "uncovered-attribute",
          "attribute " + std::to_string(k) + " (" + b.schema.names[k] +
              ") never occurs in a seen class");
}

double chance_pcp(const DatasetBundle& b) {
  const double img_area = (double)b.image_size() * b.image_size();
  double acc = 0.0;
  long n = 0;
  for (const auto& s : b.samples)
    for (const auto& p : s.parts) {
      acc += (double)p.area() / img_area;
      ++n;
    }
  return n > 0 ? acc / (double)n : 0.0;
}

}  // namespace apn
