#ifndef APN_SYNTH_HPP
#define APN_SYNTH_HPP

#include <cstdint>

#include "apn/schema.hpp"

namespace apn {

// Attribute-grounded synthetic dataset: L part slots on a fixed grid, each
// slot showing one of K/L shape-color glyphs. A class is the combination of
// its active glyphs; unseen classes are combinations never seen in training
// although every individual glyph is.
struct SynthConfig {
  int n_classes = 25;
  int n_unseen = 5;
  int n_val = 4;  // classes held out for model selection / localization eval
  int k_attrs = 12;
  int l_groups = 4;
  int image_size = 64;
  int imgs_per_class = 200;
  uint64_t seed = 7;

  double noise_amp = 0.1;     // background speckle amplitude
  double phi_jitter = 0.05;   // +- jitter on class attribute values
  double glyph_frac = 0.625;  // glyph extent as a fraction of the slot side
};

DatasetBundle generate_synthetic(const SynthConfig& cfg);

// The generator's own validator: seen/unseen signature sets are disjoint and
// every attribute is active in at least one seen class. Throws on violation.
void validate_synthetic(const DatasetBundle& bundle);

// Expected chance level for peak-in-box localization: mean over all
// (image, part) pairs of box area / image area.
double chance_pcp(const DatasetBundle& bundle);

}  // namespace apn

#endif
