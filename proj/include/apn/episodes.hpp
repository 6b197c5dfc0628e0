#ifndef APN_EPISODES_HPP
#define APN_EPISODES_HPP

#include <cstdint>
#include <vector>

#include "apn/schema.hpp"

namespace apn {

// One N-way episode: per selected class, disjoint support and query sample
// indices into bundle.samples.
struct Episode {
  std::vector<int> class_ids;                    // `way` novel classes
  std::vector<std::vector<int>> support;         // [way][shot]
  std::vector<std::vector<int>> query;           // [way][query]
};

std::vector<Episode> make_episodes(const DatasetBundle& bundle, int way, int shot, int query,
                                   int episodes, uint64_t seed);

}  // namespace apn

#endif
