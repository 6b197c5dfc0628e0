#include "apn/episodes.hpp"

#include "apn/rng.hpp"

namespace apn {

std::vector<Episode> make_episodes(const DatasetBundle& bundle, int way, int shot, int query,
                                   int episodes, uint64_t seed) {
  check(way >= 1 && shot >= 1 && query >= 1 && episodes >= 1, ErrKind::usage, "bad-config",
        "way/shot/query/episodes must be positive");
  std::vector<int> novel = bundle.classes.ids_with(Split::unseen);
  check((int)novel.size() >= way, ErrKind::data, "too-few-classes",
        "episode needs " + std::to_string(way) + " novel classes, bundle has " +
            std::to_string(novel.size()));
  for (int c : novel) {
    const int n = (int)bundle.sample_indices_of_class(c).size();
    check(n >= shot + query, ErrKind::data, "too-few-samples",
          "class " + std::to_string(c) + " has " + std::to_string(n) + " samples, episode needs " +
              std::to_string(shot + query));
  }

  Rng rng(seed);
  std::vector<Episode> out;
  out.reserve(episodes);
  for (int e = 0; e < episodes; ++e) {
    Episode ep;
    std::vector<int> pool = novel;
    rng.shuffle(pool);
    ep.class_ids.assign(pool.begin(), pool.begin() + way);
    for (int c : ep.class_ids) {
      std::vector<int> samples = bundle.sample_indices_of_class(c);
      rng.shuffle(samples);
      ep.support.emplace_back(samples.begin(), samples.begin() + shot);
      ep.query.emplace_back(samples.begin() + shot, samples.begin() + shot + query);
    }
    out.push_back(std::move(ep));
  }
  return out;
}

}  // namespace apn
