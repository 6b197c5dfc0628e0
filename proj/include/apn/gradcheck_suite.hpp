#ifndef APN_GRADCHECK_SUITE_HPP
#define APN_GRADCHECK_SUITE_HPP

#include <string>
#include <vector>

#include "apn/model.hpp"
#include "apn/rng.hpp"

namespace apn {

struct GradCheckRow {
  std::string op;
  double max_rel_err = 0;
  double threshold = 0;
  bool ok() const { return max_rel_err < threshold; }
};

// Central-finite-difference verification of every differentiable primitive
// plus the full joint loss on a micro-model, in 64-bit mode. `trials` random
// points per op.
std::vector<GradCheckRow> run_gradcheck_suite(int trials, uint64_t seed);

}  // namespace apn

#endif
