#ifndef APN_EVAL_HPP
#define APN_EVAL_HPP

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "apn/model.hpp"

namespace apn {

enum class EvalMode { zsl, gzsl, fsl, gfsl };

EvalMode eval_mode_from(const std::string& name);
const char* eval_mode_name(EvalMode m);

struct EvalConfig {
  EvalMode mode = EvalMode::zsl;
  double gamma = -1;  // < 0: pick by validation sweep (gzsl only)
  int way = 5, shot = 1, query = 15, episodes = 600;
  int shots = 1;       // gfsl novel supports
  double rho = 0.25;   // localization box size ratio
  uint64_t seed = 7;
  int holdout_every = 5;  // must match the training holdout convention
};

struct ClassResult {
  int class_id = 0;
  Split split = Split::seen;
  long correct = 0, total = 0;
  double acc() const { return total > 0 ? (double)correct / (double)total : 0.0; }
};

struct PartResult {
  int part = 0;
  long correct = 0, total = 0, skipped = 0;
  double pcp() const { return total > 0 ? (double)correct / (double)total : 0.0; }
};

struct EvalReport {
  std::string mode;
  double t1 = -1;
  double u = -1, s = -1, h = -1, gamma = -1;
  double fsl_acc = -1, fsl_ci95 = -1;
  double mean_pcp = -1;
  std::vector<ClassResult> per_class;
  std::vector<PartResult> per_part;
  std::map<std::pair<int, int>, long> confusion;  // (true, predicted) -> count

  std::string to_tsv() const;
};

double harmonic_mean(double u, double s);

// argmax with ties to the smallest index.
template <typename T>
int argmax_index(const Tensor<T>& v);

// Eq.-12-style calibrated argmax: scores[j] - gamma when seen[j].
template <typename T>
int calibrated_argmax(const Tensor<T>& scores, const std::vector<char>& seen, double gamma);

template <typename T>
EvalReport eval_zsl(const DatasetBundle& bundle, const model::ModelParams<T>& params, bool zoom);

template <typename T>
EvalReport eval_gzsl(const DatasetBundle& bundle, const model::ModelParams<T>& params, bool zoom,
                     const EvalConfig& cfg);

// Sweeps gamma over the grid on validation classes (treated as unseen) and
// returns the value maximizing the harmonic mean; ties go to the smaller
// gamma.
template <typename T>
double gamma_search(const DatasetBundle& bundle, const model::ModelParams<T>& params, bool zoom,
                    const std::vector<double>& grid, int holdout_every);

template <typename T>
EvalReport eval_fsl(const DatasetBundle& bundle, const model::ModelParams<T>& params,
                    const EvalConfig& cfg);

template <typename T>
EvalReport eval_gfsl(const DatasetBundle& bundle, const model::ModelParams<T>& params,
                     const EvalConfig& cfg);

// Nearest-class-mean with cosine similarity over precomputed features.
// Zero-norm vectors are excluded with a warning. Returns one label index per
// query row (index into the centroid list).
template <typename T>
std::vector<int> ncm_cosine(const std::vector<Tensor<T>>& centroids,
                            const std::vector<Tensor<T>>& queries);

struct LocalizeResult {
  Peak peak;      // pixel position of the upsampled-map maximum
  PartBox box;    // rho-sized square around the peak, clipped to the image
};

// Upsamples M[k] to side x side; heat_out receives the upsampled map when
// non-null. object_box defines the reference side for the rho-sized box; a
// null pointer means the whole image.
template <typename T>
LocalizeResult localize(const model::ForwardTrace<T>& trace, int attribute, int side, double rho,
                        const PartBox* object_box, Tensor<T>* heat_out);

struct PcpOptions {
  double rho = 0.25;
  std::vector<Split> splits = {Split::val};
};

// Peak provider: (sample index, group id, chosen attribute) -> pixel peak.
using PeakFn = std::function<Peak(int sample_idx, int group, int attribute)>;

// Core PCP counting walked by both the model path and oracle paths.
EvalReport pcp_core(const DatasetBundle& bundle, const PcpOptions& opts,
                    const std::function<bool(int)>& sample_filter, const PeakFn& peak_of);

template <typename T>
EvalReport eval_pcp(const DatasetBundle& bundle, const model::ModelParams<T>& params,
                    const PcpOptions& opts);

// PCP when the peaks are the ground-truth box centers; by construction 100%.
EvalReport pcp_oracle(const DatasetBundle& bundle, const PcpOptions& opts);

}  // namespace apn

#endif
