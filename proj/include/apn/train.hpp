#ifndef APN_TRAIN_HPP
#define APN_TRAIN_HPP

#include <string>
#include <utility>
#include <vector>

#include "apn/config_file.hpp"
#include "apn/model.hpp"

namespace apn {

struct TrainConfig {
  double lr = 1e-3;  // desk-scale default; the finetuning-scale value stays available via config
  double beta1 = 0.5, beta2 = 0.999;
  double lr_decay = 0.9;
  int lr_decay_every = 10;
  double lambda1 = 0.05, lambda2 = 0.01, lambda3 = 0.2;
  int epochs = 30;
  int batch = 32;
  uint64_t seed = 7;
  model::Toggles toggles;
  bool f64 = false;
  bool select_best = true;  // keep the epoch with the best validation ZSL T1
  int holdout_every = 5;    // every 5th image per class reserved for evaluation
  int val_per_class = 50;   // validation images per class for model selection (0 = all)
  model::ModelConfig model;

  std::string to_text() const;
  static TrainConfig from_key_values(const KeyValues& kv);
  static const std::set<std::string>& known_keys();
  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  model::LossBreakdown avg;
  double val_t1 = -1;
  double seconds = 0;
};

struct RunLog {
  std::vector<EpochLog> epochs;
  int best_epoch = -1;  // -1 means final parameters were kept

  std::string to_tsv() const;
};

template <typename T>
struct TrainResult {
  model::ModelParams<T> params;
  RunLog log;
};

template <typename T>
TrainResult<T> train(const DatasetBundle& bundle, const TrainConfig& cfg);

// Per-class top-1 over the validation classes, predicting among them only
// (the model-selection metric; class-averaged like every other accuracy).
template <typename T>
double validation_zsl_t1(const DatasetBundle& bundle, const model::ModelParams<T>& params,
                         bool zoom, int max_per_class);

struct GridPoint {
  double lambda1 = 0, gamma = 0, score = 0;
};

struct GridResult {
  TrainConfig best;
  double best_gamma = 0;
  std::vector<GridPoint> table;
};

// Exhaustive search over (lambda1, gamma) scored by validation ZSL T1;
// ties break toward smaller lambda1, then smaller gamma.
GridResult grid_search(const DatasetBundle& bundle, const TrainConfig& base,
                       const std::vector<double>& lambda1_grid,
                       const std::vector<double>& gamma_grid);

}  // namespace apn

#endif
