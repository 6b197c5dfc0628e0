#include "apn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "apn/rng.hpp"

namespace apn {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

template <typename T>
struct Adam {
  double beta1, beta2, eps = 1e-8;
  long step = 0;
  std::vector<std::vector<T>> m, v;

  void init(model::ModelParams<T>& params, double b1, double b2) {
    beta1 = b1;
    beta2 = b2;
    params.visit([&](const std::string&, Tensor<T>& t) {
      m.emplace_back(t.numel(), T(0));
      v.emplace_back(t.numel(), T(0));
    });
  }

  void update(model::ModelParams<T>& params, const std::vector<Tensor<T>>& grads, double lr) {
    ++step;
    const double bc1 = 1.0 - std::pow(beta1, (double)step);
    const double bc2 = 1.0 - std::pow(beta2, (double)step);
    size_t idx = 0;
    params.visit([&](const std::string&, Tensor<T>& t) {
      std::vector<T>& mi = m[idx];
      std::vector<T>& vi = v[idx];
      const Tensor<T>& g = grads[idx];
      for (size_t i = 0; i < t.numel(); ++i) {
        mi[i] = (T)(beta1 * mi[i] + (1.0 - beta1) * g[i]);
        vi[i] = (T)(beta2 * vi[i] + (1.0 - beta2) * g[i] * g[i]);
        const double mhat = mi[i] / bc1;
        const double vhat = vi[i] / bc2;
        t[i] -= (T)(lr * mhat / (std::sqrt(vhat) + eps));
      }
      ++idx;
    });
  }
};

// Class-balanced epoch order: shuffle each class's sample list, then deal one
// sample per class in a reshuffled class order until all are consumed.
std::vector<int> balanced_order(const std::vector<std::vector<int>>& per_class, Rng& rng) {
  std::vector<std::vector<int>> pools = per_class;
  for (auto& p : pools) rng.shuffle(p);
  std::vector<int> order;
  size_t total = 0;
  for (const auto& p : pools) total += p.size();
  order.reserve(total);
  std::vector<size_t> cursor(pools.size(), 0);
  std::vector<int> cls(pools.size());
  for (size_t i = 0; i < cls.size(); ++i) cls[i] = (int)i;
  while (order.size() < total) {
    rng.shuffle(cls);
    for (int c : cls)
      if (cursor[c] < pools[c].size()) order.push_back(pools[c][cursor[c]++]);
  }
  return order;
}

template <typename T>
const Tensor<T>& input_of(const SampleRecord& s, Tensor<T>& scratch) {
  const Tensor<float>& src = s.image.empty() ? s.feature : s.image;
  if constexpr (std::is_same_v<T, float>) {
    return src;
  } else {
    scratch = cast<double>(src);
    return scratch;
  }
}

}  // namespace

std::string TrainConfig::to_text() const {
  std::string t;
  t += "lr = " + fmt(lr) + "\n";
  t += "beta1 = " + fmt(beta1) + "\n";
  t += "beta2 = " + fmt(beta2) + "\n";
  t += "lr_decay = " + fmt(lr_decay) + "\n";
  t += "lr_decay_every = " + std::to_string(lr_decay_every) + "\n";
  t += "lambda1 = " + fmt(lambda1) + "\n";
  t += "lambda2 = " + fmt(lambda2) + "\n";
  t += "lambda3 = " + fmt(lambda3) + "\n";
  t += "epochs = " + std::to_string(epochs) + "\n";
  t += "batch = " + std::to_string(batch) + "\n";
  t += "seed = " + std::to_string(seed) + "\n";
  t += "reg = " + std::string(toggles.reg ? "1" : "0") + "\n";
  t += "ad = " + std::string(toggles.ad ? "1" : "0") + "\n";
  t += "cpt = " + std::string(toggles.cpt ? "1" : "0") + "\n";
  t += "zoom = " + std::string(toggles.zoom ? "1" : "0") + "\n";
  t += "f64 = " + std::string(f64 ? "1" : "0") + "\n";
  t += "select_best = " + std::string(select_best ? "1" : "0") + "\n";
  t += "holdout_every = " + std::to_string(holdout_every) + "\n";
  t += "val_per_class = " + std::to_string(val_per_class) + "\n";
  return t;
}

const std::set<std::string>& TrainConfig::known_keys() {
  static const std::set<std::string> keys = {
      "lr",     "beta1",  "beta2", "lr_decay", "lr_decay_every", "lambda1",
      "lambda2", "lambda3", "epochs", "batch",   "seed",           "reg",
      "ad",     "cpt",    "zoom",  "f64",      "select_best",    "holdout_every",
      "val_per_class", "model.input_size", "model.kernel", "model.channels", "model.k_attrs"};
  return keys;
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
  TrainConfig c;
  c.lr = kv.get_double("lr", c.lr);
  c.beta1 = kv.get_double("beta1", c.beta1);
  c.beta2 = kv.get_double("beta2", c.beta2);
  c.lr_decay = kv.get_double("lr_decay", c.lr_decay);
  c.lr_decay_every = kv.get_int("lr_decay_every", c.lr_decay_every);
  c.lambda1 = kv.get_double("lambda1", c.lambda1);
  c.lambda2 = kv.get_double("lambda2", c.lambda2);
  c.lambda3 = kv.get_double("lambda3", c.lambda3);
  c.epochs = kv.get_int("epochs", c.epochs);
  c.batch = kv.get_int("batch", c.batch);
  if (kv.has("seed")) c.seed = (uint64_t)std::stoull(kv.get("seed"));
  c.toggles.reg = kv.get_bool("reg", c.toggles.reg);
  c.toggles.ad = kv.get_bool("ad", c.toggles.ad);
  c.toggles.cpt = kv.get_bool("cpt", c.toggles.cpt);
  c.toggles.zoom = kv.get_bool("zoom", c.toggles.zoom);
  c.f64 = kv.get_bool("f64", c.f64);
  c.select_best = kv.get_bool("select_best", c.select_best);
  c.holdout_every = kv.get_int("holdout_every", c.holdout_every);
  c.val_per_class = kv.get_int("val_per_class", c.val_per_class);
  if (kv.has("model.input_size")) c.model.input_size = kv.get_int("model.input_size");
  if (kv.has("model.kernel")) c.model.kernel = kv.get_int("model.kernel");
  if (kv.has("model.channels")) {
    c.model.channels.clear();
    for (const auto& s : kv.get_list("model.channels")) c.model.channels.push_back(std::stoi(s));
  }
  return c;
}

void TrainConfig::validate() const {
  check(lambda1 >= 0 && lambda2 >= 0 && lambda3 >= 0, ErrKind::usage, "bad-config",
        "loss weights must be non-negative");
  check(lr > 0 && epochs >= 0 && batch >= 1, ErrKind::usage, "bad-config",
        "lr must be positive, epochs >= 0, batch >= 1");
  check(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, ErrKind::usage, "bad-config",
        "Adam betas must lie in [0,1)");
}

std::string RunLog::to_tsv() const {
  std::string t = "epoch\tl_cls\tl_reg\tl_ad\tl_cpt\ttotal\tval_t1\tseconds\n";
  char buf[256];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof(buf), "%d\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.3f\n", e.epoch,
                  e.avg.cls, e.avg.reg, e.avg.ad, e.avg.cpt, e.avg.total, e.val_t1, e.seconds);
    t += buf;
  }
  t += "best_epoch\t" + std::to_string(best_epoch) + "\n";
  return t;
}

template <typename T>
double validation_zsl_t1(const DatasetBundle& bundle, const model::ModelParams<T>& params,
                         bool zoom, int max_per_class) {
  std::vector<int> val_ids = bundle.classes.ids_with(Split::val);
  if (val_ids.empty()) return -1;
  std::sort(val_ids.begin(), val_ids.end());
  const Tensor<T> phi = cast<T>(model::phi_matrix(bundle, val_ids));

  struct Job {
    int sample_idx, true_pos;
  };
  std::vector<Job> jobs;
  for (size_t j = 0; j < val_ids.size(); ++j) {
    std::vector<int> idxs = bundle.sample_indices_of_class(val_ids[j]);
    if (max_per_class > 0 && (int)idxs.size() > max_per_class) idxs.resize(max_per_class);
    for (int i : idxs) jobs.push_back({i, (int)j});
  }
  std::vector<char> hit(jobs.size(), 0);
  const bool feat = bundle.has_features();

  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (int j = 0; j < (int)jobs.size(); ++j) {
    try {
      Tensor<T> scratch;
      const SampleRecord& s = bundle.samples[jobs[j].sample_idx];
      const Tensor<T>& in = input_of<T>(s, scratch);
      auto tr = model::forward(in, feat, params, phi, bundle.schema, zoom);
      size_t best = 0;
      for (size_t x = 1; x < tr.logits.numel(); ++x)
        if (tr.logits[x] > tr.logits[best]) best = x;
      hit[j] = best == (size_t)jobs[j].true_pos;
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  std::vector<int> correct(val_ids.size(), 0), total(val_ids.size(), 0);
  for (size_t j = 0; j < jobs.size(); ++j) {
    total[jobs[j].true_pos]++;
    correct[jobs[j].true_pos] += hit[j];
  }
  double acc = 0;
  for (size_t j = 0; j < val_ids.size(); ++j)
    acc += total[j] > 0 ? (double)correct[j] / total[j] : 0.0;
  return acc / (double)val_ids.size();
}

template <typename T>
TrainResult<T> train(const DatasetBundle& bundle, const TrainConfig& cfg_in) {
  TrainConfig cfg = cfg_in;
  cfg.validate();
  bundle.validate();
  check(!bundle.classes.ids_with(Split::seen).empty(), ErrKind::data, "no-seen-classes",
        "bundle has no seen classes to train on");
  if (cfg.toggles.zoom && bundle.has_features()) cfg.toggles.zoom = false;
  if (cfg.toggles.ad && bundle.schema.l == 0) cfg.toggles.ad = false;  // group-free mode

  model::ModelParams<T> params;
  if (bundle.has_features())
    params = model::ModelParams<T>::init_headless((int)bundle.samples[0].feature.dim(0),
                                                  bundle.schema.k, cfg.seed);
  else {
    model::ModelConfig mc = cfg.model;
    mc.input_size = bundle.image_size();
    params = model::ModelParams<T>::init(mc, bundle.schema.k, cfg.seed);
  }

  std::vector<int> seen_ids = bundle.classes.ids_with(Split::seen);
  std::sort(seen_ids.begin(), seen_ids.end());
  const Tensor<T> phi_seen = cast<T>(model::phi_matrix(bundle, seen_ids));
  std::vector<int> class_pos(seen_ids.size());
  std::vector<std::vector<int>> per_class;
  std::vector<int> label_of_sample(bundle.samples.size(), -1);
  for (size_t j = 0; j < seen_ids.size(); ++j) {
    per_class.push_back(bundle.train_indices_of_class(seen_ids[j], cfg.holdout_every));
    check(!per_class.back().empty(), ErrKind::data, "no-train-images",
          "seen class " + std::to_string(seen_ids[j]) + " has no training images");
    for (int i : per_class.back()) label_of_sample[i] = (int)j;
  }

  model::LossWeights weights{cfg.lambda1, cfg.lambda2, cfg.lambda3};
  Adam<T> adam;
  adam.init(params, cfg.beta1, cfg.beta2);
  size_t n_params = 0;
  params.visit([&](const std::string&, Tensor<T>&) { ++n_params; });

  Rng rng(cfg.seed ^ 0x5eedf00dull);
  RunLog log;
  model::ModelParams<T> best = params;
  double best_val = -2;
  const bool feat = bundle.has_features();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr =
        cfg.lr * std::pow(cfg.lr_decay, (double)(epoch / std::max(1, cfg.lr_decay_every)));
    Rng erng = rng.fork((uint64_t)epoch);
    std::vector<int> order = balanced_order(per_class, erng);

    model::LossBreakdown sums;
    long n_done = 0;
    for (size_t off = 0; off < order.size(); off += (size_t)cfg.batch) {
      const int bn = (int)std::min((size_t)cfg.batch, order.size() - off);
      std::vector<std::vector<Tensor<T>>> grads(bn);
      std::vector<model::LossBreakdown> bds(bn);
      std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
      for (int i = 0; i < bn; ++i) {
        try {
          Tensor<T> scratch;
          const SampleRecord& s = bundle.samples[order[off + i]];
          const Tensor<T>& in = input_of<T>(s, scratch);
          auto pass = model::training_pass(params, in, feat, phi_seen,
                                           label_of_sample[order[off + i]], bundle.schema,
                                           cfg.toggles, weights);
          pass.backward();
          grads[i].reserve(n_params);
          for (size_t p = 0; p < n_params; ++p) grads[i].push_back(pass.param_grad(p));
          bds[i] = pass.breakdown;
        } catch (...) {
#pragma omp critical
          if (!err) err = std::current_exception();
        }
      }
      if (err) {
        try {
          std::rethrow_exception(err);
        } catch (const Error& e) {
          // numeric failures mid-epoch are divergence, reported with the epoch
          if (e.kind() == ErrKind::numeric)
            throw Error(ErrKind::numeric, "diverged",
                        "epoch " + std::to_string(epoch) + ": " + e.what());
          throw;
        }
      }

      // fixed-order reduction: sample order, then parameter order
      std::vector<Tensor<T>> acc = std::move(grads[0]);
      for (int i = 1; i < bn; ++i)
        for (size_t p = 0; p < n_params; ++p)
          for (size_t x = 0; x < acc[p].numel(); ++x) acc[p][x] += grads[i][p][x];
      const T inv = T(1) / T(bn);
      for (auto& g : acc)
        for (auto& v : g.data) v *= inv;

      adam.update(params, acc, lr);

      for (int i = 0; i < bn; ++i) {
        sums.cls += bds[i].cls;
        sums.reg += bds[i].reg;
        sums.ad += bds[i].ad;
        sums.cpt += bds[i].cpt;
        sums.total += bds[i].total;
        check(std::isfinite(bds[i].total), ErrKind::numeric, "diverged",
              "non-finite training loss at epoch " + std::to_string(epoch));
      }
      n_done += bn;
    }
    check(params.finite(), ErrKind::numeric, "diverged",
          "non-finite parameters after epoch " + std::to_string(epoch));

    EpochLog e;
    e.epoch = epoch;
    e.avg.cls = sums.cls / n_done;
    e.avg.reg = sums.reg / n_done;
    e.avg.ad = sums.ad / n_done;
    e.avg.cpt = sums.cpt / n_done;
    e.avg.total = sums.total / n_done;
    if (cfg.select_best)
      e.val_t1 = validation_zsl_t1(bundle, params, cfg.toggles.zoom, cfg.val_per_class);
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.epochs.push_back(e);

    // ties keep the later epoch: equal validation score, more training
    if (cfg.select_best && e.val_t1 >= best_val) {
      best_val = e.val_t1;
      best = params;
      log.best_epoch = epoch;
    }
  }

  TrainResult<T> result;
  result.params = (cfg.select_best && log.best_epoch >= 0) ? std::move(best) : std::move(params);
  result.log = std::move(log);
  return result;
}

GridResult grid_search(const DatasetBundle& bundle, const TrainConfig& base,
                       const std::vector<double>& lambda1_grid,
                       const std::vector<double>& gamma_grid) {
  check(!lambda1_grid.empty() && !gamma_grid.empty(), ErrKind::usage, "empty-grid",
        "grid search needs at least one candidate per axis");
  const std::vector<int> val_ids = bundle.classes.ids_with(Split::val);
  check(!val_ids.empty(), ErrKind::data, "no-val-classes",
        "grid search needs validation classes");
  if (val_ids.size() == 1)
    std::fprintf(stderr,
                 "warning: validation split has a single class; scores are degenerate\n");

  std::vector<double> l1s = lambda1_grid, gammas = gamma_grid;
  std::sort(l1s.begin(), l1s.end());
  std::sort(gammas.begin(), gammas.end());

  GridResult r;
  for (double l1 : l1s) {
    TrainConfig cfg = base;
    cfg.lambda1 = l1;
    TrainResult<float> tr = train<float>(bundle, cfg);
    const double score =
        validation_zsl_t1<float>(bundle, tr.params, cfg.toggles.zoom, /*max_per_class=*/0);
    for (double g : gammas) r.table.push_back(GridPoint{l1, g, score});
  }
  // candidates are ordered by (lambda1, gamma) ascending; strict > keeps the
  // smallest pair on ties
  size_t best_i = 0;
  for (size_t i = 1; i < r.table.size(); ++i)
    if (r.table[i].score > r.table[best_i].score) best_i = i;
  r.best = base;
  r.best.lambda1 = r.table[best_i].lambda1;
  r.best_gamma = r.table[best_i].gamma;
  return r;
}

template struct TrainResult<float>;
template struct TrainResult<double>;
template TrainResult<float> train<float>(const DatasetBundle&, const TrainConfig&);
template TrainResult<double> train<double>(const DatasetBundle&, const TrainConfig&);
template double validation_zsl_t1<float>(const DatasetBundle&, const model::ModelParams<float>&,
                                         bool, int);
template double validation_zsl_t1<double>(const DatasetBundle&, const model::ModelParams<double>&,
                                          bool, int);

}  // namespace apn
