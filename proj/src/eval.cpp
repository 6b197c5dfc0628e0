#include "apn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "apn/episodes.hpp"
#include "apn/rng.hpp"

namespace apn {

namespace {

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

template <typename T>
Tensor<T> sample_input(const SampleRecord& s) {
  const Tensor<float>& src = s.image.empty() ? s.feature : s.image;
  if constexpr (std::is_same_v<T, float>)
    return src;
  else
    return cast<double>(src);
}

// Runs fn(i) over [0,n) in parallel, rethrowing the first failure.
template <typename Fn>
void parallel_for(int n, const Fn& fn) {
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
}

struct Job {
  int sample_idx;
  int true_pos;  // index into the evaluated class-id list
};

// Shared per-class accuracy accounting over a predicted-index vector.
EvalReport tally(const DatasetBundle& bundle, const std::vector<int>& class_ids,
                 const std::vector<Job>& jobs, const std::vector<int>& predicted) {
  EvalReport r;
  std::vector<ClassResult> per(class_ids.size());
  for (size_t j = 0; j < class_ids.size(); ++j) {
    per[j].class_id = class_ids[j];
    per[j].split = bundle.class_info(class_ids[j]).split;
  }
  for (size_t i = 0; i < jobs.size(); ++i) {
    ClassResult& c = per[jobs[i].true_pos];
    c.total++;
    if (predicted[i] == jobs[i].true_pos) c.correct++;
    r.confusion[{class_ids[jobs[i].true_pos], class_ids[predicted[i]]}]++;
  }
  r.per_class = std::move(per);
  return r;
}

// Classes with no test images are left out of the average.
double mean_acc(const std::vector<ClassResult>& per, Split split, bool any_split) {
  double acc = 0;
  int n = 0;
  for (const auto& c : per)
    if ((any_split || c.split == split) && c.total > 0) {
      acc += c.acc();
      ++n;
    }
  return n > 0 ? acc / n : -1;
}

}  // namespace

EvalMode eval_mode_from(const std::string& name) {
  if (name == "zsl") return EvalMode::zsl;
  if (name == "gzsl") return EvalMode::gzsl;
  if (name == "fsl") return EvalMode::fsl;
  if (name == "gfsl") return EvalMode::gfsl;
  throw Error(ErrKind::usage, "bad-mode", "unknown eval mode '" + name + "'");
}

const char* eval_mode_name(EvalMode m) {
  switch (m) {
    case EvalMode::zsl: return "zsl";
    case EvalMode::gzsl: return "gzsl";
    case EvalMode::fsl: return "fsl";
    case EvalMode::gfsl: return "gfsl";
  }
  return "?";
}

double harmonic_mean(double u, double s) {
  return (u + s) > 0 ? 2.0 * u * s / (u + s) : 0.0;
}

template <typename T>
int argmax_index(const Tensor<T>& v) {
  check(!v.empty(), ErrKind::data, "empty-tensor", "argmax over an empty score vector");
  size_t best = 0;
  for (size_t i = 1; i < v.numel(); ++i)
    if (v[i] > v[best]) best = i;
  return (int)best;
}

template <typename T>
int calibrated_argmax(const Tensor<T>& scores, const std::vector<char>& seen, double gamma) {
  check(scores.numel() == seen.size(), ErrKind::data, "shape-mismatch",
        "calibrated argmax needs one seen flag per score");
  check(gamma >= 0, ErrKind::usage, "bad-gamma", "calibration factor must be >= 0");
  size_t best = 0;
  double best_v = (double)scores[0] - (seen[0] ? gamma : 0.0);
  for (size_t i = 1; i < scores.numel(); ++i) {
    const double v = (double)scores[i] - (seen[i] ? gamma : 0.0);
    if (v > best_v) {
      best = i;
      best_v = v;
    }
  }
  return (int)best;
}

std::string EvalReport::to_tsv() const {
  std::string t = "apn-report\t1\n";
  t += "mode\t" + mode + "\n";
  if (t1 >= 0) t += "T1\t" + fmt6(t1) + "\n";
  if (u >= 0) t += "u\t" + fmt6(u) + "\n";
  if (s >= 0) t += "s\t" + fmt6(s) + "\n";
  if (h >= 0) t += "H\t" + fmt6(h) + "\n";
  if (gamma >= 0) t += "gamma\t" + fmt6(gamma) + "\n";
  if (fsl_acc >= 0) t += "fsl_acc\t" + fmt6(fsl_acc) + "\n";
  if (fsl_ci95 >= 0) t += "fsl_ci95\t" + fmt6(fsl_ci95) + "\n";
  if (mean_pcp >= 0) t += "mean_pcp\t" + fmt6(mean_pcp) + "\n";
  for (const auto& c : per_class)
    t += "class\t" + std::to_string(c.class_id) + "\t" + split_name(c.split) + "\t" +
         std::to_string(c.correct) + "\t" + std::to_string(c.total) + "\t" + fmt6(c.acc()) + "\n";
  for (const auto& p : per_part)
    t += "part\t" + std::to_string(p.part) + "\t" + std::to_string(p.correct) + "\t" +
         std::to_string(p.total) + "\t" + std::to_string(p.skipped) + "\t" + fmt6(p.pcp()) + "\n";
  for (const auto& [key, count] : confusion)
    t += "confusion\t" + std::to_string(key.first) + "\t" + std::to_string(key.second) + "\t" +
         std::to_string(count) + "\n";
  return t;
}

template <typename T>
EvalReport eval_zsl(const DatasetBundle& bundle, const model::ModelParams<T>& params, bool zoom) {
  std::vector<int> ids = bundle.classes.ids_with(Split::unseen);
  check(!ids.empty(), ErrKind::data, "empty-class-set", "no unseen classes to evaluate");
  std::sort(ids.begin(), ids.end());
  const Tensor<T> phi = cast<T>(model::phi_matrix(bundle, ids));

  std::vector<Job> jobs;
  for (size_t j = 0; j < ids.size(); ++j)
    for (int i : bundle.sample_indices_of_class(ids[j])) jobs.push_back({i, (int)j});

  std::vector<int> pred(jobs.size());
  const bool feat = bundle.has_features();
  parallel_for((int)jobs.size(), [&](int i) {
    const Tensor<T> in = sample_input<T>(bundle.samples[jobs[i].sample_idx]);
    auto tr = model::forward(in, feat, params, phi, bundle.schema, zoom);
    pred[i] = argmax_index(tr.logits);
  });

  EvalReport r = tally(bundle, ids, jobs, pred);
  r.mode = "zsl";
  r.t1 = mean_acc(r.per_class, Split::unseen, true);
  return r;
}

template <typename T>
EvalReport eval_gzsl(const DatasetBundle& bundle, const model::ModelParams<T>& params, bool zoom,
                     const EvalConfig& cfg) {
  double gamma = cfg.gamma;
  if (gamma < 0) {
    std::vector<double> grid;
    for (int i = 0; i <= 10; ++i) grid.push_back(0.1 * i);
    gamma = gamma_search(bundle, params, zoom, grid, cfg.holdout_every);
  }

  std::vector<int> seen_ids = bundle.classes.ids_with(Split::seen);
  std::vector<int> unseen_ids = bundle.classes.ids_with(Split::unseen);
  check(!seen_ids.empty() && !unseen_ids.empty(), ErrKind::data, "empty-class-set",
        "gzsl needs both seen and unseen classes");
  std::vector<int> ids = seen_ids;
  ids.insert(ids.end(), unseen_ids.begin(), unseen_ids.end());
  std::sort(ids.begin(), ids.end());
  std::vector<char> seen_flag(ids.size());
  for (size_t j = 0; j < ids.size(); ++j)
    seen_flag[j] = bundle.class_info(ids[j]).split == Split::seen;
  const Tensor<T> phi = cast<T>(model::phi_matrix(bundle, ids));

  std::vector<Job> jobs;
  for (size_t j = 0; j < ids.size(); ++j) {
    const bool is_seen = seen_flag[j];
    std::vector<int> idxs = is_seen
                                ? bundle.heldout_indices_of_class(ids[j], cfg.holdout_every)
                                : bundle.sample_indices_of_class(ids[j]);
    for (int i : idxs) jobs.push_back({i, (int)j});
  }

  std::vector<int> pred(jobs.size());
  const bool feat = bundle.has_features();
  parallel_for((int)jobs.size(), [&](int i) {
    const Tensor<T> in = sample_input<T>(bundle.samples[jobs[i].sample_idx]);
    auto tr = model::forward(in, feat, params, phi, bundle.schema, zoom);
    pred[i] = calibrated_argmax(tr.logits, seen_flag, gamma);
  });

  EvalReport r = tally(bundle, ids, jobs, pred);
  r.mode = "gzsl";
  r.gamma = gamma;
  r.u = mean_acc(r.per_class, Split::unseen, false);
  r.s = mean_acc(r.per_class, Split::seen, false);
  r.h = harmonic_mean(r.u, r.s);
  return r;
}

template <typename T>
double gamma_search(const DatasetBundle& bundle, const model::ModelParams<T>& params, bool zoom,
                    const std::vector<double>& grid, int holdout_every) {
  check(!grid.empty(), ErrKind::usage, "empty-grid", "gamma grid is empty");
  std::vector<int> val_ids = bundle.classes.ids_with(Split::val);
  if (val_ids.empty()) return 0.0;  // nothing to tune on
  std::vector<int> seen_ids = bundle.classes.ids_with(Split::seen);
  std::vector<int> ids = seen_ids;
  ids.insert(ids.end(), val_ids.begin(), val_ids.end());
  std::sort(ids.begin(), ids.end());
  std::vector<char> seen_flag(ids.size());
  for (size_t j = 0; j < ids.size(); ++j)
    seen_flag[j] = bundle.class_info(ids[j]).split == Split::seen;
  const Tensor<T> phi = cast<T>(model::phi_matrix(bundle, ids));

  std::vector<Job> jobs;
  for (size_t j = 0; j < ids.size(); ++j) {
    std::vector<int> idxs = seen_flag[j]
                                ? bundle.heldout_indices_of_class(ids[j], holdout_every)
                                : bundle.sample_indices_of_class(ids[j]);
    for (int i : idxs) jobs.push_back({i, (int)j});
  }

  std::vector<Tensor<T>> logits(jobs.size());
  const bool feat = bundle.has_features();
  parallel_for((int)jobs.size(), [&](int i) {
    const Tensor<T> in = sample_input<T>(bundle.samples[jobs[i].sample_idx]);
    logits[i] = model::forward(in, feat, params, phi, bundle.schema, zoom).logits;
  });

  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());
  double best_gamma = sorted[0], best_h = -1;
  for (double g : sorted) {
    std::vector<int> pred(jobs.size());
    for (size_t i = 0; i < jobs.size(); ++i)
      pred[i] = calibrated_argmax(logits[i], seen_flag, g);
    EvalReport r = tally(bundle, ids, jobs, pred);
    const double u = mean_acc(r.per_class, Split::val, false);
    const double s = mean_acc(r.per_class, Split::seen, false);
    const double h = harmonic_mean(u, s);
    if (h > best_h) {
      best_h = h;
      best_gamma = g;
    }
  }
  return best_gamma;
}

template <typename T>
std::vector<int> ncm_cosine(const std::vector<Tensor<T>>& centroids,
                            const std::vector<Tensor<T>>& queries) {
  check(!centroids.empty(), ErrKind::data, "empty-class-set", "no class centroids");
  auto norm = [](const Tensor<T>& v) {
    double n = 0;
    for (size_t i = 0; i < v.numel(); ++i) n += (double)v[i] * v[i];
    return std::sqrt(n);
  };
  std::vector<double> cnorm(centroids.size());
  for (size_t c = 0; c < centroids.size(); ++c) {
    cnorm[c] = norm(centroids[c]);
    if (cnorm[c] == 0)
      std::fprintf(stderr, "warning: zero-norm centroid %zu excluded from scoring\n", c);
  }
  std::vector<int> out(queries.size(), 0);
  for (size_t q = 0; q < queries.size(); ++q) {
    const double qn = norm(queries[q]);
    if (qn == 0) {
      std::fprintf(stderr, "warning: zero-norm query feature %zu excluded\n", q);
      out[q] = -1;
      continue;
    }
    int best = -1;
    double best_cos = 0;
    for (size_t c = 0; c < centroids.size(); ++c) {
      if (cnorm[c] == 0) continue;
      double d = 0;
      for (size_t i = 0; i < queries[q].numel(); ++i)
        d += (double)queries[q][i] * centroids[c][i];
      const double cosv = d / (qn * cnorm[c]);
      if (best < 0 || cosv > best_cos) {
        best = (int)c;
        best_cos = cosv;
      }
    }
    out[q] = best;
  }
  return out;
}

namespace {

// g(x) features for the listed samples, computed in parallel.
template <typename T>
std::vector<Tensor<T>> features_of(const DatasetBundle& bundle,
                                   const model::ModelParams<T>& params,
                                   const std::vector<int>& sample_idxs) {
  std::vector<Tensor<T>> out(sample_idxs.size());
  const bool feat = bundle.has_features();
  parallel_for((int)sample_idxs.size(), [&](int i) {
    const Tensor<T> in = sample_input<T>(bundle.samples[sample_idxs[i]]);
    const Tensor<T> f = feat ? in : model::encode(in, params);
    out[i] = model::global_feature(f);
  });
  return out;
}

template <typename T>
Tensor<T> mean_of(const std::vector<Tensor<T>>& vs, const std::vector<int>& idxs) {
  Tensor<T> m(vs[idxs[0]].shape);
  for (int i : idxs)
    for (size_t x = 0; x < m.numel(); ++x) m[x] += vs[i][x];
  for (size_t x = 0; x < m.numel(); ++x) m[x] /= (T)idxs.size();
  return m;
}

}  // namespace

template <typename T>
EvalReport eval_fsl(const DatasetBundle& bundle, const model::ModelParams<T>& params,
                    const EvalConfig& cfg) {
  const auto episodes =
      make_episodes(bundle, cfg.way, cfg.shot, cfg.query, cfg.episodes, cfg.seed);

  // feature cache over every novel sample that any episode touches
  std::vector<int> sample_idxs;
  for (int c : bundle.classes.ids_with(Split::unseen))
    for (int i : bundle.sample_indices_of_class(c)) sample_idxs.push_back(i);
  std::vector<int> where(bundle.samples.size(), -1);
  for (size_t i = 0; i < sample_idxs.size(); ++i) where[sample_idxs[i]] = (int)i;
  std::vector<Tensor<T>> feats = features_of(bundle, params, sample_idxs);

  std::vector<double> accs(episodes.size());
  for (size_t e = 0; e < episodes.size(); ++e) {
    const Episode& ep = episodes[e];
    std::vector<Tensor<T>> centroids;
    std::vector<Tensor<T>> queries;
    std::vector<int> truth;
    for (size_t w = 0; w < ep.class_ids.size(); ++w) {
      std::vector<int> sup;
      for (int s : ep.support[w]) sup.push_back(where[s]);
      centroids.push_back(mean_of(feats, sup));
      for (int q : ep.query[w]) {
        queries.push_back(feats[where[q]]);
        truth.push_back((int)w);
      }
    }
    const std::vector<int> pred = ncm_cosine(centroids, queries);
    long ok = 0, counted = 0;
    for (size_t q = 0; q < pred.size(); ++q) {
      if (pred[q] < 0) continue;
      ++counted;
      ok += pred[q] == truth[q];
    }
    accs[e] = counted > 0 ? (double)ok / counted : 0.0;
  }

  double mean = 0;
  for (double a : accs) mean += a;
  mean /= (double)accs.size();
  double var = 0;
  for (double a : accs) var += (a - mean) * (a - mean);
  var = accs.size() > 1 ? var / (double)(accs.size() - 1) : 0;

  EvalReport r;
  r.mode = "fsl";
  r.fsl_acc = mean;
  r.fsl_ci95 = 1.96 * std::sqrt(var / (double)accs.size());
  return r;
}

template <typename T>
EvalReport eval_gfsl(const DatasetBundle& bundle, const model::ModelParams<T>& params,
                     const EvalConfig& cfg) {
  check(cfg.shots >= 1, ErrKind::usage, "bad-config", "gfsl needs shots >= 1");
  std::vector<int> base_ids = bundle.classes.ids_with(Split::seen);
  std::vector<int> novel_ids = bundle.classes.ids_with(Split::unseen);
  check(!base_ids.empty() && !novel_ids.empty(), ErrKind::data, "empty-class-set",
        "gfsl needs base and novel classes");
  std::vector<int> ids = base_ids;
  ids.insert(ids.end(), novel_ids.begin(), novel_ids.end());
  std::sort(ids.begin(), ids.end());

  Rng rng(cfg.seed);
  std::vector<std::vector<int>> support_of(ids.size()), test_of(ids.size());
  for (size_t j = 0; j < ids.size(); ++j) {
    const bool novel = bundle.class_info(ids[j]).split == Split::unseen;
    if (!novel) {
      support_of[j] = bundle.train_indices_of_class(ids[j], cfg.holdout_every);
      test_of[j] = bundle.heldout_indices_of_class(ids[j], cfg.holdout_every);
    } else {
      std::vector<int> pool = bundle.sample_indices_of_class(ids[j]);
      // shots == all images is the limiting case of a plain nearest-class-mean
      // classifier; the class then simply has no test images
      check((int)pool.size() >= cfg.shots, ErrKind::data, "too-few-samples",
            "novel class " + std::to_string(ids[j]) + " has fewer than " +
                std::to_string(cfg.shots) + " support images");
      rng.shuffle(pool);
      support_of[j].assign(pool.begin(), pool.begin() + cfg.shots);
      test_of[j].assign(pool.begin() + cfg.shots, pool.end());
    }
  }

  std::vector<int> all;
  std::vector<int> where(bundle.samples.size(), -1);
  for (size_t j = 0; j < ids.size(); ++j)
    for (int lst = 0; lst < 2; ++lst)
      for (int i : (lst == 0 ? support_of[j] : test_of[j]))
        if (where[i] < 0) {
          where[i] = (int)all.size();
          all.push_back(i);
        }
  std::vector<Tensor<T>> feats = features_of(bundle, params, all);

  std::vector<Tensor<T>> centroids;
  for (size_t j = 0; j < ids.size(); ++j) {
    std::vector<int> sup;
    for (int i : support_of[j]) sup.push_back(where[i]);
    centroids.push_back(mean_of(feats, sup));
  }

  std::vector<Job> jobs;
  std::vector<Tensor<T>> queries;
  for (size_t j = 0; j < ids.size(); ++j)
    for (int i : test_of[j]) {
      jobs.push_back({i, (int)j});
      queries.push_back(feats[where[i]]);
    }
  std::vector<int> pred = ncm_cosine(centroids, queries);
  for (int& p : pred)
    if (p < 0) p = 0;

  EvalReport r = tally(bundle, ids, jobs, pred);
  r.mode = "gfsl";
  r.t1 = mean_acc(r.per_class, Split::seen, true);
  r.u = mean_acc(r.per_class, Split::unseen, false);
  r.s = mean_acc(r.per_class, Split::seen, false);
  r.h = harmonic_mean(r.u, r.s);
  return r;
}

template <typename T>
LocalizeResult localize(const model::ForwardTrace<T>& trace, int attribute, int side, double rho,
                        const PartBox* object_box, Tensor<T>* heat_out) {
  check(attribute >= 0 && (size_t)attribute < trace.M.dim(0), ErrKind::usage, "bad-attribute",
        "attribute index outside the similarity maps");
  check(rho > 0 && rho <= 1, ErrKind::usage, "bad-rho", "rho must lie in (0,1]");
  const size_t h = trace.M.dim(1), w = trace.M.dim(2);
  Tensor<T> heat({(size_t)side, (size_t)side});
  kernels::upsample_bilinear(trace.M.data.data() + (size_t)attribute * h * w, (int)h, (int)w,
                             heat.data.data(), side, side);
  size_t best = 0;
  for (size_t i = 1; i < heat.numel(); ++i)
    if (heat[i] > heat[best]) best = i;
  LocalizeResult res;
  res.peak = Peak{(int)(best / side), (int)(best % side)};
  if (heat_out) *heat_out = std::move(heat);

  double ref_side;
  if (object_box)
    ref_side = 0.5 * ((object_box->x1 - object_box->x0 + 1) + (object_box->y1 - object_box->y0 + 1));
  else
    ref_side = (double)side;
  const int half = std::max(1, (int)std::lround(rho * ref_side)) / 2;
  res.box.part = attribute;
  res.box.x0 = std::max(0, res.peak.j - half);
  res.box.y0 = std::max(0, res.peak.i - half);
  res.box.x1 = std::min(side - 1, res.peak.j + half);
  res.box.y1 = std::min(side - 1, res.peak.i + half);
  return res;
}

EvalReport pcp_core(const DatasetBundle& bundle, const PcpOptions&,
                    const std::function<bool(int)>& sample_filter, const PeakFn& peak_of) {
  check(bundle.schema.l >= 1, ErrKind::data, "no-groups", "pcp needs attribute groups");
  const auto groups = bundle.schema.groups();
  std::vector<PartResult> parts(bundle.schema.l);
  for (int l = 0; l < bundle.schema.l; ++l) parts[l].part = l + 1;

  for (size_t i = 0; i < bundle.samples.size(); ++i) {
    if (!sample_filter((int)i)) continue;
    const SampleRecord& s = bundle.samples[i];
    for (int l = 1; l <= bundle.schema.l; ++l) {
      const PartBox* gt = nullptr;
      for (const auto& p : s.parts)
        if (p.part == l) gt = &p;
      if (!gt) {
        parts[l - 1].skipped++;
        continue;
      }
      const Peak pk = peak_of((int)i, l, -1);
      parts[l - 1].total++;
      if (gt->contains(pk.j, pk.i)) parts[l - 1].correct++;
    }
  }

  EvalReport r;
  r.mode = "pcp";
  double mean = 0;
  for (const auto& p : parts) mean += p.pcp();
  r.mean_pcp = parts.empty() ? 0 : mean / (double)parts.size();
  r.per_part = std::move(parts);
  return r;
}

template <typename T>
EvalReport eval_pcp(const DatasetBundle& bundle, const model::ModelParams<T>& params,
                    const PcpOptions& opts) {
  check(bundle.has_images(), ErrKind::data, "no-images", "pcp needs raw-image bundles");
  const int side = bundle.image_size();
  const auto groups = bundle.schema.groups();

  std::vector<char> wanted(bundle.samples.size(), 0);
  for (size_t i = 0; i < bundle.samples.size(); ++i) {
    const Split sp = bundle.class_info(bundle.samples[i].class_id).split;
    for (Split want : opts.splits) wanted[i] |= sp == want;
    wanted[i] = wanted[i] && !bundle.samples[i].parts.empty();
  }

  // one forward per image, then group peaks from its trace
  std::vector<std::vector<Peak>> peak_cache(bundle.samples.size());
  std::vector<int> idxs;
  for (size_t i = 0; i < bundle.samples.size(); ++i)
    if (wanted[i]) idxs.push_back((int)i);

  const Tensor<T> phi = cast<T>(model::phi_matrix(
      bundle, bundle.classes.ids_with(Split::seen)));  // class set irrelevant to peaks
  parallel_for((int)idxs.size(), [&](int n) {
    const int i = idxs[n];
    const Tensor<T> in = sample_input<T>(bundle.samples[i]);
    auto tr = model::forward(in, false, params, phi, bundle.schema, /*zoom=*/false);
    std::vector<Peak> peaks(bundle.schema.l);
    for (int l = 1; l <= bundle.schema.l; ++l) {
      int best = groups[l - 1][0];
      for (int k : groups[l - 1])
        if (tr.a_hat[k] > tr.a_hat[best]) best = k;
      peaks[l - 1] = localize(tr, best, side, opts.rho, nullptr, (Tensor<T>*)nullptr).peak;
    }
    peak_cache[i] = std::move(peaks);
  });

  return pcp_core(
      bundle, opts, [&](int i) { return (bool)wanted[i]; },
      [&](int i, int group, int) { return peak_cache[i][group - 1]; });
}

EvalReport pcp_oracle(const DatasetBundle& bundle, const PcpOptions& opts) {
  return pcp_core(
      bundle, opts,
      [&](int i) {
        const Split sp = bundle.class_info(bundle.samples[i].class_id).split;
        for (Split want : opts.splits)
          if (sp == want) return !bundle.samples[i].parts.empty();
        return false;
      },
      [&](int i, int group, int) {
        for (const auto& p : bundle.samples[i].parts)
          if (p.part == group) return Peak{(p.y0 + p.y1) / 2, (p.x0 + p.x1) / 2};
        return Peak{0, 0};
      });
}

#define APN_EVAL_INSTANTIATE(T)                                                               \
  template int argmax_index<T>(const Tensor<T>&);                                             \
  template int calibrated_argmax<T>(const Tensor<T>&, const std::vector<char>&, double);      \
  template EvalReport eval_zsl<T>(const DatasetBundle&, const model::ModelParams<T>&, bool);  \
  template EvalReport eval_gzsl<T>(const DatasetBundle&, const model::ModelParams<T>&, bool,  \
                                   const EvalConfig&);                                        \
  template double gamma_search<T>(const DatasetBundle&, const model::ModelParams<T>&, bool,   \
                                  const std::vector<double>&, int);                           \
  template EvalReport eval_fsl<T>(const DatasetBundle&, const model::ModelParams<T>&,         \
                                  const EvalConfig&);                                         \
  template EvalReport eval_gfsl<T>(const DatasetBundle&, const model::ModelParams<T>&,        \
                                   const EvalConfig&);                                        \
  template std::vector<int> ncm_cosine<T>(const std::vector<Tensor<T>>&,                      \
                                          const std::vector<Tensor<T>>&);                     \
  template LocalizeResult localize<T>(const model::ForwardTrace<T>&, int, int, double,        \
                                      const PartBox*, Tensor<T>*);

APN_EVAL_INSTANTIATE(float)
APN_EVAL_INSTANTIATE(double)

template EvalReport eval_pcp<float>(const DatasetBundle&, const model::ModelParams<float>&,
                                    const PcpOptions&);
template EvalReport eval_pcp<double>(const DatasetBundle&, const model::ModelParams<double>&,
                                     const PcpOptions&);

}  // namespace apn
