// Acceptance suite: runs every criterion end to end and prints one PASS/FAIL
// line each. Exit code is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "apn/bundle_io.hpp"
#include "apn/checkpoint.hpp"
#include "apn/eval.hpp"
#include "apn/gradcheck_suite.hpp"
#include "apn/synth.hpp"
#include "apn/train.hpp"

using namespace apn;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int criterion, bool ok, const std::string& detail) {
  std::printf("[%s] criterion %2d: %s\n", ok ? "PASS" : "FAIL", criterion, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

AttributeSchema micro_schema() {
  AttributeSchema s;
  s.k = 4;
  s.l = 2;
  s.names = {"a0", "a1", "b0", "b1"};
  s.group_of = {1, 1, 2, 2};
  s.group_names = {"group1", "group2"};
  return s;
}

model::ModelConfig micro_model() {
  model::ModelConfig c;
  c.input_size = 6;
  c.channels = {4};
  return c;
}

Tensor<double> micro_phi() {
  Tensor<double> phi({2, 4});
  phi.data = {0.9, 0.1, 0.8, 0.2, 0.1, 0.9, 0.15, 0.85};
  return phi;
}

// ---------- criterion 1: gradient suite ----------

void criterion_1() {
  const auto t0 = Clock::now();
  auto rows = run_gradcheck_suite(/*trials=*/100, /*seed=*/2024);
  double worst = 0;
  bool ok = true;
  std::string worst_op;
  for (const auto& r : rows) {
    if (r.max_rel_err >= 1e-4) ok = false;
    if (r.max_rel_err > worst) {
      worst = r.max_rel_err;
      worst_op = r.op;
    }
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 60.0;
  report(1, ok,
         fmt("gradient suite: %zu ops x 100 trials, worst %.2e (%s), tolerance 1e-4, %.1fs (< 60s)",
             rows.size(), worst, worst_op.c_str(), secs));
}

// ---------- criterion 2: loss oracles ----------

void criterion_2() {
  bool ok = true;
  std::string fail;
  auto expect = [&](const char* name, double got, double want) {
    if (std::abs(got - want) > 1e-6) {
      ok = false;
      fail += fmt(" %s got %.8f want %.8f;", name, got, want);
    }
  };

  Tensor<double> two({2}, 0.0);
  expect("cls-ln2", model::cls_loss(two, 0), std::log(2.0));
  Tensor<double> three({3});
  three.data = {1, 0, 0};
  expect("cls-3logit", model::cls_loss(three, 0), -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0)));

  Tensor<double> a({2}), bb({2});
  a.data = {1, 0};
  bb.data = {0, 1};
  expect("reg-2", model::reg_loss(a, bb), 2.0);
  Tensor<double> m1({2}), m2({2});
  m1.data = {1, 2};
  m2.data = {1, 4};
  expect("mse-sum-4", model::reg_loss(m1, m2), 4.0);

  Tensor<double> P({2, 2});
  P.data = {3, 0, 4, 0};
  expect("ad-345", model::ad_loss(P, {{0, 1}}), 5.0);
  Tensor<double> Z({2, 2}, 0.0);
  expect("ad-zero", model::ad_loss(Z, {{0, 1}}), 0.0);

  Tensor<double> M({1, 2, 2});
  M.data = {1, 1, 0, 0};
  auto [ah, peaks] = model::predict_attributes(M);
  expect("cpt-tie-quarter", model::cpt_loss(M, peaks), 0.25);

  report(2, ok, ok ? "loss oracles: ln2, 0.5514, 3-4-5 -> 5, sum-of-squares 4, cpt 0.25, all to 1e-6"
                   : "loss oracles:" + fail);
}

// ---------- criterion 3: additivity + toggle zero-gradient, 16 combos ----------

void criterion_3() {
  AttributeSchema schema = micro_schema();
  auto params = model::ModelParams<double>::init(micro_model(), 4, 99);
  Rng rng(53);
  Tensor<double> img({3, 6, 6});
  for (auto& v : img.data) v = rng.uniform(0.0, 1.0);
  Tensor<double> phi = micro_phi();
  model::LossWeights w{0.05, 0.01, 0.2};

  bool ok = true;
  std::string fail;
  for (int mask = 0; mask < 16; ++mask) {
    model::Toggles t{(mask & 1) != 0, (mask & 2) != 0, (mask & 4) != 0, (mask & 8) != 0};
    auto pass = model::training_pass(params, img, false, phi, 0, schema, t, w);
    const double expect = pass.breakdown.cls + w.lambda1 * pass.breakdown.reg +
                          w.lambda2 * pass.breakdown.ad + w.lambda3 * pass.breakdown.cpt;
    if (std::abs(pass.breakdown.total - expect) > 1e-6) {
      ok = false;
      fail += fmt(" combo %d additivity;", mask);
    }
    pass.backward();
    const Tensor<double>& pgrad = pass.param_grad(pass.param_nodes.size() - 1);
    double pnorm = 0;
    for (size_t i = 0; i < pgrad.numel(); ++i) pnorm += std::abs(pgrad[i]);
    const bool proto = t.reg || t.ad || t.cpt;
    if (proto != (pnorm > 0)) {
      ok = false;
      fail += fmt(" combo %d prototype gradient;", mask);
    }
  }
  report(3, ok, ok ? "Eq.10 additivity and toggle zero-gradient hold for all 16 combinations"
                   : "toggle combos failed:" + fail);
}

// ---------- criteria 4-9 share the acceptance bundle and trained models ----------

struct TrainedSet {
  DatasetBundle bundle;
  std::vector<model::ModelParams<float>> full;   // seeds 7,8,9
  std::vector<model::ModelParams<float>> base;   // BaseMod-only, same seeds
  double full_train_secs = 0;
  std::vector<double> full_zsl;
};

TrainConfig acceptance_train_config(uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  return cfg;  // defaults are the shipped configuration
}

TrainedSet train_models() {
  TrainedSet ts;
  SynthConfig sc;  // 25 classes, 5 unseen, K=12, L=4, 64x64, 200 per class
  sc.seed = 7;
  ts.bundle = generate_synthetic(sc);

  const uint64_t seeds[3] = {7, 8, 9};
  const auto t0 = Clock::now();
  for (uint64_t s : seeds) {
    auto r = train<float>(ts.bundle, acceptance_train_config(s));
    ts.full.push_back(std::move(r.params));
  }
  ts.full_train_secs = seconds_since(t0);
  for (uint64_t s : seeds) {
    TrainConfig cfg = acceptance_train_config(s);
    cfg.toggles = {false, false, false, false};
    auto r = train<float>(ts.bundle, cfg);
    ts.base.push_back(std::move(r.params));
  }
  return ts;
}

void criterion_4(TrainedSet& ts) {
  double mean = 0;
  std::string per;
  for (auto& p : ts.full) {
    const double t1 = eval_zsl(ts.bundle, p, /*zoom=*/true).t1;
    ts.full_zsl.push_back(t1);
    mean += t1;
    per += fmt(" %.3f", t1);
  }
  mean /= 3.0;
  const bool ok = mean >= 0.80 && ts.full_train_secs < 900.0;
  report(4, ok,
         fmt("synthetic ZSL: unseen T1%s mean %.3f (>= 0.80, chance 0.20), 3 runs in %.0fs (< 900s)",
             per.c_str(), mean, ts.full_train_secs));
}

void criterion_5(TrainedSet& ts) {
  double full_t1 = 0, base_t1 = 0, full_pcp = 0, base_pcp = 0;
  PcpOptions po;
  po.splits = {Split::val};
  for (int i = 0; i < 3; ++i) {
    full_t1 += ts.full_zsl[i];
    base_t1 += eval_zsl(ts.bundle, ts.base[i], /*zoom=*/false).t1;
    full_pcp += eval_pcp(ts.bundle, ts.full[i], po).mean_pcp;
    base_pcp += eval_pcp(ts.bundle, ts.base[i], po).mean_pcp;
  }
  full_t1 /= 3;
  base_t1 /= 3;
  full_pcp /= 3;
  base_pcp /= 3;
  const bool ok = full_t1 >= base_t1 && full_pcp >= base_pcp + 0.10;
  report(5, ok,
         fmt("ablation trend: ZSL T1 full %.3f vs base %.3f (>=); mean PCP full %.3f vs base %.3f "
             "(gap %.1f pts >= 10)",
             full_t1, base_t1, full_pcp, base_pcp, (full_pcp - base_pcp) * 100));
}

void criterion_6(TrainedSet& ts) {
  PcpOptions po;
  po.splits = {Split::val};

  double trained = 0;
  for (auto& p : ts.full) trained += eval_pcp(ts.bundle, p, po).mean_pcp;
  trained /= 3;

  const double oracle = pcp_oracle(ts.bundle, po).mean_pcp;

  const double chance = chance_pcp(ts.bundle);
  double untrained = 0;
  for (uint64_t seed = 100; seed < 105; ++seed) {
    model::ModelConfig mc;
    auto p = model::ModelParams<float>::init(mc, ts.bundle.schema.k, seed);
    untrained += eval_pcp(ts.bundle, p, po).mean_pcp;
  }
  untrained /= 5;

  const bool ok = trained >= 0.70 && oracle == 1.0 && std::abs(untrained - chance) <= 0.10;
  report(6, ok,
         fmt("localization: trained peak-in-box %.3f (>= 0.70); oracle %.3f (== 1); untrained "
             "%.3f vs chance %.3f (|diff| %.1f pts <= 10)",
             trained, oracle, untrained, chance, std::abs(untrained - chance) * 100));
}

void criterion_7(TrainedSet& ts) {
  const model::ModelParams<float>& params = ts.full[0];
  const DatasetBundle& b = ts.bundle;

  std::vector<int> ids = b.classes.ids_with(Split::seen);
  for (int id : b.classes.ids_with(Split::unseen)) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  std::vector<char> seen(ids.size());
  for (size_t j = 0; j < ids.size(); ++j)
    seen[j] = b.class_info(ids[j]).split == Split::seen;
  const Tensor<float> phi = model::phi_matrix(b, ids);

  std::vector<int> sample_idxs;
  for (size_t j = 0; j < ids.size(); ++j) {
    const auto idxs = seen[j] ? b.heldout_indices_of_class(ids[j], 5)
                              : b.sample_indices_of_class(ids[j]);
    sample_idxs.insert(sample_idxs.end(), idxs.begin(), idxs.end());
  }
  std::vector<Tensor<float>> logits(sample_idxs.size());
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < (int)sample_idxs.size(); ++i) {
    try {
      logits[i] =
          model::forward(b.samples[sample_idxs[i]].image, false, params, phi, b.schema, true)
              .logits;
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  bool zero_equal = true;
  for (const auto& l : logits)
    zero_equal &= calibrated_argmax(l, seen, 0.0) == argmax_index(l);

  bool monotone = true;
  long prev = (long)logits.size() + 1;
  for (int step = 0; step <= 20; ++step) {
    const double gamma = 0.1 * step;
    long count = 0;
    for (const auto& l : logits) count += seen[calibrated_argmax(l, seen, gamma)];
    if (count > prev) monotone = false;
    prev = count;
  }
  report(7, zero_equal && monotone,
         fmt("calibrated stacking: gamma=0 equals plain argmax (%s); seen-prediction count "
             "monotone over {0,0.1,...,2.0} (%s)",
             zero_equal ? "exact" : "VIOLATED", monotone ? "exact" : "VIOLATED"));
}

void criterion_8(TrainedSet& ts) {
  EvalConfig cfg;
  cfg.mode = EvalMode::fsl;
  cfg.way = 5;
  cfg.shot = 1;
  cfg.query = 15;
  cfg.episodes = 600;
  cfg.seed = 7;
  const double one_shot = eval_fsl(ts.bundle, ts.full[0], cfg).fsl_acc;

  double one_mean = 0, five_mean = 0;
  for (uint64_t seed = 20; seed < 25; ++seed) {
    EvalConfig c1 = cfg;
    c1.seed = seed;
    c1.episodes = 200;
    one_mean += eval_fsl(ts.bundle, ts.full[0], c1).fsl_acc;
    EvalConfig c5 = c1;
    c5.shot = 5;
    five_mean += eval_fsl(ts.bundle, ts.full[0], c5).fsl_acc;
  }
  one_mean /= 5;
  five_mean /= 5;

  const bool ok = one_shot >= 0.60 && one_mean <= five_mean + 1e-12;
  report(8, ok,
         fmt("FSL: 5-way 1-shot %.3f over 600 episodes (>= 0.60, chance 0.20); 1-shot %.3f <= "
             "5-shot %.3f over 5 seeds",
             one_shot, one_mean, five_mean));
}

void criterion_9(TrainedSet& ts) {
  const std::string dir = (fs::temp_directory_path() / "apn_accept_rt").string();
  fs::remove_all(dir);

  // bundle round-trip, bitwise
  save_bundle(ts.bundle, dir + "/b1");
  DatasetBundle loaded = load_bundle(dir + "/b1");
  const bool bundle_ok = loaded == ts.bundle;
  save_bundle(loaded, dir + "/b2");
  const bool digest_ok = bundle_digest(dir + "/b1") == bundle_digest(dir + "/b2");

  // checkpoint round-trip + identical evaluation
  const std::string ck1 = dir + "/c1.bin", ck2 = dir + "/c2.bin";
  TrainConfig cfg = acceptance_train_config(7);
  save_checkpoint(ck1, ts.full[0], cfg.to_text());
  auto reloaded = load_checkpoint<float>(ck1, nullptr);
  save_checkpoint(ck2, reloaded, cfg.to_text());
  const bool ckpt_ok = file_digest(ck1) == file_digest(ck2);

  const std::string mem = eval_zsl(ts.bundle, ts.full[0], true).to_tsv();
  const std::string disk = eval_zsl(ts.bundle, reloaded, true).to_tsv();
  const bool eval_ok = mem == disk;

  fs::remove_all(dir);
  report(9, bundle_ok && digest_ok && ckpt_ok && eval_ok,
         fmt("round-trips: bundle bitwise (%s, digests %s); checkpoint bitwise (%s); reloaded "
             "evaluation identical (%s)",
             bundle_ok ? "ok" : "FAIL", digest_ok ? "ok" : "FAIL", ckpt_ok ? "ok" : "FAIL",
             eval_ok ? "ok" : "FAIL"));
}

void criterion_10() {
#ifdef _OPENMP
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
#endif
  SynthConfig sc;
  sc.n_classes = 8;
  sc.n_unseen = 2;
  sc.n_val = 1;
  sc.k_attrs = 8;
  sc.l_groups = 4;
  sc.image_size = 32;
  sc.imgs_per_class = 20;
  sc.seed = 5;

  const std::string dir = (fs::temp_directory_path() / "apn_accept_det").string();
  fs::remove_all(dir);
  fs::create_directories(dir);

  std::string reports[2];
  uint64_t digests[2];
  uint64_t bundles[2];
  for (int run = 0; run < 2; ++run) {
    DatasetBundle b = generate_synthetic(sc);
    const std::string bdir = dir + "/bundle" + std::to_string(run);
    save_bundle(b, bdir);
    bundles[run] = bundle_digest(bdir);

    TrainConfig cfg;
    cfg.f64 = true;
    cfg.seed = 11;
    cfg.epochs = 5;
    cfg.batch = 8;
    cfg.model.channels = {8, 16};
    auto r = train<double>(b, cfg);
    const std::string ck = dir + "/ck" + std::to_string(run) + ".bin";
    save_checkpoint(ck, r.params, cfg.to_text());
    digests[run] = file_digest(ck);
    reports[run] = eval_zsl(b, r.params, cfg.toggles.zoom).to_tsv();
  }
#ifdef _OPENMP
  omp_set_num_threads(saved);
#endif
  fs::remove_all(dir);
  const bool ok =
      bundles[0] == bundles[1] && digests[0] == digests[1] && reports[0] == reports[1];
  report(10, ok,
         fmt("determinism (f64, 1 thread): bundle digests %s, checkpoint digests %s, reports %s",
             bundles[0] == bundles[1] ? "equal" : "DIFFER",
             digests[0] == digests[1] ? "equal" : "DIFFER",
             reports[0] == reports[1] ? "identical" : "DIFFER"));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  std::printf("acceptance suite\n");

  criterion_1();
  criterion_2();
  criterion_3();

  std::printf("... training 3 full + 3 baseline models on the acceptance bundle\n");
  std::fflush(stdout);
  TrainedSet ts = train_models();

  criterion_4(ts);
  criterion_5(ts);
  criterion_6(ts);
  criterion_7(ts);
  criterion_8(ts);
  criterion_9(ts);
  criterion_10();

  std::printf("%d/10 criteria passed in %.0fs\n", 10 - g_failures, seconds_since(t0));
  return g_failures;
}
