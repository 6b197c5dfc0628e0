#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <memory>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "apn/bundle_io.hpp"
#include "apn/checkpoint.hpp"
#include "apn/eval.hpp"
#include "apn/gradcheck_suite.hpp"
#include "apn/heatmap.hpp"
#include "apn/synth.hpp"
#include "apn/train.hpp"

namespace fs = std::filesystem;
using namespace apn;

namespace {

constexpr const char* kVersion = "0.1.0";

const char* kind_name(ErrKind k) {
  switch (k) {
    case ErrKind::usage: return "usage";
    case ErrKind::data: return "data";
    case ErrKind::io: return "io";
    case ErrKind::numeric: return "numeric";
  }
  return "?";
}

int exit_code(ErrKind k) {
  switch (k) {
    case ErrKind::usage: return 1;
    case ErrKind::data:
    case ErrKind::io: return 2;
    case ErrKind::numeric: return 3;
  }
  return 1;
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

void write_text(const std::string& path, const std::string& text) {
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> f(std::fopen(path.c_str(), "wb"), std::fclose);
  check(f != nullptr, ErrKind::io, "open-failed", path + ": cannot open for writing");
  check(std::fwrite(text.data(), 1, text.size(), f.get()) == text.size(), ErrKind::io,
        "write-failed", path + ": short write");
}

// Every run records what produced its outputs.
void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::string& config_text) {
  fs::create_directories(out_dir);
  std::string t = "version = " + std::string(kVersion) + "\n";
  t += "command = " + command + "\n";
  t += config_text;
  write_text(out_dir + "/manifest.txt", t);
}

struct CommonOpts {
  std::string data, out, config_path, ckpt;
  int threads = 0;
  uint64_t seed = 7;
  bool f64 = false;
};

// Training settings assembled from defaults, then --config, then flags.
TrainConfig resolve_train_config(const CommonOpts& common, const CLI::App* cmd,
                                 double lr, int epochs, int batch, double l1, double l2, double l3,
                                 bool no_reg, bool no_ad, bool no_cpt, bool no_zoom) {
  TrainConfig cfg;
  if (!common.config_path.empty())
    cfg = TrainConfig::from_key_values(
        load_key_values(common.config_path, &TrainConfig::known_keys()));
  auto given = [&](const char* name) { return cmd->count(name) > 0; };
  if (given("--lr")) cfg.lr = lr;
  if (given("--epochs")) cfg.epochs = epochs;
  if (given("--batch")) cfg.batch = batch;
  if (given("--lambda1")) cfg.lambda1 = l1;
  if (given("--lambda2")) cfg.lambda2 = l2;
  if (given("--lambda3")) cfg.lambda3 = l3;
  if (given("--seed")) cfg.seed = common.seed;
  if (no_reg) cfg.toggles.reg = false;
  if (no_ad) cfg.toggles.ad = false;
  if (no_cpt) cfg.toggles.cpt = false;
  if (no_zoom) cfg.toggles.zoom = false;
  if (common.f64) cfg.f64 = true;
  cfg.validate();
  return cfg;
}

model::Toggles toggles_from_checkpoint(const std::string& ckpt_path) {
  KeyValues kv = parse_key_values(checkpoint_config(ckpt_path), nullptr);
  model::Toggles t;
  t.reg = kv.get_bool("reg", true);
  t.ad = kv.get_bool("ad", true);
  t.cpt = kv.get_bool("cpt", true);
  t.zoom = kv.get_bool("zoom", true);
  return t;
}

int run_gen_synth(const CommonOpts& common, const SynthConfig& sc) {
  DatasetBundle b = generate_synthetic(sc);
  save_bundle(b, common.out);
  std::string cfg = "seed = " + std::to_string(sc.seed) + "\n";
  cfg += "classes = " + std::to_string(sc.n_classes) + "\n";
  cfg += "unseen = " + std::to_string(sc.n_unseen) + "\n";
  cfg += "val = " + std::to_string(sc.n_val) + "\n";
  cfg += "attrs = " + std::to_string(sc.k_attrs) + "\n";
  cfg += "groups = " + std::to_string(sc.l_groups) + "\n";
  cfg += "size = " + std::to_string(sc.image_size) + "\n";
  cfg += "per_class = " + std::to_string(sc.imgs_per_class) + "\n";
  write_manifest(common.out, "gen-synth", cfg);
  std::printf("bundle_digest\t%s\n", hex64(bundle_digest(common.out)).c_str());
  std::printf("classes\t%zu\tsamples\t%zu\n", b.classes.classes.size(), b.samples.size());
  return 0;
}

template <typename T>
int run_train_typed(const CommonOpts& common, const TrainConfig& cfg) {
  DatasetBundle bundle = load_bundle(common.data);
  TrainResult<T> r = train<T>(bundle, cfg);
  fs::create_directories(common.out);
  save_checkpoint(common.out + "/checkpoint.bin", r.params, cfg.to_text());
  write_text(common.out + "/runlog.tsv", r.log.to_tsv());
  write_manifest(common.out, "train", cfg.to_text());
  std::printf("checkpoint\t%s\n", (common.out + "/checkpoint.bin").c_str());
  if (!r.log.epochs.empty())
    std::printf("final_total\t%.6f\tbest_epoch\t%d\n", r.log.epochs.back().avg.total,
                r.log.best_epoch);
  return 0;
}

int run_train(const CommonOpts& common, const TrainConfig& cfg) {
  return cfg.f64 ? run_train_typed<double>(common, cfg) : run_train_typed<float>(common, cfg);
}

template <typename T>
int run_eval_typed(const CommonOpts& common, EvalConfig ecfg, bool zoom_override_off) {
  DatasetBundle bundle = load_bundle(common.data);
  model::ModelParams<T> params = load_checkpoint<T>(common.ckpt, nullptr);
  model::Toggles tg = toggles_from_checkpoint(common.ckpt);
  const bool zoom = tg.zoom && !zoom_override_off && bundle.has_images();

  EvalReport rep;
  switch (ecfg.mode) {
    case EvalMode::zsl: rep = eval_zsl(bundle, params, zoom); break;
    case EvalMode::gzsl: rep = eval_gzsl(bundle, params, zoom, ecfg); break;
    case EvalMode::fsl: rep = eval_fsl(bundle, params, ecfg); break;
    case EvalMode::gfsl: rep = eval_gfsl(bundle, params, ecfg); break;
  }
  fs::create_directories(common.out);
  write_text(common.out + "/report.tsv", rep.to_tsv());
  std::string cfg = "mode = " + std::string(eval_mode_name(ecfg.mode)) + "\n";
  cfg += "seed = " + std::to_string(ecfg.seed) + "\n";
  cfg += "ckpt = " + common.ckpt + "\n";
  write_manifest(common.out, "eval", cfg);
  std::printf("%s", rep.to_tsv().c_str());
  return 0;
}

template <typename T>
int run_localize_typed(const CommonOpts& common, int image_id, std::vector<int> attrs,
                       double rho) {
  DatasetBundle bundle = load_bundle(common.data);
  check(bundle.has_images(), ErrKind::data, "no-images", "localize needs a raw-image bundle");
  model::ModelParams<T> params = load_checkpoint<T>(common.ckpt, nullptr);

  int sample_idx = -1;
  if (image_id < 0) {
    for (size_t i = 0; i < bundle.samples.size(); ++i)
      if (bundle.class_info(bundle.samples[i].class_id).split == Split::val) {
        sample_idx = (int)i;
        break;
      }
    if (sample_idx < 0) sample_idx = 0;
  } else {
    for (size_t i = 0; i < bundle.samples.size(); ++i)
      if (bundle.samples[i].image_id == image_id) sample_idx = (int)i;
    check(sample_idx >= 0, ErrKind::data, "unknown-image",
          "image id " + std::to_string(image_id) + " not in bundle");
  }
  const SampleRecord& s = bundle.samples[sample_idx];
  Tensor<T> img;
  if constexpr (std::is_same_v<T, float>)
    img = s.image;
  else
    img = cast<double>(s.image);

  std::vector<int> ids = bundle.classes.ids_with(Split::seen);
  std::sort(ids.begin(), ids.end());
  const Tensor<T> phi = cast<T>(model::phi_matrix(bundle, ids));
  auto tr = model::forward(img, false, params, phi, bundle.schema, false);

  if (attrs.empty())
    for (int k = 0; k < bundle.schema.k; ++k) attrs.push_back(k);
  PartBox object{0, 0, 0, bundle.image_size() - 1, bundle.image_size() - 1};
  if (!s.parts.empty()) {
    object = s.parts[0];
    for (const auto& p : s.parts) {
      object.x0 = std::min(object.x0, p.x0);
      object.y0 = std::min(object.y0, p.y0);
      object.x1 = std::max(object.x1, p.x1);
      object.y1 = std::max(object.y1, p.y1);
    }
  }
  auto files = export_heatmaps(tr, img, common.out, attrs, rho, &object);
  std::string cfg = "image_id = " + std::to_string(s.image_id) + "\n";
  cfg += "rho = " + std::to_string(rho) + "\n";
  write_manifest(common.out, "localize", cfg);
  for (const auto& f : files) std::printf("wrote\t%s\n", f.c_str());
  return 0;
}

template <typename T>
int run_pcp_typed(const CommonOpts& common, double rho, const std::string& split) {
  DatasetBundle bundle = load_bundle(common.data);
  model::ModelParams<T> params = load_checkpoint<T>(common.ckpt, nullptr);
  PcpOptions opts;
  opts.rho = rho;
  opts.splits = {split_from(split)};
  EvalReport rep = eval_pcp(bundle, params, opts);
  fs::create_directories(common.out);
  write_text(common.out + "/report.tsv", rep.to_tsv());
  std::string cfg = "rho = " + std::to_string(rho) + "\n";
  cfg += "split = " + split + "\n";
  write_manifest(common.out, "pcp", cfg);
  std::printf("%s", rep.to_tsv().c_str());
  return 0;
}

int run_gradcheck(uint64_t seed, int trials) {
  auto rows = run_gradcheck_suite(trials, seed);
  bool all_ok = true;
  std::printf("%-18s %-14s %-10s %s\n", "op", "max_rel_err", "threshold", "status");
  for (const auto& r : rows) {
    std::printf("%-18s %-14.3e %-10.0e %s\n", r.op.c_str(), r.max_rel_err, r.threshold,
                r.ok() ? "ok" : "FAIL");
    all_ok &= r.ok();
  }
  if (!all_ok) throw Error(ErrKind::numeric, "gradcheck-failed", "a primitive exceeded tolerance");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attribute prototype network: synthetic any-shot classification toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonOpts common;
  SynthConfig sc;

  // gen-synth
  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic attribute-grounded bundle");
  gen->add_option("--out", common.out, "output bundle directory")->required();
  gen->add_option("--seed", sc.seed, "generator seed");
  gen->add_option("--classes", sc.n_classes, "total classes");
  gen->add_option("--unseen", sc.n_unseen, "unseen (test) classes");
  gen->add_option("--val", sc.n_val, "validation classes");
  gen->add_option("--attrs", sc.k_attrs, "attribute count K");
  gen->add_option("--groups", sc.l_groups, "attribute group count L");
  gen->add_option("--size", sc.image_size, "image side in pixels");
  gen->add_option("--per-class", sc.imgs_per_class, "images per class");

  // train
  auto* tr = app.add_subcommand("train", "train a model on a bundle");
  double lr = 1e-3, l1 = 0.05, l2 = 0.01, l3 = 0.2;
  int epochs = 30, batch = 32;
  bool no_reg = false, no_ad = false, no_cpt = false, no_zoom = false;
  tr->add_option("--data", common.data, "bundle directory")->required();
  tr->add_option("--out", common.out, "output directory")->required();
  tr->add_option("--config", common.config_path, "key = value config file");
  tr->add_option("--seed", common.seed, "training seed");
  tr->add_option("--threads", common.threads, "worker thread cap (1 = serial)");
  tr->add_option("--lr", lr, "learning rate");
  tr->add_option("--epochs", epochs, "training epochs");
  tr->add_option("--batch", batch, "batch size");
  tr->add_option("--lambda1", l1, "attribute regression weight");
  tr->add_option("--lambda2", l2, "attribute decorrelation weight");
  tr->add_option("--lambda3", l3, "compactness weight");
  tr->add_flag("--no-reg", no_reg, "disable the attribute regression loss");
  tr->add_flag("--no-ad", no_ad, "disable the attribute decorrelation loss");
  tr->add_flag("--no-cpt", no_cpt, "disable the compactness loss");
  tr->add_flag("--no-zoom", no_zoom, "disable the zoom-in branch");
  tr->add_flag("--f64", common.f64, "train in 64-bit floats");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  EvalConfig ecfg;
  std::string mode = "zsl";
  double gamma = -1;
  bool eval_no_zoom = false;
  ev->add_option("--data", common.data, "bundle directory")->required();
  ev->add_option("--ckpt", common.ckpt, "checkpoint file")->required();
  ev->add_option("--out", common.out, "output directory")->required();
  ev->add_option("--mode", mode, "zsl | gzsl | fsl | gfsl");
  ev->add_option("--gamma", gamma, "calibrated stacking factor (gzsl; >= 0)");
  ev->add_option("--shots", ecfg.shots, "gfsl support shots per novel class");
  ev->add_option("--way", ecfg.way, "fsl episode way");
  ev->add_option("--shot", ecfg.shot, "fsl support shots");
  ev->add_option("--query", ecfg.query, "fsl query images per class");
  ev->add_option("--episodes", ecfg.episodes, "fsl episode count");
  ev->add_option("--rho", ecfg.rho, "localization box ratio");
  ev->add_option("--seed", common.seed, "episode/support sampling seed");
  ev->add_option("--threads", common.threads, "worker thread cap");
  ev->add_flag("--no-zoom", eval_no_zoom, "force single-branch inference");
  ev->add_flag("--f64", common.f64, "evaluate in 64-bit floats");

  // localize
  auto* loc = app.add_subcommand("localize", "export attribute heatmaps and peak boxes");
  int image_id = -1;
  std::vector<int> attrs;
  double rho = 0.25;
  loc->add_option("--data", common.data, "bundle directory")->required();
  loc->add_option("--ckpt", common.ckpt, "checkpoint file")->required();
  loc->add_option("--out", common.out, "output directory")->required();
  loc->add_option("--image", image_id, "image id (default: first validation image)");
  loc->add_option("--attr", attrs, "attribute indices (default: all)");
  loc->add_option("--rho", rho, "box size ratio in (0,1]");
  loc->add_flag("--f64", common.f64, "run in 64-bit floats");
  loc->add_option("--threads", common.threads, "worker thread cap");

  // pcp
  auto* pc = app.add_subcommand("pcp", "percentage of correctly localized parts");
  std::string split = "val";
  double pcp_rho = 0.25;
  pc->add_option("--data", common.data, "bundle directory")->required();
  pc->add_option("--ckpt", common.ckpt, "checkpoint file")->required();
  pc->add_option("--out", common.out, "output directory")->required();
  pc->add_option("--rho", pcp_rho, "box size ratio");
  pc->add_option("--split", split, "seen | unseen | val");
  pc->add_flag("--f64", common.f64, "run in 64-bit floats");
  pc->add_option("--threads", common.threads, "worker thread cap");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference verification of all primitives");
  int trials = 100;
  gc->add_option("--seed", common.seed, "random point seed");
  gc->add_option("--trials", trials, "random points per op");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error\tusage\tbad-arguments\t%s\n", e.what());
    return 1;
  }

  try {
    set_threads(common.threads);
    if (gen->parsed()) return run_gen_synth(common, sc);
    if (tr->parsed()) {
      TrainConfig cfg = resolve_train_config(common, tr, lr, epochs, batch, l1, l2, l3, no_reg,
                                             no_ad, no_cpt, no_zoom);
      return run_train(common, cfg);
    }
    if (ev->parsed()) {
      ecfg.mode = eval_mode_from(mode);
      ecfg.seed = common.seed;
      if (ev->count("--gamma") > 0) {
        check(gamma >= 0, ErrKind::usage, "bad-gamma", "calibration factor must be >= 0");
        ecfg.gamma = gamma;
      }
      return common.f64 ? run_eval_typed<double>(common, ecfg, eval_no_zoom)
                        : run_eval_typed<float>(common, ecfg, eval_no_zoom);
    }
    if (loc->parsed()) {
      check(rho > 0 && rho <= 1, ErrKind::usage, "bad-rho", "rho must lie in (0,1]");
      return common.f64 ? run_localize_typed<double>(common, image_id, attrs, rho)
                        : run_localize_typed<float>(common, image_id, attrs, rho);
    }
    if (pc->parsed())
      return common.f64 ? run_pcp_typed<double>(common, pcp_rho, split)
                        : run_pcp_typed<float>(common, pcp_rho, split);
    if (gc->parsed()) return run_gradcheck(common.seed, trials);
  } catch (const Error& e) {
    std::fprintf(stderr, "error\t%s\t%s\t%s\n", kind_name(e.kind()), e.code().c_str(), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error\tinternal\tunexpected\t%s\n", e.what());
    return 3;
  }
  return 1;
}
