#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "apn/eval.hpp"
#include "apn/heatmap.hpp"
#include "apn/synth.hpp"
#include "apn/train.hpp"
#include "test_helpers.hpp"

using namespace apn;
using test::random_tensor;
namespace fs = std::filesystem;

namespace {

DatasetBundle tiny_bundle() {
  SynthConfig c;
  c.n_classes = 8;
  c.n_unseen = 3;
  c.n_val = 1;
  c.k_attrs = 8;
  c.l_groups = 4;
  c.image_size = 32;
  c.imgs_per_class = 10;
  c.seed = 21;
  return generate_synthetic(c);
}

model::ModelParams<float> tiny_params(const DatasetBundle& b, uint64_t seed) {
  model::ModelConfig mc;
  mc.input_size = b.image_size();
  mc.channels = {8, 16};
  return model::ModelParams<float>::init(mc, b.schema.k, seed);
}

}  // namespace

TEST_CASE("argmax predictions and tie rule") {
  Tensor<double> l({2});
  l.data = {0.2, 0.9};
  CHECK(argmax_index(l) == 1);
  Tensor<double> tie({3}, 0.5);
  CHECK(argmax_index(tie) == 0);
  CHECK_THROWS_AS(argmax_index(Tensor<double>{}), Error);
}

TEST_CASE("calibrated stacking hand cases") {
  Tensor<double> s({2});
  s.data = {0.9, 0.5};  // seen, unseen
  std::vector<char> seen = {1, 0};
  CHECK(calibrated_argmax(s, seen, 0.5) == 1);  // 0.4 < 0.5
  CHECK(calibrated_argmax(s, seen, 0.0) == argmax_index(s));
  CHECK_THROWS_AS(calibrated_argmax(s, seen, -0.1), Error);
}

TEST_CASE("gamma sweep: seen predictions are monotone non-increasing") {
  Rng rng(83);
  const int n_classes = 10, n_points = 200;
  std::vector<Tensor<double>> logits;
  std::vector<char> seen(n_classes);
  for (int j = 0; j < n_classes; ++j) seen[j] = j < 6;
  for (int i = 0; i < n_points; ++i) logits.push_back(random_tensor<double>({(size_t)n_classes}, rng));

  long prev = n_points + 1;
  for (double g = 0.0; g <= 2.01; g += 0.1) {
    long seen_count = 0;
    for (const auto& l : logits) seen_count += seen[calibrated_argmax(l, seen, g)];
    CHECK(seen_count <= prev);
    prev = seen_count;
  }

  // gamma = 0 equals plain argmax exactly
  for (const auto& l : logits) CHECK(calibrated_argmax(l, seen, 0.0) == argmax_index(l));

  // gamma beyond the logit range bans seen classes entirely
  for (const auto& l : logits) CHECK_FALSE(seen[calibrated_argmax(l, seen, 10.0)]);
}

TEST_CASE("harmonic mean identities") {
  CHECK(harmonic_mean(0.4, 0.4) == doctest::Approx(0.4));
  CHECK(harmonic_mean(0.3, 0.7) == doctest::Approx(harmonic_mean(0.7, 0.3)));
  Rng rng(89);
  for (int t = 0; t < 50; ++t) {
    const double u = rng.uniform(), s = rng.uniform();
    CHECK(harmonic_mean(u, s) <= 2 * std::min(u, s) + 1e-12);
  }
  CHECK(harmonic_mean(0, 0) == 0.0);
}

TEST_CASE("per-class averaging: duplicating a class's images keeps T1") {
  DatasetBundle b = tiny_bundle();
  auto params = tiny_params(b, 4);
  EvalReport base = eval_zsl(b, params, false);

  DatasetBundle dup = b;
  const int victim = b.classes.ids_with(Split::unseen)[0];
  int next_id = 100000;
  for (const auto& s : b.samples)
    if (s.class_id == victim) {
      SampleRecord copy = s;
      copy.image_id = next_id++;
      dup.samples.push_back(std::move(copy));
    }
  EvalReport doubled = eval_zsl(dup, params, false);
  CHECK(doubled.t1 == doctest::Approx(base.t1).epsilon(1e-12));
}

TEST_CASE("gzsl report: gamma=0 equals union argmax; H ties u and s together") {
  DatasetBundle b = tiny_bundle();
  auto params = tiny_params(b, 6);
  EvalConfig cfg;
  cfg.mode = EvalMode::gzsl;
  cfg.gamma = 0.0;
  EvalReport r = eval_gzsl(b, params, false, cfg);
  CHECK(r.gamma == doctest::Approx(0.0));
  CHECK(r.h == doctest::Approx(harmonic_mean(r.u, r.s)));
  CHECK(r.u >= 0);
  CHECK(r.s >= 0);

  // the auto-searched gamma comes from the grid
  cfg.gamma = -1;
  EvalReport rs = eval_gzsl(b, params, false, cfg);
  bool on_grid = false;
  for (int i = 0; i <= 10; ++i) on_grid |= std::abs(rs.gamma - 0.1 * i) < 1e-9;
  CHECK(on_grid);
}

TEST_CASE("ncm cosine: identity, orthogonality, zero-norm exclusion") {
  Tensor<float> e1({3});
  e1.data = {1, 0, 0};
  Tensor<float> e2({3});
  e2.data = {0, 1, 0};
  std::vector<Tensor<float>> centroids = {e1, e2};
  std::vector<Tensor<float>> queries = {e1};
  CHECK(ncm_cosine(centroids, queries) == std::vector<int>{0});

  Tensor<float> scaled = e2;
  for (auto& v : scaled.data) v *= 7.5f;  // cosine ignores scale
  CHECK(ncm_cosine(centroids, {scaled}) == std::vector<int>{1});

  Tensor<float> zero({3}, 0.0f);
  CHECK(ncm_cosine(centroids, {zero}) == std::vector<int>{-1});
}

TEST_CASE("fsl episodes run deterministically") {
  DatasetBundle b = tiny_bundle();
  auto params = tiny_params(b, 8);
  EvalConfig cfg;
  cfg.mode = EvalMode::fsl;
  cfg.way = 2;
  cfg.shot = 1;
  cfg.query = 3;
  cfg.episodes = 20;
  cfg.seed = 17;
  EvalReport a = eval_fsl(b, params, cfg);
  EvalReport c = eval_fsl(b, params, cfg);
  CHECK(a.fsl_acc == doctest::Approx(c.fsl_acc));
  CHECK(a.fsl_acc >= 0.0);
  CHECK(a.fsl_acc <= 1.0);
  CHECK(a.fsl_ci95 >= 0.0);
}

TEST_CASE("gfsl: duplicate support matches its twin; shots=all reduces to NCM") {
  // hand-built feature bundle with well separated classes
  DatasetBundle b;
  b.schema.k = 2;
  b.schema.l = 1;
  b.schema.names = {"a", "b"};
  b.schema.group_of = {1, 1};
  b.schema.group_names = {"group1"};
  b.classes.classes.push_back({0, Split::seen, {0.9f, 0.1f}});
  b.classes.classes.push_back({1, Split::unseen, {0.1f, 0.9f}});
  int id = 0;
  auto add = [&](int cls, std::vector<float> v) {
    SampleRecord s;
    s.image_id = id++;
    s.class_id = cls;
    s.feature = Tensor<float>({2, 1, 1});
    s.feature.data = v;
    b.samples.push_back(std::move(s));
  };
  for (int i = 0; i < 10; ++i) add(0, {1.0f, 0.0f});
  add(1, {0.0f, 1.0f});
  add(1, {0.0f, 1.0f});  // the twin of the support image

  auto params = model::ModelParams<float>::init_headless(2, 2, 1);
  EvalConfig cfg;
  cfg.mode = EvalMode::gfsl;
  cfg.shots = 1;
  cfg.seed = 9;
  EvalReport r = eval_gfsl(b, params, cfg);
  for (const auto& c : r.per_class)
    if (c.split == Split::unseen) {
      CHECK(c.total == 1);
      CHECK(c.correct == 1);  // twin lands on its own centroid
    }

  cfg.shots = 2;  // all novel images become support: plain NCM over base classes
  EvalReport all = eval_gfsl(b, params, cfg);
  CHECK(all.t1 >= 0.0);
  CHECK(all.u == -1);  // novel classes have no test images left
}

TEST_CASE("gfsl rejects impossible shot counts") {
  DatasetBundle b = tiny_bundle();
  auto params = tiny_params(b, 31);
  EvalConfig cfg;
  cfg.mode = EvalMode::gfsl;
  cfg.shots = 1000;
  CHECK_THROWS_WITH_AS(eval_gfsl(b, params, cfg), doctest::Contains("support"), Error);
}

TEST_CASE("localize: single hot cell, constant-map tie, argmax adjacency") {
  model::ForwardTrace<double> tr;
  tr.M = Tensor<double>({1, 4, 4}, -100.0);
  tr.M.at(0, 1, 2) = 5.0;
  LocalizeResult res = localize(tr, 0, 36, 0.25, nullptr, (Tensor<double>*)nullptr);
  // align-corners position of cell (1,2) on a 36px canvas: (1*35/3, 2*35/3)
  CHECK(res.peak.i >= 8);
  CHECK(res.peak.i <= 16);
  CHECK(res.peak.j >= 20);
  CHECK(res.peak.j <= 27);

  model::ForwardTrace<double> flat;
  flat.M = Tensor<double>({1, 3, 3}, 1.0);
  LocalizeResult f = localize(flat, 0, 30, 0.25, nullptr, (Tensor<double>*)nullptr);
  CHECK(f.peak.i == 0);
  CHECK(f.peak.j == 0);

  // feature-grid sides whose nodes are sampled exactly on a 64px canvas
  // ((side-1) divisible by (h-1)): the geometry every encoder config uses
  Rng rng(97);
  const int grid[] = {2, 4, 8, 10, 22};
  for (int t = 0; t < 60; ++t) {
    model::ForwardTrace<double> r;
    const int h = grid[rng.uniform_int(5)], w = grid[rng.uniform_int(5)], side = 64;
    r.M = random_tensor<double>({1, (size_t)h, (size_t)w}, rng);
    auto [a, peaks] = model::predict_attributes(r.M);
    LocalizeResult lr = localize(r, 0, side, 0.25, nullptr, (Tensor<double>*)nullptr);
    const double src_i = (double)lr.peak.i * (h - 1) / (side - 1);
    const double src_j = (double)lr.peak.j * (w - 1) / (side - 1);
    CHECK(std::abs(src_i - peaks[0].i) <= 1.0);
    CHECK(std::abs(src_j - peaks[0].j) <= 1.0);
  }
}

TEST_CASE("localize boxes are clipped and sized by rho") {
  model::ForwardTrace<double> tr;
  tr.M = Tensor<double>({1, 4, 4}, 0.0);
  tr.M.at(0, 0, 0) = 1.0;  // peak in the corner
  PartBox object{0, 0, 0, 31, 31};
  LocalizeResult res = localize(tr, 0, 32, 0.25, &object, (Tensor<double>*)nullptr);
  CHECK(res.box.x0 == 0);
  CHECK(res.box.y0 == 0);
  CHECK(res.box.x1 >= res.box.x0);
  CHECK(res.box.x1 <= 8);
}

TEST_CASE("pcp: center peaks count, outside peaks do not, oracle is 100%") {
  DatasetBundle b = tiny_bundle();
  PcpOptions opts;
  opts.splits = {Split::val};

  EvalReport oracle = pcp_oracle(b, opts);
  CHECK(oracle.mean_pcp == doctest::Approx(1.0));
  for (const auto& p : oracle.per_part) {
    CHECK(p.total > 0);
    CHECK(p.correct == p.total);
  }

  // a peak one pixel outside the box is incorrect
  auto in_val = [&](int i) {
    return b.class_info(b.samples[i].class_id).split == Split::val &&
           !b.samples[i].parts.empty();
  };
  EvalReport miss = pcp_core(
      b, opts, in_val,
      [&](int i, int group, int) {
        for (const auto& p : b.samples[i].parts)
          if (p.part == group) {
            if (p.x0 > 0) return Peak{p.y0, p.x0 - 1};
            return Peak{p.y1 + 1 < 32 ? p.y1 + 1 : 31, p.x1};
          }
        return Peak{0, 0};
      });
  CHECK(miss.mean_pcp < 0.1);
}

TEST_CASE("pcp over an untrained model stays within chance +/- 10 points") {
  DatasetBundle b = tiny_bundle();
  const double chance = chance_pcp(b);
  PcpOptions opts;
  opts.splits = {Split::val, Split::unseen};
  double acc = 0;
  for (uint64_t seed = 1; seed <= 3; ++seed)
    acc += eval_pcp(b, tiny_params(b, seed), opts).mean_pcp;
  acc /= 3.0;
  MESSAGE("untrained pcp=", acc, " chance=", chance);
  CHECK(std::abs(acc - chance) <= 0.12);  // small bundle; the acceptance run uses the full one
}

TEST_CASE("heatmap export: degenerate map, ordering, file count") {
  const std::string dir = (fs::temp_directory_path() / "apn_test_heat").string();
  fs::remove_all(dir);

  model::ForwardTrace<double> tr;
  tr.M = Tensor<double>({2, 2, 2});
  tr.M.data = {0, 1, 0, 1,   // left column darker after upsampling
               0.5, 0.5, 0.5, 0.5};  // constant: all-zero PGM
  Rng rng(101);
  Tensor<double> img = random_tensor<double>({3, 16, 16}, rng, 0.0, 1.0);
  auto files = export_heatmaps(tr, img, dir, {0, 1}, 0.25, nullptr);
  CHECK(files.size() == 4);
  for (const auto& f : files) CHECK(fs::exists(f));

  auto read_all = [](const std::string& p) {
    std::FILE* f = std::fopen(p.c_str(), "rb");
    REQUIRE(f);
    std::string all;
    char buf[4096];
    size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) all.append(buf, n);
    std::fclose(f);
    return all;
  };

  const std::string heat0 = read_all(dir + "/attr_0_heat.pgm");
  const size_t pix0 = heat0.find("255\n") + 4;
  // row-major bytes: every left-column byte darker than its right neighbour
  for (int y = 0; y < 16; ++y) {
    const unsigned char l = heat0[pix0 + y * 16 + 0];
    const unsigned char r = heat0[pix0 + y * 16 + 15];
    CHECK(l < r);
  }

  const std::string heat1 = read_all(dir + "/attr_1_heat.pgm");
  const size_t pix1 = heat1.find("255\n") + 4;
  for (size_t i = pix1; i < heat1.size(); ++i) CHECK((unsigned char)heat1[i] == 0);

  fs::remove_all(dir);
}

TEST_CASE("eval report serialization is stable and complete") {
  DatasetBundle b = tiny_bundle();
  auto params = tiny_params(b, 15);
  EvalReport r = eval_zsl(b, params, false);
  const std::string tsv = r.to_tsv();
  CHECK(tsv.rfind("apn-report\t1\n", 0) == 0);
  CHECK(tsv.find("mode\tzsl") != std::string::npos);
  CHECK(tsv.find("T1\t") != std::string::npos);
  CHECK(tsv.find("class\t") != std::string::npos);
  CHECK(r.to_tsv() == tsv);
}
