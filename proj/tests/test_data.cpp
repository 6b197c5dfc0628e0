#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <set>

#include "apn/bundle_io.hpp"
#include "apn/episodes.hpp"
#include "apn/rng.hpp"
#include "apn/synth.hpp"

using namespace apn;
namespace fs = std::filesystem;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.n_classes = 8;
  c.n_unseen = 2;
  c.n_val = 1;
  c.k_attrs = 8;
  c.l_groups = 4;
  c.image_size = 32;
  c.imgs_per_class = 6;
  c.seed = 7;
  return c;
}

std::string temp_dir(const char* tag) {
  std::string d = (fs::temp_directory_path() / (std::string("apn_test_") + tag)).string();
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST_CASE("smallest feasible instance: two classes, one group") {
  SynthConfig c;
  c.n_classes = 2;
  c.n_unseen = 0;
  c.n_val = 0;
  c.k_attrs = 2;
  c.l_groups = 1;
  c.image_size = 16;
  c.imgs_per_class = 2;
  DatasetBundle b = generate_synthetic(c);
  REQUIRE(b.classes.classes.size() == 2);
  // signatures [1,0] and [0,1] up to jitter
  std::set<int> actives;
  for (const auto& cl : b.classes.classes) {
    int on = -1, n_on = 0;
    for (int k = 0; k < 2; ++k)
      if (cl.phi[k] >= 0.5f) {
        on = k;
        ++n_on;
      }
    CHECK(n_on == 1);
    actives.insert(on);
  }
  CHECK(actives == std::set<int>{0, 1});
}

TEST_CASE("infeasible signature count is rejected") {
  SynthConfig c = small_config();
  c.n_classes = 100;  // 2^4 = 16 < 100
  c.k_attrs = 8;
  c.l_groups = 4;
  CHECK_THROWS_WITH_AS(generate_synthetic(c), doctest::Contains("signatures"), Error);
}

TEST_CASE("generator validator: coverage and disjoint signatures") {
  DatasetBundle b = generate_synthetic(small_config());
  validate_synthetic(b);  // the generator already ran it; must hold afterwards too

  // unseen signatures never occur among seen classes
  std::set<std::vector<int>> seen_sigs;
  for (const auto& cl : b.classes.classes) {
    std::vector<int> sig;
    for (int k = 0; k < b.schema.k; ++k)
      if (cl.phi[k] >= 0.5f) sig.push_back(k);
    if (cl.split == Split::seen) seen_sigs.insert(sig);
  }
  for (const auto& cl : b.classes.classes)
    if (cl.split == Split::unseen) {
      std::vector<int> sig;
      for (int k = 0; k < b.schema.k; ++k)
        if (cl.phi[k] >= 0.5f) sig.push_back(k);
      CHECK(seen_sigs.count(sig) == 0);
    }
}

TEST_CASE("same seed twice gives byte-identical bundles") {
  DatasetBundle a = generate_synthetic(small_config());
  DatasetBundle b = generate_synthetic(small_config());
  CHECK(a == b);

  const std::string da = temp_dir("det_a"), db = temp_dir("det_b");
  save_bundle(a, da);
  save_bundle(b, db);
  CHECK(bundle_digest(da) == bundle_digest(db));
  fs::remove_all(da);
  fs::remove_all(db);
}

TEST_CASE("ground-truth boxes exactly contain the painted glyphs") {
  DatasetBundle b = generate_synthetic(small_config());
  // anything brighter than the speckle ceiling is glyph paint
  const float noise_ceiling = 0.1f;
  for (size_t i = 0; i < b.samples.size(); i += 7) {
    const SampleRecord& s = b.samples[i];
    const int side = (int)s.image.dim(1);
    REQUIRE(s.parts.size() == (size_t)b.schema.l);
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) {
        const bool painted = s.image.at(0, y, x) > noise_ceiling ||
                             s.image.at(1, y, x) > noise_ceiling ||
                             s.image.at(2, y, x) > noise_ceiling;
        if (!painted) continue;
        bool inside_any = false;
        for (const auto& p : s.parts) inside_any |= p.contains(x, y);
        CHECK(inside_any);
      }
    for (const auto& p : s.parts) {
      CHECK(p.x0 >= 0);
      CHECK(p.y0 >= 0);
      CHECK(p.x1 < side);
      CHECK(p.y1 < side);
    }
  }
}

TEST_CASE("bundle round-trip is bitwise lossless") {
  DatasetBundle b = generate_synthetic(small_config());
  const std::string dir = temp_dir("roundtrip");
  save_bundle(b, dir);
  DatasetBundle loaded = load_bundle(dir);
  CHECK(loaded == b);
  fs::remove_all(dir);
}

TEST_CASE("feature-table bundle round-trip") {
  DatasetBundle b;
  b.schema.k = 4;
  b.schema.l = 2;
  b.schema.names = {"a", "b", "c", "d"};
  b.schema.group_of = {1, 1, 2, 2};
  b.schema.group_names = {"group1", "group2"};
  b.classes.classes.push_back({0, Split::seen, {1, 0, 1, 0}});
  b.classes.classes.push_back({1, Split::unseen, {0, 1, 0, 1}});
  Rng rng(3);
  for (int i = 0; i < 4; ++i) {
    SampleRecord s;
    s.image_id = i;
    s.class_id = i % 2;
    s.feature = Tensor<float>({6, 3, 3});
    for (auto& v : s.feature.data) v = (float)rng.uniform();
    b.samples.push_back(std::move(s));
  }
  const std::string dir = temp_dir("feat");
  save_bundle(b, dir);
  DatasetBundle loaded = load_bundle(dir);
  CHECK(loaded == b);
  CHECK(loaded.has_features());
  CHECK_FALSE(loaded.has_images());
  fs::remove_all(dir);
}

TEST_CASE("corrupt magic bytes produce a bad-magic error") {
  DatasetBundle b = generate_synthetic(small_config());
  const std::string dir = temp_dir("magic");
  save_bundle(b, dir);
  {
    std::FILE* f = std::fopen((dir + "/tensors.bin").c_str(), "r+b");
    REQUIRE(f);
    std::fputs("XXX", f);
    std::fclose(f);
  }
  try {
    load_bundle(dir);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == "bad-magic");
    CHECK(std::string(e.what()).find("tensors.bin") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("tensor stream version mismatch is its own error") {
  DatasetBundle b = generate_synthetic(small_config());
  const std::string dir = temp_dir("version");
  save_bundle(b, dir);
  {
    std::FILE* f = std::fopen((dir + "/tensors.bin").c_str(), "r+b");
    REQUIRE(f);
    std::fseek(f, 6, SEEK_SET);  // the version digit of APNTEN1\0
    std::fputc('9', f);
    std::fclose(f);
  }
  try {
    load_bundle(dir);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == "version-mismatch");
  }
  fs::remove_all(dir);
}

TEST_CASE("truncated tensor file is reported as truncated") {
  DatasetBundle b = generate_synthetic(small_config());
  const std::string dir = temp_dir("trunc");
  save_bundle(b, dir);
  const std::string path = dir + "/tensors.bin";
  const auto size = fs::file_size(path);
  fs::resize_file(path, size / 2);
  try {
    load_bundle(dir);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == "truncated");
    CHECK(std::string(e.what()).find("tensors.bin") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("phi length mismatch against schema K is a dim-mismatch at load") {
  DatasetBundle b = generate_synthetic(small_config());
  const std::string dir = temp_dir("dim");
  save_bundle(b, dir);
  // rewrite classes.tsv with one value dropped from every line
  std::vector<std::string> lines;
  {
    std::FILE* f = std::fopen((dir + "/classes.tsv").c_str(), "rb");
    REQUIRE(f);
    std::string all;
    char buf[4096];
    size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) all.append(buf, n);
    std::fclose(f);
    size_t start = 0;
    for (size_t i = 0; i <= all.size(); ++i)
      if (i == all.size() || all[i] == '\n') {
        if (i > start) {
          std::string line = all.substr(start, i - start);
          lines.push_back(line.substr(0, line.rfind('\t')));
        }
        start = i + 1;
      }
  }
  {
    std::FILE* f = std::fopen((dir + "/classes.tsv").c_str(), "wb");
    REQUIRE(f);
    for (const auto& l : lines) std::fprintf(f, "%s\n", l.c_str());
    std::fclose(f);
  }
  try {
    load_bundle(dir);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == "dim-mismatch");
    CHECK(std::string(e.what()).find("classes.tsv") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("episodes: smallest case, determinism, too-few-classes") {
  SynthConfig c = small_config();
  c.n_unseen = 2;
  DatasetBundle b = generate_synthetic(c);

  auto eps = make_episodes(b, 2, 1, 1, 3, 5);
  REQUIRE(eps.size() == 3);
  for (const auto& ep : eps) {
    CHECK(ep.class_ids.size() == 2);
    CHECK(ep.support[0].size() == 1);
    CHECK(ep.query[0].size() == 1);
    for (size_t w = 0; w < 2; ++w) CHECK(ep.support[w][0] != ep.query[w][0]);
  }

  auto again = make_episodes(b, 2, 1, 1, 3, 5);
  for (size_t e = 0; e < eps.size(); ++e) {
    CHECK(eps[e].class_ids == again[e].class_ids);
    CHECK(eps[e].support == again[e].support);
    CHECK(eps[e].query == again[e].query);
  }

  CHECK_THROWS_WITH_AS(make_episodes(b, 5, 1, 1, 1, 5), doctest::Contains("novel classes"),
                       Error);
  // insufficient samples names the class
  CHECK_THROWS_WITH_AS(make_episodes(b, 2, 4, 3, 1, 5), doctest::Contains("class"), Error);
}

TEST_CASE("chance_pcp equals the mean box area ratio") {
  DatasetBundle b = generate_synthetic(small_config());
  double manual = 0;
  long n = 0;
  for (const auto& s : b.samples)
    for (const auto& p : s.parts) {
      manual += (double)p.area() / (32.0 * 32.0);
      ++n;
    }
  CHECK(chance_pcp(b) == doctest::Approx(manual / n));
}
