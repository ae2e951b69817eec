#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "oracles.hpp"
#include "reid/data.hpp"
#include "reid/errors.hpp"
#include "reid/eval.hpp"
#include "test_util.hpp"

namespace reid {
namespace {

using testing::scratch_dir;
using testing::slurp;
using testing::spit;

EvalReport raw_report(const Dataset& ds, EvalMetric m) {
  const SplitView q = split_view(ds, Split::kQuery), g = split_view(ds, Split::kGallery);
  return evaluate_market(compute_dist_matrix(q.features, g.features, m), q.pids, q.camids,
                         g.pids, g.camids, 10);
}

TEST(Synthetic, ShapeAndSplits) {
  const Dataset ds = gen_synthetic(SynthConfig{});
  EXPECT_EQ(ds.items.size(), 64u * 16u);
  EXPECT_EQ(ds.num_train_ids(), 32u);
  EXPECT_EQ(ds.input_dim(), 32u);
  EXPECT_EQ(ds.indices(Split::kTrain).size(), 32u * 16u);
  // One query per held-out (identity, camera) pair.
  EXPECT_EQ(ds.indices(Split::kQuery).size(), 32u * 4u);
  // Dense pid map is a bijection onto [0, C).
  std::set<int> labels;
  for (const auto& [pid, label] : ds.pid_map) labels.insert(label);
  EXPECT_EQ(labels.size(), ds.pid_map.size());
  EXPECT_EQ(*labels.rbegin(), static_cast<int>(ds.pid_map.size()) - 1);
}

TEST(Synthetic, DegenerateGeneratorIsPerfect) {
  SynthConfig c;
  c.norm_confound = 0.0;
  c.direction_noise = 0.0;
  c.camera_shift = 0.0;
  c.nuisance_dims = 0;
  const Dataset ds = gen_synthetic(c);
  // Every sample of an identity is the same vector.
  std::map<int, Mat> first;
  for (const Item& it : ds.items) {
    const Mat row = payload_row(it.payload);
    auto [pos, fresh] = first.emplace(it.pid, row);
    if (!fresh) EXPECT_LT(max_abs_diff(pos->second, row), 1e-12);
  }
  const auto r = raw_report(ds, EvalMetric::kCosine);
  EXPECT_EQ(r.mAP, 1.0);
}

TEST(Synthetic, CosineBeatsEuclideanUnderNormConfound) {
  SynthConfig c;
  c.nuisance_dims = 0;
  const Dataset ds = gen_synthetic(c);
  const double cos = raw_report(ds, EvalMetric::kCosine).mAP;
  const double euc = raw_report(ds, EvalMetric::kEuclidean).mAP;
  RecordProperty("raw_cosine_mAP", std::to_string(cos));
  RecordProperty("raw_euclidean_mAP", std::to_string(euc));
  EXPECT_GT(cos, euc + 0.2);
}

TEST(Synthetic, FixedRadiusRankingsCoincide) {
  SynthConfig c;
  c.norm_confound = 0.0;
  c.camera_shift = 0.0;
  c.nuisance_dims = 0;
  const Dataset ds = gen_synthetic(c);
  const SplitView q = split_view(ds, Split::kQuery), g = split_view(ds, Split::kGallery);
  const Mat dc = compute_dist_matrix(q.features, g.features, EvalMetric::kCosine);
  const Mat de = compute_dist_matrix(q.features, g.features, EvalMetric::kEuclidean);
  for (std::size_t i = 0; i < q.features.rows(); ++i) {
    std::vector<std::size_t> a(g.features.rows()), b(g.features.rows());
    std::iota(a.begin(), a.end(), 0);
    std::iota(b.begin(), b.end(), 0);
    std::stable_sort(a.begin(), a.end(), [&](auto x, auto y) { return dc(i, x) < dc(i, y); });
    std::stable_sort(b.begin(), b.end(), [&](auto x, auto y) { return de(i, x) < de(i, y); });
    EXPECT_EQ(a, b) << "query " << i;
  }
}

TEST(Synthetic, ByteIdenticalOutput) {
  const auto dir = scratch_dir();
  SynthConfig c;
  c.seed = 9;
  const auto m1 = write_dataset(gen_synthetic(c), dir / "a");
  const auto m2 = write_dataset(gen_synthetic(c), dir / "b");
  EXPECT_EQ(slurp(m1), slurp(m2));
  EXPECT_EQ(slurp(dir / "a" / "pid_map.csv"), slurp(dir / "b" / "pid_map.csv"));
  const Dataset back = load_manifest(m1);
  for (const Item& it : back.items)
    ASSERT_EQ(slurp(dir / "a" / it.path), slurp(dir / "b" / it.path)) << it.path;
  c.seed = 10;
  write_dataset(gen_synthetic(c), dir / "c");
  EXPECT_NE(slurp(dir / "c" / back.items[0].path), slurp(dir / "a" / back.items[0].path));
}

TEST(Synthetic, Validation) {
  SynthConfig c;
  c.dim = 1;
  c.nuisance_dims = 0;
  EXPECT_THROW(gen_synthetic(c), ParameterError);
  c = SynthConfig{};
  c.samples_per_id = 1;
  EXPECT_THROW(gen_synthetic(c), ParameterError);
}

TEST(Manifest, HeaderOnlyIsEmpty) {
  const auto dir = scratch_dir();
  spit(dir / "m.csv", "path,pid,camid,split\n");
  const Dataset ds = load_manifest(dir / "m.csv");
  EXPECT_TRUE(ds.items.empty());
  EXPECT_TRUE(ds.pid_map.empty());
}

TEST(Manifest, UnknownSplitNamesLine) {
  const auto dir = scratch_dir();
  write_vector_file(dir / "a.f64", std::vector<double>{1, 2});
  spit(dir / "m.csv", "path,pid,camid,split\na.f64,1,0,train\na.f64,1,1,validation\n");
  try {
    load_manifest(dir / "m.csv");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("m.csv:3"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("validation"), std::string::npos) << e.what();
  }
}

TEST(Manifest, MalformedRows) {
  const auto dir = scratch_dir();
  write_vector_file(dir / "a.f64", std::vector<double>{1, 2});
  spit(dir / "m.csv", "path,pid,camid,split\na.f64,x,0,train\n");
  EXPECT_THROW(load_manifest(dir / "m.csv"), ParseError);
  spit(dir / "m.csv", "path,pid,camid,split\na.f64,1,0\n");
  EXPECT_THROW(load_manifest(dir / "m.csv"), ParseError);
  spit(dir / "m.csv", "path,pid,camid,split\nmissing.f64,1,0,train\n");
  EXPECT_THROW(load_manifest(dir / "m.csv"), DatasetError);
  EXPECT_THROW(load_manifest(dir / "nope.csv"), IoError);
}

TEST(Manifest, RoundTrip) {
  const auto dir = scratch_dir();
  SynthConfig c;
  c.num_ids = 6;
  c.samples_per_id = 4;
  c.num_train_ids = 3;
  const Dataset ds = gen_synthetic(c);
  const auto manifest = write_dataset(ds, dir);
  const Dataset back = load_manifest(manifest);
  ASSERT_EQ(back.items.size(), ds.items.size());
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    EXPECT_EQ(payload_row(back.items[i].payload), payload_row(ds.items[i].payload));
    EXPECT_EQ(back.items[i].pid, ds.items[i].pid);
    EXPECT_EQ(back.items[i].camid, ds.items[i].camid);
    EXPECT_EQ(back.items[i].split, ds.items[i].split);
  }
  EXPECT_EQ(back.pid_map, ds.pid_map);
  write_manifest(back, dir / "again.csv");
  EXPECT_EQ(slurp(dir / "again.csv"), slurp(manifest));
}

TEST(Payload, VectorContainer) {
  const auto dir = scratch_dir();
  const std::vector<double> v = {1.5, -0.0, 1e-300, 3.0};
  write_vector_file(dir / "v.f64", v);
  const std::string bytes = slurp(dir / "v.f64");
  ASSERT_EQ(bytes.size(), 8u + 4u * 8u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 4u);
  EXPECT_EQ(read_vector_file(dir / "v.f64"), v);
  spit(dir / "bad.f64", bytes.substr(0, 20));
  EXPECT_THROW(read_vector_file(dir / "bad.f64"), ParseError);
}

TEST(Payload, ImageContainer) {
  const auto dir = scratch_dir();
  Image img(3, 5, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = (i % 256) / 255.0;
  write_image_file(dir / "x.ppm", img);
  EXPECT_EQ(read_image_file(dir / "x.ppm"), img);
  Image gray(2, 2, 1, 1.0);
  write_image_file(dir / "g.pgm", gray);
  EXPECT_EQ(read_image_file(dir / "g.pgm"), gray);
}

Image ramp(std::size_t h, std::size_t w, std::size_t c) {
  Image img(h, w, c);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = (i % 7) / 7.0;
  return img;
}

TEST(RandomErasing, ZeroProbabilityIsIdentity) {
  Rng rng(500);
  RandomErasingConfig cfg;
  cfg.probability = 0.0;
  cfg.channel_mean = {0.5};
  const Image img = ramp(8, 6, 1);
  for (int i = 0; i < 200; ++i) EXPECT_EQ(random_erasing(img, cfg, rng), img);
}

TEST(RandomErasing, ForcedGeometry) {
  Rng rng(501);
  RandomErasingConfig cfg;
  cfg.probability = 1.0;
  cfg.area = {0.25, 0.25};
  cfg.aspect = {1.0, 1.0};
  cfg.channel_mean = {0.5};
  const Image img(8, 8, 1, 0.0);
  for (int rep = 0; rep < 50; ++rep) {
    const Image out = random_erasing(img, cfg, rng);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      if (out.data[i] != img.data[i]) {
        ++changed;
        EXPECT_EQ(out.data[i], 0.5);
      }
    }
    EXPECT_EQ(changed, 16u);
  }
}

TEST(RandomErasing, Frequency) {
  Rng rng(502);
  RandomErasingConfig cfg;
  cfg.channel_mean = {2.0, 2.0, 2.0};  // outside the ramp's range
  const Image img = ramp(16, 8, 3);
  int erased = 0;
  const int trials = 10000;
  for (int i = 0; i < trials; ++i) erased += random_erasing(img, cfg, rng) != img;
  EXPECT_NEAR(static_cast<double>(erased) / trials, 0.5, 0.02);
}

TEST(RandomErasing, NoiseFillPreservesShapeAndRange) {
  Rng rng(503);
  RandomErasingConfig cfg;
  cfg.probability = 1.0;
  cfg.fill = EraseFill::kNoise;
  const Image img = ramp(10, 12, 3);
  for (int i = 0; i < 100; ++i) {
    const Image out = random_erasing(img, cfg, rng);
    EXPECT_EQ(out.height, img.height);
    EXPECT_EQ(out.width, img.width);
    EXPECT_EQ(out.channels, img.channels);
    for (double v : out.data) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(RandomErasing, InvalidRanges) {
  Rng rng(504);
  RandomErasingConfig cfg;
  cfg.area = {0.5, 0.2};
  EXPECT_THROW(random_erasing(ramp(4, 4, 1), cfg, rng), ParameterError);
  cfg = RandomErasingConfig{};
  cfg.area = {0.0, 0.2};
  EXPECT_THROW(random_erasing(ramp(4, 4, 1), cfg, rng), ParameterError);
  cfg = RandomErasingConfig{};
  cfg.probability = 1.5;
  EXPECT_THROW(random_erasing(ramp(4, 4, 1), cfg, rng), ParameterError);
}

TEST(Flip, Cases) {
  Rng rng(505);
  Image ab(1, 2, 1);
  ab.data = {0.25, 0.75};
  const Image ba = horizontal_flip(ab, 1.0, rng);
  EXPECT_EQ(ba.data, (std::vector<double>{0.75, 0.25}));
  const Image img = ramp(5, 4, 3);
  EXPECT_EQ(horizontal_flip(horizontal_flip(img, 1.0, rng), 1.0, rng), img);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(horizontal_flip(img, 0.0, rng), img);
}

}  // namespace
}  // namespace reid
