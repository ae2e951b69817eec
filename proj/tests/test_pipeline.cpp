#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "reid/errors.hpp"
#include "reid/numerics.hpp"
#include "reid/pipeline.hpp"

namespace reid {
namespace {

LossConfig loss_for(Variant v) {
  LossConfig c;
  c.triplet.metric =
      v == Variant::kStrong ? TripletMetric::kEuclidean : TripletMetric::kCosineDistance;
  return c;
}

PipelineParams tiny_net(Rng& rng, std::vector<std::size_t> hidden = {7}) {
  ModelShape s;
  s.input_dim = 6;
  s.hidden = std::move(hidden);
  s.feature_dim = 8;
  s.num_classes = 4;
  PipelineParams p = init_pipeline(s, rng);
  // Non-trivial affine BN so gamma/beta gradients are exercised.
  p.head.bn.gamma = oracle::random_mat(1, 8, rng, 0.3) + Mat(1, 8, 1.0);
  p.head.bn.beta = oracle::random_mat(1, 8, rng, 0.3);
  for (auto& l : p.backbone.layers) *l.bias = oracle::random_mat(1, l.out_dim(), rng, 0.1);
  return p;
}

TEST(Pipeline, EndToEndFiniteDifference) {
  Rng rng(300);
  const auto labels = oracle::pk_labels(4, 2);
  for (int rep = 0; rep < 20; ++rep) {
    for (Variant v : {Variant::kStrong, Variant::kStronger}) {
      PipelineParams p = tiny_net(rng, rep % 2 ? std::vector<std::size_t>{} : std::vector<std::size_t>{7});
      const Mat x = oracle::random_mat(8, 6, rng);
      const LossConfig cfg = loss_for(v);
      const auto fwd = forward_loss(x, labels, std::as_const(p), v, cfg);
      const auto g = backward(fwd.cache, p, {});
      const auto slots = parameter_slots(p);
      ASSERT_EQ(g.blocks.size(), slots.size());
      const std::size_t last_bias = 2 * p.backbone.layers.size() - 1;
      for (std::size_t k = 0; k < slots.size(); ++k) {
        const Mat fd = finite_diff_grad(
            [&](const Mat& w) {
              PipelineParams q = p;
              *parameter_slots(q)[k].value = w;
              return forward_loss(x, labels, std::as_const(q), v, cfg).total_loss;
            },
            *slots[k].value);
        if (k == last_bias) {
          // BN cancels any shift of f_t, so this gradient is exactly zero
          // and the finite difference is pure rounding noise.
          for (double a : g.blocks[k].values()) EXPECT_LT(std::abs(a), 1e-12);
          for (double b : fd.values()) EXPECT_LT(std::abs(b), 1e-9);
          continue;
        }
        EXPECT_LT(max_rel_error(g.blocks[k], fd), 1e-4)
            << to_string(v) << " " << slots[k].name << " rep " << rep;
      }
    }
  }
}

TEST(Pipeline, SlotOrder) {
  Rng rng(1);
  PipelineParams p = tiny_net(rng);
  EXPECT_EQ(parameter_names(p),
            (std::vector<std::string>{"backbone.0.weight", "backbone.0.bias", "backbone.1.weight",
                                      "backbone.1.bias", "bn.gamma", "bn.beta",
                                      "classifier.weight"}));
}

TEST(Pipeline, CeTermSharedAcrossVariants) {
  Rng rng(301);
  const auto labels = oracle::pk_labels(4, 2);
  for (int rep = 0; rep < 10; ++rep) {
    PipelineParams p = tiny_net(rng);
    p.head.bn.gamma = Mat(1, 8, 1.0);
    p.head.bn.beta = Mat(1, 8, 0.0);
    const Mat x = oracle::random_mat(8, 6, rng);
    const auto a = forward_loss(x, labels, std::as_const(p), Variant::kStrong,
                                loss_for(Variant::kStrong));
    const auto b = forward_loss(x, labels, std::as_const(p), Variant::kStronger,
                                loss_for(Variant::kStronger));
    EXPECT_EQ(a.ce_loss, b.ce_loss);
  }
}

// Identity backbone over one-hot class codes: a perfectly separated
// pretrained embedding.
PipelineParams separated(double classifier_scale) {
  PipelineParams p;
  p.backbone.layers.push_back({Mat::identity(4), Mat(1, 4, 0.0)});
  p.head.bn = BnParams::make(4);
  p.head.classifier = {Mat::identity(4) * classifier_scale, std::nullopt};
  return p;
}

Mat one_hot_batch(const std::vector<int>& labels) {
  Mat x(labels.size(), 4);
  for (std::size_t i = 0; i < labels.size(); ++i) x(i, labels[i]) = 5.0;
  return x;
}

TEST(Pipeline, SeparatedEmbedding) {
  const auto labels = oracle::pk_labels(4, 2);
  const PipelineParams p = separated(3.0);
  const auto r = forward_loss(one_hot_batch(labels), labels, p, Variant::kStronger,
                              loss_for(Variant::kStronger));
  EXPECT_EQ(r.triplet_loss, 0.0);
  EXPECT_LT(r.ce_loss, std::log(4.0));
}

TEST(Pipeline, ZeroLossGivesNearZeroGradients) {
  const auto labels = oracle::pk_labels(4, 2);
  const PipelineParams p = separated(100.0);
  const auto r = forward_loss(one_hot_batch(labels), labels, p, Variant::kStronger,
                              loss_for(Variant::kStronger));
  EXPECT_LT(r.total_loss, 1e-100);
  for (const Mat& b : backward(r.cache, p).blocks)
    for (double v : b.values()) EXPECT_LT(std::abs(v), 1e-90);
}

TEST(Pipeline, FrozenIdentityBackboneClassifierGradient) {
  Rng rng(302);
  const auto labels = oracle::pk_labels(4, 2);
  PipelineParams p;
  p.backbone.layers.push_back({Mat::identity(5), Mat(1, 5, 0.0)});
  p.head.bn = BnParams::make(5);
  p.head.classifier = {oracle::random_mat(4, 5, rng), std::nullopt};
  const Mat x = oracle::random_mat(8, 5, rng);
  const auto r = forward_loss(x, labels, p, Variant::kStrong, loss_for(Variant::kStrong));
  const auto g = backward(r.cache, p);

  const Mat fi = batchnorm_train(x, p.head.bn).y;
  const auto ce = softmax_cross_entropy(matmul_bt(fi, p.head.classifier.weight), labels);
  EXPECT_LT(max_abs_diff(g.blocks.back(), matmul_at(ce.dlogits, fi)), 1e-14);
}

TEST(Pipeline, TripletOffIsPureCe) {
  Rng rng(303);
  const auto labels = oracle::pk_labels(4, 2);
  for (Variant v : {Variant::kStrong, Variant::kStronger}) {
    PipelineParams p = tiny_net(rng, {});
    const Mat x = oracle::random_mat(8, 6, rng);
    LossConfig off = loss_for(v);
    off.triplet_weight = 0.0;
    const auto r = forward_loss(x, labels, std::as_const(p), v, off);
    const auto g = backward(r.cache, p);
    const auto masked = backward(
        forward_loss(x, labels, std::as_const(p), v, loss_for(v)).cache, p, {true, false});

    // Hand-chained CE backprop through classifier, BN and the single layer.
    const auto& layer = p.backbone.layers[0];
    const auto lin = linear(x, layer);
    const auto bn = batchnorm_train(lin.y, p.head.bn);
    const auto ce = softmax_cross_entropy(matmul_bt(bn.y, p.head.classifier.weight), labels);
    const Mat dfi = matmul(ce.dlogits, p.head.classifier.weight);
    const auto dbn = batchnorm_backward(dfi, bn.cache);
    const auto dl = linear_backward(dbn.dx, lin.cache, layer);
    const std::vector<Mat> expect = {dl.dweight, *dl.dbias, dbn.dgamma, dbn.dbeta,
                                     matmul_at(ce.dlogits, bn.y)};
    for (std::size_t k = 0; k < expect.size(); ++k) {
      EXPECT_LT(max_abs_diff(g.blocks[k], expect[k]), 1e-12) << k;
      EXPECT_LT(max_abs_diff(masked.blocks[k], expect[k]), 1e-12) << k;
    }
  }
}

TEST(Pipeline, StrongerTripletGradientIsTangent) {
  Rng rng(304);
  const auto labels = oracle::pk_labels(4, 4);
  for (int rep = 0; rep < 50; ++rep) {
    ModelShape s;
    s.num_classes = 4;
    PipelineParams p = init_pipeline(s, rng);
    const Mat x = oracle::random_mat(16, 32, rng);
    const auto r = forward_loss(x, labels, std::as_const(p), Variant::kStronger,
                                loss_for(Variant::kStronger));
    const auto g = backward(r.cache, p);
    for (std::size_t i = 0; i < 16; ++i) {
      const double gn = norm(g.triplet_grad_fi.row(i));
      if (gn == 0.0) continue;
      EXPECT_LT(std::abs(dot(g.triplet_grad_fi.row(i), r.cache.fi.row(i))) /
                    (gn * norm(r.cache.fi.row(i))),
                1e-9);
    }
  }
}

TEST(Pipeline, StaleCacheRejected) {
  Rng rng(305);
  const auto labels = oracle::pk_labels(4, 2);
  PipelineParams p = tiny_net(rng);
  PipelineParams other = tiny_net(rng, {});
  const auto r = forward_loss(oracle::random_mat(8, 6, rng), labels, std::as_const(p),
                              Variant::kStrong, loss_for(Variant::kStrong));
  EXPECT_THROW(backward(r.cache, other), UsageError);
  EXPECT_THROW(backward(PipelineCache{}, p), UsageError);
}

TEST(Pipeline, ConstForwardLeavesStatsAlone) {
  Rng rng(306);
  const auto labels = oracle::pk_labels(4, 2);
  PipelineParams p = tiny_net(rng);
  const PipelineParams before = p;
  const Mat x = oracle::random_mat(8, 6, rng);
  (void)forward_loss(x, labels, std::as_const(p), Variant::kStronger, loss_for(Variant::kStronger));
  EXPECT_EQ(p.head.bn.running_mean, before.head.bn.running_mean);
  EXPECT_EQ(p.head.bn.batches_tracked, 0u);
  (void)forward_loss(x, labels, p, Variant::kStronger, loss_for(Variant::kStronger));
  EXPECT_EQ(p.head.bn.batches_tracked, 1u);
}

TEST(Inference, RequiresPopulatedStats) {
  Rng rng(307);
  PipelineParams p = tiny_net(rng);
  const Mat x = oracle::random_mat(3, 6, rng);
  EXPECT_THROW(inference_feature(x, p), StateError);
  const auto labels = oracle::pk_labels(4, 2);
  (void)forward_loss(oracle::random_mat(8, 6, rng), labels, p, Variant::kStrong,
                     loss_for(Variant::kStrong));
  const Mat a = inference_feature(x, p);
  const Mat b = inference_feature(x, p);
  EXPECT_EQ(a, b);
  Mat twice(2, 6);
  for (std::size_t j = 0; j < 6; ++j) twice(0, j) = twice(1, j) = x(0, j);
  const Mat t = inference_feature(twice, p);
  for (std::size_t j = 0; j < t.cols(); ++j) EXPECT_EQ(t(0, j), t(1, j));
  EXPECT_EQ(inference_feature(x, p), batchnorm_eval(backbone_forward(x, p.backbone), p.head.bn));
}

TEST(Variant, Names) {
  EXPECT_EQ(variant_from_string("strong"), Variant::kStrong);
  EXPECT_EQ(variant_from_string(to_string(Variant::kStronger)), Variant::kStronger);
  EXPECT_THROW(variant_from_string("strongest"), ParameterError);
}

}  // namespace
}  // namespace reid
