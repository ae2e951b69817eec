#include "reid/pipeline.hpp"

#include "reid/errors.hpp"
#include "reid/numerics.hpp"

namespace reid {

namespace {

std::vector<std::size_t> fingerprint(const PipelineParams& params, Variant v) {
  std::vector<std::size_t> dims{static_cast<std::size_t>(v)};
  for (const auto& l : params.backbone.layers) {
    dims.push_back(l.in_dim());
    dims.push_back(l.out_dim());
    dims.push_back(l.bias ? 1 : 0);
  }
  dims.push_back(params.head.bn.dim());
  dims.push_back(params.head.classifier.out_dim());
  return dims;
}

}  // namespace

std::string to_string(Variant v) {
  return v == Variant::kStrong ? "strong" : "stronger";
}

Variant variant_from_string(const std::string& s) {
  if (s == "strong") return Variant::kStrong;
  if (s == "stronger") return Variant::kStronger;
  throw ParameterError("unknown variant '" + s + "' (expected strong|stronger)");
}

PipelineParams init_pipeline(const ModelShape& shape, Rng& rng) {
  if (shape.input_dim == 0 || shape.feature_dim == 0 || shape.num_classes == 0)
    throw ParameterError("init_pipeline: dimensions must be positive");
  PipelineParams p;
  std::size_t in = shape.input_dim;
  std::vector<std::size_t> outs = shape.hidden;
  outs.push_back(shape.feature_dim);
  for (std::size_t out : outs) {
    if (out == 0) throw ParameterError("init_pipeline: zero-width layer");
    LinearParams l;
    l.weight = kaiming_init(in, out, in, rng);
    l.bias = Mat(1, out);
    p.backbone.layers.push_back(std::move(l));
    in = out;
  }
  p.head.bn = BnParams::make(shape.feature_dim, shape.bn_momentum, shape.bn_eps);
  p.head.classifier.weight =
      kaiming_init(shape.feature_dim, shape.num_classes, shape.feature_dim, rng);
  return p;
}

void validate(const PipelineParams& params) {
  const auto& layers = params.backbone.layers;
  if (layers.empty()) throw ParameterError("backbone needs at least one layer");
  for (std::size_t i = 1; i < layers.size(); ++i) {
    if (layers[i].in_dim() != layers[i - 1].out_dim())
      throw ShapeError("backbone layer " + std::to_string(i) +
                       " does not chain with its predecessor");
  }
  if (params.head.bn.dim() != params.backbone.feature_dim())
    throw ShapeError("BN width does not match backbone output");
  if (params.head.classifier.bias)
    throw ParameterError("classifier must not carry a bias");
  if (params.head.classifier.in_dim() != params.backbone.feature_dim())
    throw ShapeError("classifier input does not match feature width");
}

std::vector<ParamSlot> parameter_slots(PipelineParams& params) {
  std::vector<ParamSlot> slots;
  auto& layers = params.backbone.layers;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string prefix = "backbone." + std::to_string(i);
    slots.push_back({prefix + ".weight", &layers[i].weight, true});
    if (layers[i].bias) slots.push_back({prefix + ".bias", &*layers[i].bias, false});
  }
  slots.push_back({"bn.gamma", &params.head.bn.gamma, false});
  slots.push_back({"bn.beta", &params.head.bn.beta, false});
  slots.push_back({"classifier.weight", &params.head.classifier.weight, true});
  return slots;
}

std::vector<std::string> parameter_names(const PipelineParams& params) {
  PipelineParams& mut = const_cast<PipelineParams&>(params);
  std::vector<std::string> names;
  for (const auto& s : parameter_slots(mut)) names.push_back(s.name);
  return names;
}

Mat backbone_forward(const Mat& x, const BackboneParams& backbone) {
  Mat h = x;
  for (std::size_t i = 0; i < backbone.layers.size(); ++i) {
    h = linear(h, backbone.layers[i]).y;
    if (i + 1 < backbone.layers.size()) h = relu(h).y;
  }
  return h;
}

ForwardResult forward_loss(const Mat& x, Labels labels, const PipelineParams& params,
                           Variant variant, const LossConfig& cfg) {
  validate(params);
  if (labels.size() != x.rows())
    throw ShapeError("forward_loss: label count does not match batch");
  ForwardResult r;
  PipelineCache& c = r.cache;
  c.variant = variant;
  c.dims = fingerprint(params, variant);

  const auto& layers = params.backbone.layers;
  Mat h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto lo = linear(h, layers[i]);
    c.linear.push_back(std::move(lo.cache));
    h = std::move(lo.y);
    if (i + 1 < layers.size()) {
      auto ro = relu(h);
      c.relu.push_back(std::move(ro.cache));
      h = std::move(ro.y);
    }
  }
  c.ft = std::move(h);

  auto bn = batchnorm_train(c.ft, params.head.bn);
  c.bn = std::move(bn.cache);
  c.fi = std::move(bn.y);

  auto logits = linear(c.fi, params.head.classifier);
  c.classifier = std::move(logits.cache);
  auto ce = softmax_cross_entropy(logits.y, labels, cfg.ce);
  r.ce_loss = ce.loss;
  c.ce_dlogits = std::move(ce.dlogits);
  c.ce_dlogits *= cfg.ce_weight;

  const Mat* triplet_input = &c.ft;
  if (variant == Variant::kStronger) {
    auto l2 = l2_normalize(c.fi);
    c.l2 = std::move(l2.cache);
    triplet_input = &c.l2->y;
  }
  auto tri = batch_hard_triplet_loss(*triplet_input, labels, cfg.triplet);
  r.triplet_loss = tri.loss;
  c.mined = std::move(tri.indices);
  c.triplet_active = std::move(tri.active);
  c.triplet_dinput = std::move(tri.dfeatures);
  c.triplet_dinput *= cfg.triplet_weight;

  r.total_loss = cfg.ce_weight * r.ce_loss + cfg.triplet_weight * r.triplet_loss;
  return r;
}

ForwardResult forward_loss(const Mat& x, Labels labels, PipelineParams& params,
                           Variant variant, const LossConfig& cfg,
                           const ForwardOptions& opts) {
  ForwardResult r =
      forward_loss(x, labels, static_cast<const PipelineParams&>(params), variant, cfg);
  if (opts.update_running_stats) update_running_stats(params.head.bn, r.cache.bn);
  return r;
}

ParamGrads backward(const PipelineCache& cache, const PipelineParams& params,
                    const BranchMask& mask) {
  if (cache.dims.empty() || cache.dims != fingerprint(params, cache.variant) ||
      cache.linear.size() != params.backbone.layers.size()) {
    throw UsageError("backward: cache does not belong to these parameters");
  }
  const std::size_t n = cache.ft.rows(), d = cache.ft.cols();

  // Classifier and the CE gradient at f_i.
  Mat dclassifier(params.head.classifier.weight.rows(),
                  params.head.classifier.weight.cols());
  Mat dfi(n, d);
  if (mask.ce) {
    auto g = linear_backward(cache.ce_dlogits, cache.classifier, params.head.classifier);
    dclassifier = std::move(g.dweight);
    dfi = std::move(g.dx);
  }

  ParamGrads grads;
  Mat dft(n, d);
  if (cache.variant == Variant::kStronger) {
    grads.triplet_grad_fi = Mat(n, d);
    if (mask.triplet) {
      grads.triplet_grad_fi = l2_normalize_backward(cache.triplet_dinput, *cache.l2);
      dfi += grads.triplet_grad_fi;
    }
  } else if (mask.triplet) {
    dft += cache.triplet_dinput;
  }

  auto bn = batchnorm_backward(dfi, cache.bn);
  dft += bn.dx;
  grads.d_ft = dft;

  const auto& layers = params.backbone.layers;
  std::vector<LinearGrads> lg(layers.size());
  Mat dh = std::move(dft);
  for (std::size_t i = layers.size(); i-- > 0;) {
    lg[i] = linear_backward(dh, cache.linear[i], layers[i]);
    dh = std::move(lg[i].dx);
    if (i > 0) dh = relu_backward(dh, cache.relu[i - 1]);
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    grads.blocks.push_back(std::move(lg[i].dweight));
    if (layers[i].bias) grads.blocks.push_back(std::move(*lg[i].dbias));
  }
  grads.blocks.push_back(std::move(bn.dgamma));
  grads.blocks.push_back(std::move(bn.dbeta));
  grads.blocks.push_back(std::move(dclassifier));
  return grads;
}

Mat inference_feature(const Mat& x, const PipelineParams& params) {
  validate(params);
  if (params.head.bn.batches_tracked == 0) {
    throw StateError("inference_feature: BN running statistics are unpopulated");
  }
  return batchnorm_eval(backbone_forward(x, params.backbone), params.head.bn);
}

}  // namespace reid
