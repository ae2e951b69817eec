#ifndef REID_PIPELINE_HPP_
#define REID_PIPELINE_HPP_

#include <optional>
#include <string>
#include <vector>

#include "reid/layers.hpp"
#include "reid/losses.hpp"
#include "reid/rng.hpp"

namespace reid {

// Which head sits on top of the backbone.
//   kStrong:   triplet on f_t,               CE on classifier(BN(f_t))
//   kStronger: triplet on L2(f_i), f_i = BN(f_t), CE on classifier(f_i)
enum class Variant { kStrong, kStronger };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct BackboneParams {
  // ReLU sits between consecutive layers; the last layer's output is f_t.
  std::vector<LinearParams> layers;
  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t feature_dim() const { return layers.back().out_dim(); }
};

struct HeadParams {
  BnParams bn;
  LinearParams classifier;  // C x d_t, no bias
};

struct PipelineParams {
  BackboneParams backbone;
  HeadParams head;
  std::size_t num_classes() const { return head.classifier.out_dim(); }
};

struct ModelShape {
  std::size_t input_dim = 32;
  std::vector<std::size_t> hidden = {64};
  std::size_t feature_dim = 32;
  std::size_t num_classes = 2;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
};

// Kaiming-initialized linear weights, zero backbone biases, gamma = 1,
// beta = 0, bias-free classifier.
PipelineParams init_pipeline(const ModelShape& shape, Rng& rng);
void validate(const PipelineParams& params);

// Named view over every trainable block, in a fixed order shared with
// ParamGrads::blocks.
struct ParamSlot {
  std::string name;
  Mat* value;
  bool weight_decay;  // true for linear weights only
};
std::vector<ParamSlot> parameter_slots(PipelineParams& params);
std::vector<std::string> parameter_names(const PipelineParams& params);

struct LossConfig {
  CeConfig ce;
  TripletConfig triplet;
  double ce_weight = 1.0;
  double triplet_weight = 1.0;
};

struct PipelineCache {
  Variant variant = Variant::kStrong;
  std::vector<LinearCache> linear;
  std::vector<ReluCache> relu;
  Mat ft;
  BnCache bn;
  Mat fi;
  std::optional<L2Cache> l2;       // stronger only
  LinearCache classifier;
  Mat ce_dlogits;                  // already scaled by ce_weight
  Mat triplet_dinput;              // grad at the triplet input, scaled
  TripletIndices mined;
  std::vector<bool> triplet_active;  // hinge state per anchor
  std::vector<std::size_t> dims;   // structural fingerprint of the params
};

struct ForwardResult {
  double total_loss = 0.0;
  double ce_loss = 0.0;
  double triplet_loss = 0.0;
  PipelineCache cache;
};

struct ForwardOptions {
  // Fold the batch statistics into the BN running averages.
  bool update_running_stats = true;
};

ForwardResult forward_loss(const Mat& x, Labels labels, PipelineParams& params,
                           Variant variant, const LossConfig& cfg,
                           const ForwardOptions& opts = {});
// Same computation with the parameters left untouched.
ForwardResult forward_loss(const Mat& x, Labels labels, const PipelineParams& params,
                           Variant variant, const LossConfig& cfg);

struct BranchMask {
  bool ce = true;
  bool triplet = true;
};

struct ParamGrads {
  std::vector<Mat> blocks;   // aligned with parameter_slots
  Mat d_ft;                  // total gradient reaching f_t
  Mat triplet_grad_fi;       // stronger: triplet-branch gradient at f_i
};

ParamGrads backward(const PipelineCache& cache, const PipelineParams& params,
                    const BranchMask& mask = {});

Mat backbone_forward(const Mat& x, const BackboneParams& backbone);

// BN_eval(backbone(x)); identical for both variants.
Mat inference_feature(const Mat& x, const PipelineParams& params);

}  // namespace reid

#endif  // REID_PIPELINE_HPP_
