#ifndef REID_TRAINING_HPP_
#define REID_TRAINING_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "reid/data.hpp"
#include "reid/eval.hpp"
#include "reid/pipeline.hpp"
#include "reid/rng.hpp"

namespace reid {

// P identities without replacement, K images each. Images are drawn without
// replacement when the identity has at least K of them, with replacement
// otherwise.
std::vector<std::size_t> pk_sample(std::span<const int> labels, std::size_t P,
                                   std::size_t K, Rng& rng);

struct Schedule {
  double base_lr = 3.5e-4;
  std::size_t warmup_epochs = 10;
  double warmup_start_lr = 3.5e-6;
  std::vector<std::size_t> milestones = {30, 55};
  double gamma = 0.1;
  std::size_t total_epochs = 120;

  // Warmup 3.5e-6 -> 3.5e-4 over 10 epochs, decay at 30 and 55.
  static Schedule market();
  // No warmup, 0.065 decayed by 0.1 at 150, 225 and 300 over 350 epochs.
  static Schedule submission();
};

void validate(const Schedule& s);
double lr_at(const Schedule& s, std::size_t epoch);

enum class OptimizerKind { kAdam, kSgd };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

struct OptimState {
  std::vector<Mat> first;    // Adam m, or SGD velocity
  std::vector<Mat> second;   // Adam v
  std::uint64_t step = 0;
};

void adam_step(std::span<const ParamSlot> params, std::span<const Mat> grads,
               OptimState& state, const OptimizerConfig& cfg, double lr);
void sgd_momentum_step(std::span<const ParamSlot> params, std::span<const Mat> grads,
                       OptimState& state, const OptimizerConfig& cfg, double lr);

struct LossSettings {
  double margin_strong = 0.3;
  double margin_stronger = 0.3;
  TripletMetric strong_metric = TripletMetric::kEuclidean;
  TripletMetric stronger_metric = TripletMetric::kCosineDistance;
  bool soft_margin = false;
  double label_smoothing = 0.0;
  double ce_weight = 1.0;
  double triplet_weight = 1.0;

  LossConfig for_variant(Variant v) const;
};

struct AugmentConfig {
  double flip_p = 0.5;
  RandomErasingConfig erasing;  // channel_mean filled from the train split
};

struct ValidationConfig {
  std::size_t every = 10;   // 0 disables validation
  EvalMetric metric = EvalMetric::kCosine;
  std::size_t max_rank = 10;
};

struct TrainConfig {
  Variant variant = Variant::kStronger;
  std::size_t P = 8;
  std::size_t K = 4;
  Schedule schedule = Schedule::market();
  OptimizerConfig optimizer;
  LossSettings loss;
  std::vector<std::size_t> hidden = {64};
  std::size_t feature_dim = 32;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
  AugmentConfig augment;
  ValidationConfig validation;
  // 0 = floor(train size / (P K)), at least 1.
  std::size_t iterations_per_epoch = 0;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double ce_loss = 0.0;
  double triplet_loss = 0.0;
  double total_loss = 0.0;
  std::optional<double> mAP;
  std::optional<double> rank1;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  PipelineParams params;
};

PipelineParams init_params_for(const TrainConfig& cfg, const Dataset& ds);

// Seed-deterministic training loop. Validation runs on the query/gallery
// splits at the configured cadence and always after the last epoch.
TrainResult train_run(const TrainConfig& cfg, const Dataset& ds);

// Retrieval report for the dataset's query/gallery splits.
EvalReport evaluate_params(const PipelineParams& params, const Dataset& ds,
                           EvalMetric metric, std::size_t max_rank);

// First epoch whose validated mAP reaches the threshold.
std::optional<std::size_t> epochs_to_reach(const std::vector<EpochRecord>& history,
                                           double threshold);

}  // namespace reid

#endif  // REID_TRAINING_HPP_
