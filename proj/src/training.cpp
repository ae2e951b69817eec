#include "reid/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "reid/errors.hpp"

namespace reid {

std::vector<std::size_t> pk_sample(std::span<const int> labels, std::size_t P,
                                   std::size_t K, Rng& rng) {
  if (P == 0 || K == 0) throw ParameterError("pk_sample: P and K must be >= 1");
  std::map<int, std::vector<std::size_t>> by_id;
  for (std::size_t i = 0; i < labels.size(); ++i) by_id[labels[i]].push_back(i);
  if (by_id.size() < P) {
    throw DatasetError("pk_sample: " + std::to_string(by_id.size()) +
                       " identities available, " + std::to_string(P) + " requested");
  }
  std::vector<const std::vector<std::size_t>*> ids;
  for (const auto& [id, idx] : by_id) ids.push_back(&idx);
  // Partial Fisher-Yates picks P identities.
  for (std::size_t i = 0; i < P; ++i) {
    const std::size_t j = i + rng.uniform_int(ids.size() - i);
    std::swap(ids[i], ids[j]);
  }
  std::vector<std::size_t> batch;
  batch.reserve(P * K);
  for (std::size_t i = 0; i < P; ++i) {
    std::vector<std::size_t> pool = *ids[i];
    if (pool.size() >= K) {
      for (std::size_t k = 0; k < K; ++k) {
        const std::size_t j = k + rng.uniform_int(pool.size() - k);
        std::swap(pool[k], pool[j]);
        batch.push_back(pool[k]);
      }
    } else {
      for (std::size_t k = 0; k < K; ++k) batch.push_back(pool[rng.uniform_int(pool.size())]);
    }
  }
  return batch;
}

Schedule Schedule::market() { return Schedule{}; }

Schedule Schedule::submission() {
  Schedule s;
  s.base_lr = 0.065;
  s.warmup_epochs = 0;
  s.warmup_start_lr = 0.065;
  s.milestones = {150, 225, 300};
  s.gamma = 0.1;
  s.total_epochs = 350;
  return s;
}

void validate(const Schedule& s) {
  if (!(s.base_lr > 0.0)) throw ParameterError("schedule: base_lr must be > 0");
  if (!(s.gamma > 0.0 && s.gamma <= 1.0))
    throw ParameterError("schedule: gamma must be in (0, 1]");
  if (s.warmup_epochs > 0 && !(s.warmup_start_lr >= 0.0))
    throw ParameterError("schedule: warmup_start_lr must be >= 0");
  for (std::size_t i = 0; i < s.milestones.size(); ++i) {
    if (s.milestones[i] < s.warmup_epochs)
      throw ParameterError("schedule: milestones must not precede the end of warmup");
    if (i > 0 && s.milestones[i] <= s.milestones[i - 1])
      throw ParameterError("schedule: milestones must be strictly increasing");
  }
}

double lr_at(const Schedule& s, std::size_t epoch) {
  if (epoch >= s.total_epochs) {
    throw ParameterError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                         std::to_string(s.total_epochs) + ")");
  }
  if (epoch < s.warmup_epochs) {
    const double t = static_cast<double>(epoch) / static_cast<double>(s.warmup_epochs);
    return s.warmup_start_lr + (s.base_lr - s.warmup_start_lr) * t;
  }
  const auto passed = std::count_if(s.milestones.begin(), s.milestones.end(),
                                    [&](std::size_t m) { return m <= epoch; });
  return s.base_lr * std::pow(s.gamma, static_cast<double>(passed));
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::kAdam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "sgd") return OptimizerKind::kSgd;
  throw ParameterError("unknown optimizer '" + s + "' (expected adam|sgd)");
}

namespace {

void prepare_state(std::span<const ParamSlot> params, std::span<const Mat> grads,
                   OptimState& state, bool need_second) {
  if (params.size() != grads.size())
    throw ShapeError("optimizer: parameter and gradient counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].value->same_shape(grads[i])) {
      throw ShapeError("optimizer: gradient for '" + params[i].name + "' is " +
                       grads[i].shape_str() + ", parameter is " +
                       params[i].value->shape_str());
    }
  }
  if (state.first.empty()) {
    for (const auto& p : params) {
      state.first.emplace_back(p.value->rows(), p.value->cols());
      if (need_second) state.second.emplace_back(p.value->rows(), p.value->cols());
    }
  }
  if (state.first.size() != params.size() ||
      (need_second && state.second.size() != params.size()))
    throw ShapeError("optimizer: state does not match parameter list");
}

double decayed_grad(const ParamSlot& p, const Mat& g, std::size_t k, double wd) {
  return p.weight_decay ? g[k] + wd * (*p.value)[k] : g[k];
}

}  // namespace

void adam_step(std::span<const ParamSlot> params, std::span<const Mat> grads,
               OptimState& state, const OptimizerConfig& cfg, double lr) {
  prepare_state(params, grads, state, true);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat& w = *params[i].value;
    Mat& m = state.first[i];
    Mat& v = state.second[i];
    if (!m.same_shape(w) || !v.same_shape(w))
      throw ShapeError("adam: moment shape mismatch for '" + params[i].name + "'");
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double g = decayed_grad(params[i], grads[i], k, cfg.weight_decay);
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      w[k] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void sgd_momentum_step(std::span<const ParamSlot> params, std::span<const Mat> grads,
                       OptimState& state, const OptimizerConfig& cfg, double lr) {
  prepare_state(params, grads, state, false);
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat& w = *params[i].value;
    Mat& vel = state.first[i];
    if (!vel.same_shape(w))
      throw ShapeError("sgd: velocity shape mismatch for '" + params[i].name + "'");
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double g = decayed_grad(params[i], grads[i], k, cfg.weight_decay);
      vel[k] = cfg.momentum * vel[k] + g;
      w[k] -= lr * vel[k];
    }
  }
}

LossConfig LossSettings::for_variant(Variant v) const {
  LossConfig c;
  c.ce.label_smoothing = label_smoothing;
  c.triplet.soft_margin = soft_margin;
  c.triplet.margin = v == Variant::kStrong ? margin_strong : margin_stronger;
  c.triplet.metric = v == Variant::kStrong ? strong_metric : stronger_metric;
  c.ce_weight = ce_weight;
  c.triplet_weight = triplet_weight;
  return c;
}

void validate(const TrainConfig& cfg) {
  if (cfg.P < 2 || cfg.K < 2) throw ParameterError("train: P and K must be >= 2");
  validate(cfg.schedule);
  if (cfg.feature_dim == 0) throw ParameterError("train: feature_dim must be > 0");
  if (!(cfg.loss.margin_strong >= 0.0 && cfg.loss.margin_stronger >= 0.0))
    throw ParameterError("train: margins must be >= 0");
  if (!(cfg.loss.label_smoothing >= 0.0 && cfg.loss.label_smoothing < 1.0))
    throw ParameterError("train: label_smoothing must be in [0, 1)");
  if (!(cfg.optimizer.weight_decay >= 0.0))
    throw ParameterError("train: weight_decay must be >= 0");
  if (!(cfg.augment.flip_p >= 0.0 && cfg.augment.flip_p <= 1.0))
    throw ParameterError("train: flip_p must be in [0, 1]");
  validate(cfg.augment.erasing);
  if (cfg.validation.max_rank == 0) throw ParameterError("train: max_rank must be >= 1");
}

PipelineParams init_params_for(const TrainConfig& cfg, const Dataset& ds) {
  ModelShape shape;
  shape.input_dim = ds.input_dim();
  shape.hidden = cfg.hidden;
  shape.feature_dim = cfg.feature_dim;
  shape.num_classes = ds.num_train_ids();
  shape.bn_momentum = cfg.bn_momentum;
  shape.bn_eps = cfg.bn_eps;
  Rng root(cfg.seed);
  Rng init = root.split();
  return init_pipeline(shape, init);
}

EvalReport evaluate_params(const PipelineParams& params, const Dataset& ds,
                           EvalMetric metric, std::size_t max_rank) {
  const SplitView q = split_view(ds, Split::kQuery);
  const SplitView g = split_view(ds, Split::kGallery);
  if (q.pids.empty() || g.pids.empty())
    throw DatasetError("evaluation needs non-empty query and gallery splits");
  const Mat fq = inference_feature(q.features, params);
  const Mat fg = inference_feature(g.features, params);
  return evaluate_market(compute_dist_matrix(fq, fg, metric), q.pids, q.camids, g.pids,
                         g.camids, max_rank);
}

std::optional<std::size_t> epochs_to_reach(const std::vector<EpochRecord>& history,
                                           double threshold) {
  for (const auto& r : history)
    if (r.mAP && *r.mAP >= threshold) return r.epoch + 1;
  return std::nullopt;
}

namespace {

Mat build_batch(const Dataset& ds, const SplitView& train,
                std::span<const std::size_t> rows, const AugmentConfig& aug, Rng& rng) {
  Mat x(rows.size(), train.features.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Item& it = ds.items[train.item_index[rows[r]]];
    if (const auto* img = std::get_if<Image>(&it.payload)) {
      Image a = horizontal_flip(*img, aug.flip_p, rng);
      a = random_erasing(a, aug.erasing, rng);
      std::copy(a.data.begin(), a.data.end(), x.row(r).begin());
    } else {
      auto src = train.features.row(rows[r]);
      std::copy(src.begin(), src.end(), x.row(r).begin());
    }
  }
  return x;
}

}  // namespace

TrainResult train_run(const TrainConfig& cfg, const Dataset& ds) {
  validate(cfg);
  TrainResult result;
  result.params = init_params_for(cfg, ds);
  if (cfg.schedule.total_epochs == 0) return result;

  const SplitView train = train_view(ds);
  if (train.pids.empty()) throw DatasetError("train split is empty");
  const bool can_validate = !ds.indices(Split::kQuery).empty() &&
                            !ds.indices(Split::kGallery).empty();
  AugmentConfig aug = cfg.augment;
  if (aug.erasing.fill == EraseFill::kMean) aug.erasing.channel_mean = channel_mean(ds);

  Rng root(cfg.seed);
  root.split();  // parameter stream, see init_params_for
  Rng sampler = root.split();
  Rng augment_rng = root.split();

  const LossConfig loss_cfg = cfg.loss.for_variant(cfg.variant);
  const std::size_t iters =
      cfg.iterations_per_epoch > 0
          ? cfg.iterations_per_epoch
          : std::max<std::size_t>(1, train.pids.size() / (cfg.P * cfg.K));
  auto slots = parameter_slots(result.params);
  OptimState state;

  for (std::size_t epoch = 0; epoch < cfg.schedule.total_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_at(cfg.schedule, epoch);
    for (std::size_t it = 0; it < iters; ++it) {
      const auto rows = pk_sample(train.pids, cfg.P, cfg.K, sampler);
      const Mat x = build_batch(ds, train, rows, aug, augment_rng);
      std::vector<int> labels;
      labels.reserve(rows.size());
      for (std::size_t r : rows) labels.push_back(train.pids[r]);
      auto fwd = forward_loss(x, labels, result.params, cfg.variant, loss_cfg);
      const ParamGrads grads = backward(fwd.cache, result.params);
      if (cfg.optimizer.kind == OptimizerKind::kAdam) {
        adam_step(slots, grads.blocks, state, cfg.optimizer, rec.lr);
      } else {
        sgd_momentum_step(slots, grads.blocks, state, cfg.optimizer, rec.lr);
      }
      rec.ce_loss += fwd.ce_loss;
      rec.triplet_loss += fwd.triplet_loss;
      rec.total_loss += fwd.total_loss;
    }
    const double inv = 1.0 / static_cast<double>(iters);
    rec.ce_loss *= inv;
    rec.triplet_loss *= inv;
    rec.total_loss *= inv;
    const bool last = epoch + 1 == cfg.schedule.total_epochs;
    const bool due = cfg.validation.every > 0 && (epoch + 1) % cfg.validation.every == 0;
    if (can_validate && (due || (last && cfg.validation.every > 0))) {
      const EvalReport rep = evaluate_params(result.params, ds, cfg.validation.metric,
                                             cfg.validation.max_rank);
      rec.mAP = rep.mAP;
      rec.rank1 = rep.rank(1);
    }
    result.history.push_back(rec);
  }
  return result;
}

}  // namespace reid
