#include "reid/config.hpp"

#include <fstream>

#include "reid/errors.hpp"

namespace reid {

namespace {

void reject_unknown(const Json& defaults, const Json& user, const std::string& prefix) {
  if (!user.is_object()) {
    throw UsageError("config" + (prefix.empty() ? "" : " key '" + prefix + "'") +
                     " must be an object");
  }
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!defaults.contains(key)) throw UsageError("unknown config key '" + path + "'");
    if (defaults[key].is_object()) reject_unknown(defaults[key], value, path);
  }
}

Json overlay(const Json& defaults, const Json& user) {
  if (user.is_null()) return defaults;
  reject_unknown(defaults, user, "");
  Json merged = defaults;
  merged.merge_patch(user);
  return merged;
}

template <typename T>
T get(const Json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config key '") + key + "': " + e.what());
  }
}

Json schedule_json(const Schedule& s) {
  return Json{{"base_lr", s.base_lr},
              {"warmup_epochs", s.warmup_epochs},
              {"warmup_start_lr", s.warmup_start_lr},
              {"milestones", s.milestones},
              {"gamma", s.gamma},
              {"total_epochs", s.total_epochs}};
}

}  // namespace

Json to_json(const SynthConfig& c) {
  return Json{{"num_ids", c.num_ids},
              {"samples_per_id", c.samples_per_id},
              {"dim", c.dim},
              {"direction_noise", c.direction_noise},
              {"radius", c.radius},
              {"norm_confound", c.norm_confound},
              {"inter_id_separation", c.inter_id_separation},
              {"cameras", c.cameras},
              {"camera_shift", c.camera_shift},
              {"nuisance_dims", c.nuisance_dims},
              {"nuisance_scale", c.nuisance_scale},
              {"num_train_ids", c.num_train_ids},
              {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const Json& user) {
  const Json j = overlay(to_json(SynthConfig{}), user);
  SynthConfig c;
  c.num_ids = get<std::size_t>(j, "num_ids");
  c.samples_per_id = get<std::size_t>(j, "samples_per_id");
  c.dim = get<std::size_t>(j, "dim");
  c.direction_noise = get<double>(j, "direction_noise");
  c.radius = get<double>(j, "radius");
  c.norm_confound = get<double>(j, "norm_confound");
  c.inter_id_separation = get<double>(j, "inter_id_separation");
  c.cameras = get<std::size_t>(j, "cameras");
  c.camera_shift = get<double>(j, "camera_shift");
  c.nuisance_dims = get<std::size_t>(j, "nuisance_dims");
  c.nuisance_scale = get<double>(j, "nuisance_scale");
  c.num_train_ids = get<std::size_t>(j, "num_train_ids");
  c.seed = get<std::uint64_t>(j, "seed");
  return c;
}

Json to_json(const TrainConfig& c) {
  const auto& e = c.augment.erasing;
  return Json{
      {"variant", to_string(c.variant)},
      {"seed", c.seed},
      {"P", c.P},
      {"K", c.K},
      {"iterations_per_epoch", c.iterations_per_epoch},
      {"model",
       {{"hidden", c.hidden},
        {"feature_dim", c.feature_dim},
        {"bn_momentum", c.bn_momentum},
        {"bn_eps", c.bn_eps}}},
      {"schedule", schedule_json(c.schedule)},
      {"optimizer",
       {{"kind", to_string(c.optimizer.kind)},
        {"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2},
        {"eps", c.optimizer.eps},
        {"momentum", c.optimizer.momentum},
        {"weight_decay", c.optimizer.weight_decay}}},
      {"loss",
       {{"margin_strong", c.loss.margin_strong},
        {"margin_stronger", c.loss.margin_stronger},
        {"strong_metric", to_string(c.loss.strong_metric)},
        {"stronger_metric", to_string(c.loss.stronger_metric)},
        {"soft_margin", c.loss.soft_margin},
        {"label_smoothing", c.loss.label_smoothing},
        {"ce_weight", c.loss.ce_weight},
        {"triplet_weight", c.loss.triplet_weight}}},
      {"augment",
       {{"flip_p", c.augment.flip_p},
        {"erase_p", e.probability},
        {"erase_area", {e.area.first, e.area.second}},
        {"erase_aspect", {e.aspect.first, e.aspect.second}},
        {"erase_fill", e.fill == EraseFill::kMean ? "mean" : "noise"}}},
      {"validation",
       {{"every", c.validation.every},
        {"metric", to_string(c.validation.metric)},
        {"max_rank", c.validation.max_rank}}}};
}

TrainConfig train_config_from_json(const Json& user) {
  const Json j = overlay(to_json(TrainConfig{}), user);
  TrainConfig c;
  try {
    c.variant = variant_from_string(get<std::string>(j, "variant"));
    c.seed = get<std::uint64_t>(j, "seed");
    c.P = get<std::size_t>(j, "P");
    c.K = get<std::size_t>(j, "K");
    c.iterations_per_epoch = get<std::size_t>(j, "iterations_per_epoch");
    const Json& m = j["model"];
    c.hidden = get<std::vector<std::size_t>>(m, "hidden");
    c.feature_dim = get<std::size_t>(m, "feature_dim");
    c.bn_momentum = get<double>(m, "bn_momentum");
    c.bn_eps = get<double>(m, "bn_eps");
    const Json& s = j["schedule"];
    c.schedule.base_lr = get<double>(s, "base_lr");
    c.schedule.warmup_epochs = get<std::size_t>(s, "warmup_epochs");
    c.schedule.warmup_start_lr = get<double>(s, "warmup_start_lr");
    c.schedule.milestones = get<std::vector<std::size_t>>(s, "milestones");
    c.schedule.gamma = get<double>(s, "gamma");
    c.schedule.total_epochs = get<std::size_t>(s, "total_epochs");
    const Json& o = j["optimizer"];
    c.optimizer.kind = optimizer_from_string(get<std::string>(o, "kind"));
    c.optimizer.beta1 = get<double>(o, "beta1");
    c.optimizer.beta2 = get<double>(o, "beta2");
    c.optimizer.eps = get<double>(o, "eps");
    c.optimizer.momentum = get<double>(o, "momentum");
    c.optimizer.weight_decay = get<double>(o, "weight_decay");
    const Json& l = j["loss"];
    c.loss.margin_strong = get<double>(l, "margin_strong");
    c.loss.margin_stronger = get<double>(l, "margin_stronger");
    c.loss.strong_metric = triplet_metric_from_string(get<std::string>(l, "strong_metric"));
    c.loss.stronger_metric =
        triplet_metric_from_string(get<std::string>(l, "stronger_metric"));
    c.loss.soft_margin = get<bool>(l, "soft_margin");
    c.loss.label_smoothing = get<double>(l, "label_smoothing");
    c.loss.ce_weight = get<double>(l, "ce_weight");
    c.loss.triplet_weight = get<double>(l, "triplet_weight");
    const Json& a = j["augment"];
    c.augment.flip_p = get<double>(a, "flip_p");
    c.augment.erasing.probability = get<double>(a, "erase_p");
    const auto area = get<std::vector<double>>(a, "erase_area");
    const auto aspect = get<std::vector<double>>(a, "erase_aspect");
    if (area.size() != 2 || aspect.size() != 2)
      throw UsageError("augment.erase_area and augment.erase_aspect take [lo, hi]");
    c.augment.erasing.area = {area[0], area[1]};
    c.augment.erasing.aspect = {aspect[0], aspect[1]};
    const auto fill = get<std::string>(a, "erase_fill");
    if (fill != "mean" && fill != "noise")
      throw UsageError("augment.erase_fill must be mean|noise");
    c.augment.erasing.fill = fill == "mean" ? EraseFill::kMean : EraseFill::kNoise;
    const Json& v = j["validation"];
    c.validation.every = get<std::size_t>(v, "every");
    c.validation.metric = eval_metric_from_string(get<std::string>(v, "metric"));
    c.validation.max_rank = get<std::size_t>(v, "max_rank");
    validate(c);
  } catch (const ParameterError& e) {
    throw UsageError(e.what());
  }
  return c;
}

Json to_json(const RerankConfig& c) {
  return Json{{"k1", c.k1}, {"k2", c.k2}, {"lambda", c.lambda}};
}

RerankConfig rerank_config_from_json(const Json& user) {
  const Json j = overlay(to_json(RerankConfig{}), user);
  RerankConfig c;
  c.k1 = get<std::size_t>(j, "k1");
  c.k2 = get<std::size_t>(j, "k2");
  c.lambda = get<double>(j, "lambda");
  return c;
}

Json to_json(const QueryExpansionConfig& c) {
  return Json{{"k", c.k}, {"alpha", c.alpha}};
}

QueryExpansionConfig qe_config_from_json(const Json& user) {
  const Json j = overlay(to_json(QueryExpansionConfig{}), user);
  QueryExpansionConfig c;
  c.k = get<std::size_t>(j, "k");
  c.alpha = get<double>(j, "alpha");
  return c;
}

Json overlay_config(const Json& defaults, const Json& user) {
  return overlay(defaults, user);
}

Json config_section(const Json& j) {
  if (j.is_object() && j.contains("artifact") && j.contains("config")) return j["config"];
  return j;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("'" + path.string() + "': " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void apply_override(Json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw UsageError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  std::string pointer;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    pointer += "/" + key.substr(start, dot - start);
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  j[Json::json_pointer(pointer)] = value;
}

void apply_overrides(Json& j, const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) apply_override(j, a);
}

}  // namespace reid
