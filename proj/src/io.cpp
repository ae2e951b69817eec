#include "reid/io.hpp"

#include <cstdio>
#include <fstream>
#include <map>

#include "reid/errors.hpp"

namespace reid {

namespace {

Json block_json(const std::string& name, const Mat& m) {
  return Json{{"name", name}, {"rows", m.rows()}, {"cols", m.cols()},
              {"data", m.storage()}};
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  PipelineParams params = ckpt.params;
  Json blocks = Json::array();
  for (const auto& slot : parameter_slots(params)) blocks.push_back(block_json(slot.name, *slot.value));
  blocks.push_back(block_json("bn.running_mean", params.head.bn.running_mean));
  blocks.push_back(block_json("bn.running_var", params.head.bn.running_var));
  Json j{{"format", "reid-checkpoint"},
         {"version", kCheckpointVersion},
         {"variant", to_string(ckpt.variant)},
         {"config", ckpt.config},
         {"bn",
          {{"momentum", params.head.bn.momentum},
           {"eps", params.head.bn.eps},
           {"batches_tracked", params.head.bn.batches_tracked}}},
         {"blocks", blocks}};
  write_json_file(path, j);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const Json j = read_json_file(path);
  const std::string where = "checkpoint '" + path.string() + "'";
  try {
    if (j.at("format") != "reid-checkpoint") throw ParseError(where + ": wrong format tag");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw ParseError(where + ": unsupported version " + j.at("version").dump());
    std::map<std::string, Mat> blocks;
    for (const auto& b : j.at("blocks")) {
      blocks[b.at("name").get<std::string>()] =
          Mat(b.at("rows").get<std::size_t>(), b.at("cols").get<std::size_t>(),
              b.at("data").get<std::vector<double>>());
    }
    auto take = [&](const std::string& name) {
      auto it = blocks.find(name);
      if (it == blocks.end()) throw ParseError(where + ": missing block '" + name + "'");
      Mat m = std::move(it->second);
      blocks.erase(it);
      return m;
    };
    Checkpoint c;
    c.variant = variant_from_string(j.at("variant").get<std::string>());
    c.config = j.at("config");
    for (std::size_t i = 0; blocks.count("backbone." + std::to_string(i) + ".weight"); ++i) {
      const std::string prefix = "backbone." + std::to_string(i);
      LinearParams l;
      l.weight = take(prefix + ".weight");
      if (blocks.count(prefix + ".bias")) l.bias = take(prefix + ".bias");
      c.params.backbone.layers.push_back(std::move(l));
    }
    BnParams& bn = c.params.head.bn;
    bn.gamma = take("bn.gamma");
    bn.beta = take("bn.beta");
    bn.running_mean = take("bn.running_mean");
    bn.running_var = take("bn.running_var");
    bn.momentum = j.at("bn").at("momentum").get<double>();
    bn.eps = j.at("bn").at("eps").get<double>();
    bn.batches_tracked = j.at("bn").at("batches_tracked").get<std::uint64_t>();
    c.params.head.classifier.weight = take("classifier.weight");
    if (!blocks.empty()) throw ParseError(where + ": unexpected block '" + blocks.begin()->first + "'");
    validate(c.params);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + ": " + e.what());
  } catch (const ShapeError& e) {
    throw ParseError(where + ": " + e.what());
  }
}

void write_history_csv(const std::filesystem::path& path,
                       const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "epoch,lr,ce_loss,triplet_loss,total_loss,mAP,rank1\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << fmt(r.lr) << ',' << fmt(r.ce_loss) << ','
        << fmt(r.triplet_loss) << ',' << fmt(r.total_loss) << ','
        << (r.mAP ? fmt(*r.mAP) : "") << ',' << (r.rank1 ? fmt(*r.rank1) : "") << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Json to_json(const EvalReport& r) {
  Json j{{"mAP", r.mAP}};
  for (std::size_t k : {1, 5, 10})
    if (k <= r.cmc.size()) j["rank" + std::to_string(k)] = r.rank(k);
  j.update(Json{{"cmc", r.cmc},
         {"num_valid_queries", r.num_valid_queries},
         {"valid_queries", r.valid_queries},
         {"per_query_ap", r.per_query_ap}});
  return j;
}

}  // namespace reid
