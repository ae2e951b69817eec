#ifndef REID_IO_HPP_
#define REID_IO_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "reid/config.hpp"
#include "reid/eval.hpp"
#include "reid/pipeline.hpp"
#include "reid/training.hpp"

namespace reid {

inline constexpr int kCheckpointVersion = 1;

// Checkpoint layout (JSON):
//   {"format": "reid-checkpoint", "version": 1, "variant": ..., "config": {...},
//    "bn": {"momentum", "eps", "batches_tracked"},
//    "blocks": [{"name", "rows", "cols", "data": [row-major doubles]}, ...]}
// Block names: backbone.<i>.weight, backbone.<i>.bias, bn.gamma, bn.beta,
// bn.running_mean, bn.running_var, classifier.weight. Doubles are written
// with round-trip precision.
struct Checkpoint {
  PipelineParams params;
  Variant variant = Variant::kStronger;
  Json config;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// epoch,lr,ce_loss,triplet_loss,total_loss,mAP,rank1 (mAP/rank1 blank when
// the epoch was not validated).
void write_history_csv(const std::filesystem::path& path,
                       const std::vector<EpochRecord>& history);

Json to_json(const EvalReport& r);

}  // namespace reid

#endif  // REID_IO_HPP_
