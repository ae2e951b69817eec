#ifndef REID_DIAGNOSTICS_HPP_
#define REID_DIAGNOSTICS_HPP_

#include <optional>

#include "reid/losses.hpp"
#include "reid/pipeline.hpp"

namespace reid {

struct ConsistencyReport {
  double positive_agreement = 0.0;
  double negative_agreement = 0.0;
  std::size_t n_anchors = 0;
};

// Fraction of anchors whose batch-hard positive / negative is the same
// under squared Euclidean and cosine distance.
ConsistencyReport hardness_consistency(const Mat& features, Labels labels);

struct GradDirectionStats {
  // Mean over samples of cos(CE-branch grad, triplet-branch grad) at f_t,
  // skipping samples where either branch is zero. Absent when no sample
  // has both.
  std::optional<double> mean_branch_cosine;
  // Stronger only: max_i |<g_i, f_i>| / (|g_i| |f_i|) for the triplet-branch
  // gradient g_i at f_i.
  std::optional<double> radial_leakage;
  std::size_t samples_compared = 0;
};

// Splits the f_t gradient into its CE and triplet parts with two restricted
// backward passes over one forward cache. Parameters are not modified.
GradDirectionStats grad_direction_report(const Mat& x, Labels labels,
                                         const PipelineParams& params, Variant variant,
                                         const LossConfig& cfg);

}  // namespace reid

#endif  // REID_DIAGNOSTICS_HPP_
