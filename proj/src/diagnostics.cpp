#include "reid/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "reid/numerics.hpp"

namespace reid {

ConsistencyReport hardness_consistency(const Mat& features, Labels labels) {
  const TripletIndices euclid =
      batch_hard_mine(triplet_distance_matrix(features, TripletMetric::kSqEuclidean), labels);
  const TripletIndices cosine = batch_hard_mine(
      triplet_distance_matrix(features, TripletMetric::kCosineDistance), labels);
  ConsistencyReport r;
  r.n_anchors = features.rows();
  std::size_t pos = 0, neg = 0;
  for (std::size_t a = 0; a < r.n_anchors; ++a) {
    pos += euclid.positive[a] == cosine.positive[a];
    neg += euclid.negative[a] == cosine.negative[a];
  }
  r.positive_agreement = static_cast<double>(pos) / static_cast<double>(r.n_anchors);
  r.negative_agreement = static_cast<double>(neg) / static_cast<double>(r.n_anchors);
  return r;
}

GradDirectionStats grad_direction_report(const Mat& x, Labels labels,
                                         const PipelineParams& params, Variant variant,
                                         const LossConfig& cfg) {
  const ForwardResult fwd = forward_loss(x, labels, params, variant, cfg);
  const ParamGrads ce = backward(fwd.cache, params, {.ce = true, .triplet = false});
  const ParamGrads tri = backward(fwd.cache, params, {.ce = false, .triplet = true});

  GradDirectionStats stats;
  double cos_sum = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double nc = norm(ce.d_ft.row(i));
    const double nt = norm(tri.d_ft.row(i));
    if (nc == 0.0 || nt == 0.0) continue;
    cos_sum += dot(ce.d_ft.row(i), tri.d_ft.row(i)) / (nc * nt);
    ++stats.samples_compared;
  }
  if (stats.samples_compared > 0)
    stats.mean_branch_cosine = cos_sum / static_cast<double>(stats.samples_compared);

  if (variant == Variant::kStronger) {
    double worst = 0.0;
    const Mat& fi = fwd.cache.fi;
    for (std::size_t i = 0; i < fi.rows(); ++i) {
      const double ng = norm(tri.triplet_grad_fi.row(i));
      const double nf = norm(fi.row(i));
      if (ng == 0.0 || nf == 0.0) continue;
      worst = std::max(worst, std::abs(dot(tri.triplet_grad_fi.row(i), fi.row(i))) / (ng * nf));
    }
    stats.radial_leakage = worst;
  }
  return stats;
}

}  // namespace reid
