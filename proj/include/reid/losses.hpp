#ifndef REID_LOSSES_HPP_
#define REID_LOSSES_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "reid/mat.hpp"

namespace reid {

using Labels = std::span<const int>;

struct CeConfig {
  double label_smoothing = 0.0;
};

struct CeResult {
  double loss = 0.0;
  Mat dlogits;
};

// Mean softmax cross-entropy against (optionally smoothed) one-hot targets.
CeResult softmax_cross_entropy(const Mat& logits, Labels labels,
                               const CeConfig& cfg = {});

enum class TripletMetric { kEuclidean, kSqEuclidean, kCosineDistance };

std::string to_string(TripletMetric m);
TripletMetric triplet_metric_from_string(const std::string& s);

struct TripletConfig {
  double margin = 0.3;
  TripletMetric metric = TripletMetric::kEuclidean;
  bool soft_margin = false;
};

struct TripletIndices {
  std::vector<std::size_t> positive;  // hardest positive per anchor
  std::vector<std::size_t> negative;  // hardest negative per anchor
};

// Farthest same-label and nearest different-label sample per anchor. Ties
// go to the lowest index.
TripletIndices batch_hard_mine(const Mat& dist, Labels labels);

// Pairwise distance matrix under a triplet metric.
Mat triplet_distance_matrix(const Mat& features, TripletMetric metric);

struct TripletResult {
  double loss = 0.0;
  Mat dfeatures;
  TripletIndices indices;
  std::size_t active_anchors = 0;
  std::vector<bool> active;  // per anchor: term contributes a gradient
};

// Batch-hard triplet loss averaged over anchors. The gradient treats the
// mined indices as constants.
TripletResult batch_hard_triplet_loss(const Mat& features, Labels labels,
                                      const TripletConfig& cfg);

}  // namespace reid

#endif  // REID_LOSSES_HPP_
