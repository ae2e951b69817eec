#ifndef REID_EVAL_HPP_
#define REID_EVAL_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "reid/mat.hpp"

namespace reid {

enum class EvalMetric { kCosine, kEuclidean };

std::string to_string(EvalMetric m);
EvalMetric eval_metric_from_string(const std::string& s);

// Cosine returns 1 - cosine similarity; Euclidean the rooted distance.
Mat compute_dist_matrix(const Mat& q, const Mat& g, EvalMetric metric);

struct EvalReport {
  double mAP = 0.0;
  std::vector<double> cmc;               // cmc[k] = rank-(k+1) accuracy
  std::vector<double> per_query_ap;      // valid queries only
  std::vector<std::size_t> valid_queries;
  std::size_t num_valid_queries = 0;

  // Rank-k accuracy; k in [1, cmc.size()].
  double rank(std::size_t k) const;
};

struct ProtocolOptions {
  // Drop gallery items sharing both pid and camid with the query.
  bool filter_same_camera = true;
};

EvalReport evaluate_market(const Mat& dist, std::span<const int> q_pids,
                           std::span<const int> q_camids,
                           std::span<const int> g_pids,
                           std::span<const int> g_camids, std::size_t max_rank,
                           const ProtocolOptions& opts = {});

// Literal AP over a ranked relevance list; used to cross-check
// evaluate_market.
double average_precision_oracle(const std::vector<bool>& ranked_relevance);

struct RerankConfig {
  std::size_t k1 = 20;
  std::size_t k2 = 6;
  double lambda = 0.3;
};

// k-reciprocal re-ranking over the joint query+gallery set. The original
// term is the rooted Euclidean distance between the given features.
Mat k_reciprocal_rerank(const Mat& q, const Mat& g, const RerankConfig& cfg = {});

struct QueryExpansionConfig {
  std::size_t k = 5;
  double alpha = 3.0;
};

// Replaces each query with sum_i max(s_i, 0)^alpha g_i over its top-k
// gallery neighbors by cosine similarity, L2-normalized.
Mat query_expansion(const Mat& q, const Mat& g, const QueryExpansionConfig& cfg = {});

}  // namespace reid

#endif  // REID_EVAL_HPP_
