#include "reid/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reid/errors.hpp"
#include "reid/numerics.hpp"

namespace reid {

namespace {

// Stable ascending order of one distance row.
std::vector<std::size_t> argsort_row(std::span<const double> row) {
  std::vector<std::size_t> order(row.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return row[a] < row[b]; });
  return order;
}

}  // namespace

std::string to_string(EvalMetric m) {
  return m == EvalMetric::kCosine ? "cosine" : "euclidean";
}

EvalMetric eval_metric_from_string(const std::string& s) {
  if (s == "cosine") return EvalMetric::kCosine;
  if (s == "euclidean") return EvalMetric::kEuclidean;
  throw ParameterError("unknown metric '" + s + "' (expected cosine|euclidean)");
}

Mat compute_dist_matrix(const Mat& q, const Mat& g, EvalMetric metric) {
  if (q.cols() != g.cols()) {
    throw ShapeError("compute_dist_matrix: feature dims differ (" + q.shape_str() +
                     " vs " + g.shape_str() + ")");
  }
  if (metric == EvalMetric::kCosine) {
    Mat d = pairwise_cosine_sim(q, g);
    for (double& v : d.values()) v = 1.0 - v;
    return d;
  }
  Mat d = pairwise_sq_euclidean(q, g);
  for (double& v : d.values()) v = std::sqrt(v);
  return d;
}

double EvalReport::rank(std::size_t k) const {
  if (k == 0 || k > cmc.size()) {
    throw ParameterError("rank-" + std::to_string(k) + " outside the evaluated CMC range");
  }
  return cmc[k - 1];
}

EvalReport evaluate_market(const Mat& dist, std::span<const int> q_pids,
                           std::span<const int> q_camids,
                           std::span<const int> g_pids,
                           std::span<const int> g_camids, std::size_t max_rank,
                           const ProtocolOptions& opts) {
  const std::size_t nq = dist.rows(), ng = dist.cols();
  if (q_pids.size() != nq || q_camids.size() != nq || g_pids.size() != ng ||
      g_camids.size() != ng) {
    throw ShapeError("evaluate_market: id arrays do not match " + dist.shape_str());
  }
  if (max_rank == 0) throw ParameterError("evaluate_market: max_rank must be >= 1");
  EvalReport report;
  report.cmc.assign(max_rank, 0.0);
  for (std::size_t q = 0; q < nq; ++q) {
    const auto order = argsort_row(dist.row(q));
    std::size_t kept = 0, hits = 0;
    std::size_t first_hit = 0;
    double precision_sum = 0.0;
    for (std::size_t idx : order) {
      const bool same_pid = g_pids[idx] == q_pids[q];
      if (opts.filter_same_camera && same_pid && g_camids[idx] == q_camids[q]) continue;
      ++kept;
      if (same_pid) {
        if (hits == 0) first_hit = kept;
        ++hits;
        precision_sum += static_cast<double>(hits) / static_cast<double>(kept);
      }
    }
    if (hits == 0) continue;
    report.valid_queries.push_back(q);
    report.per_query_ap.push_back(precision_sum / static_cast<double>(hits));
    for (std::size_t k = first_hit; k <= max_rank; ++k) report.cmc[k - 1] += 1.0;
  }
  report.num_valid_queries = report.valid_queries.size();
  if (report.num_valid_queries == 0)
    throw EvaluationError("evaluate_market: no query has a valid gallery match");
  const double nv = static_cast<double>(report.num_valid_queries);
  for (double& c : report.cmc) c /= nv;
  report.mAP = std::accumulate(report.per_query_ap.begin(), report.per_query_ap.end(), 0.0) / nv;
  return report;
}

double average_precision_oracle(const std::vector<bool>& ranked_relevance) {
  double total = 0.0;
  for (bool r : ranked_relevance) total += r ? 1.0 : 0.0;
  if (total == 0.0) throw EvaluationError("average precision undefined without matches");
  double acc = 0.0;
  for (std::size_t i = 0; i < ranked_relevance.size(); ++i) {
    if (!ranked_relevance[i]) continue;
    double up_to = 0.0;
    for (std::size_t j = 0; j <= i; ++j) up_to += ranked_relevance[j] ? 1.0 : 0.0;
    acc += up_to / static_cast<double>(i + 1);
  }
  return acc / total;
}

namespace {

// Entries of initial_rank[i][0..k] whose own top-k contains i.
std::vector<std::size_t> k_reciprocal_neighbors(
    const std::vector<std::vector<std::size_t>>& rank, std::size_t i, std::size_t k) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r <= k; ++r) {
    const std::size_t cand = rank[i][r];
    const auto& back = rank[cand];
    if (std::find(back.begin(), back.begin() + static_cast<long>(k) + 1, i) !=
        back.begin() + static_cast<long>(k) + 1) {
      out.push_back(cand);
    }
  }
  return out;
}

}  // namespace

Mat k_reciprocal_rerank(const Mat& q, const Mat& g, const RerankConfig& cfg) {
  if (q.cols() != g.cols())
    throw ShapeError("k_reciprocal_rerank: feature dims differ");
  if (!(cfg.k2 >= 1 && cfg.k1 > cfg.k2))
    throw ParameterError("k_reciprocal_rerank: need k1 > k2 >= 1");
  if (!(cfg.lambda >= 0.0 && cfg.lambda <= 1.0))
    throw ParameterError("k_reciprocal_rerank: lambda must be in [0, 1]");
  const std::size_t nq = q.rows(), ng = g.rows(), all = nq + ng;
  if (cfg.k1 >= all) {
    throw ParameterError("k_reciprocal_rerank: k1 = " + std::to_string(cfg.k1) +
                         " must be below the joint set size " + std::to_string(all));
  }

  Mat joint(all, q.cols());
  for (std::size_t i = 0; i < nq; ++i)
    std::copy(q.row(i).begin(), q.row(i).end(), joint.row(i).begin());
  for (std::size_t i = 0; i < ng; ++i)
    std::copy(g.row(i).begin(), g.row(i).end(), joint.row(nq + i).begin());
  Mat original = pairwise_sq_euclidean(joint, joint);
  for (double& v : original.values()) v = std::sqrt(v);

  std::vector<std::vector<std::size_t>> rank(all);
  for (std::size_t i = 0; i < all; ++i) rank[i] = argsort_row(original.row(i));

  const std::size_t half_k1 =
      static_cast<std::size_t>(std::nearbyint(static_cast<double>(cfg.k1) / 2.0));
  Mat v(all, all);
  for (std::size_t i = 0; i < all; ++i) {
    const auto recip = k_reciprocal_neighbors(rank, i, cfg.k1);
    std::vector<std::size_t> expansion = recip;
    for (std::size_t cand : recip) {
      const auto cand_recip = k_reciprocal_neighbors(rank, cand, half_k1);
      std::size_t overlap = 0;
      for (std::size_t c : cand_recip)
        if (std::find(recip.begin(), recip.end(), c) != recip.end()) ++overlap;
      if (static_cast<double>(overlap) >
          2.0 / 3.0 * static_cast<double>(cand_recip.size())) {
        expansion.insert(expansion.end(), cand_recip.begin(), cand_recip.end());
      }
    }
    std::sort(expansion.begin(), expansion.end());
    expansion.erase(std::unique(expansion.begin(), expansion.end()), expansion.end());
    double wsum = 0.0;
    for (std::size_t j : expansion) wsum += std::exp(-original(i, j));
    for (std::size_t j : expansion) v(i, j) = std::exp(-original(i, j)) / wsum;
  }

  if (cfg.k2 != 1) {
    Mat vqe(all, all);
    for (std::size_t i = 0; i < all; ++i) {
      auto out = vqe.row(i);
      for (std::size_t r = 0; r < cfg.k2; ++r) {
        auto src = v.row(rank[i][r]);
        for (std::size_t j = 0; j < all; ++j) out[j] += src[j];
      }
      for (double& x : out) x /= static_cast<double>(cfg.k2);
    }
    v = std::move(vqe);
  }

  // Inverted index: which rows have mass on each column.
  std::vector<std::vector<std::size_t>> inv(all);
  for (std::size_t i = 0; i < all; ++i)
    for (std::size_t j = 0; j < all; ++j)
      if (v(i, j) != 0.0) inv[j].push_back(i);

  Mat out(nq, ng);
  std::vector<double> temp_min(all);
  for (std::size_t i = 0; i < nq; ++i) {
    std::fill(temp_min.begin(), temp_min.end(), 0.0);
    for (std::size_t j = 0; j < all; ++j) {
      const double vij = v(i, j);
      if (vij == 0.0) continue;
      for (std::size_t other : inv[j]) temp_min[other] += std::min(vij, v(other, j));
    }
    for (std::size_t gi = 0; gi < ng; ++gi) {
      const double tm = temp_min[nq + gi];
      const double jaccard = 1.0 - tm / (2.0 - tm);
      const double orig = original(i, nq + gi);
      out(i, gi) = cfg.lambda == 1.0
                       ? orig
                       : cfg.lambda * orig + (1.0 - cfg.lambda) * jaccard;
    }
  }
  return out;
}

Mat query_expansion(const Mat& q, const Mat& g, const QueryExpansionConfig& cfg) {
  if (cfg.k == 0 || cfg.k > g.rows()) {
    throw ParameterError("query_expansion: k = " + std::to_string(cfg.k) +
                         " must be in [1, " + std::to_string(g.rows()) + "]");
  }
  const Mat sim = pairwise_cosine_sim(q, g);
  Mat out(q.rows(), q.cols());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    auto srow = sim.row(i);
    std::vector<std::size_t> order(g.rows());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return srow[a] > srow[b]; });
    auto dst = out.row(i);
    double wsum = 0.0;
    for (std::size_t r = 0; r < cfg.k; ++r) {
      const std::size_t j = order[r];
      const double w = std::pow(std::max(srow[j], 0.0), cfg.alpha);
      wsum += w;
      for (std::size_t c = 0; c < q.cols(); ++c) dst[c] += w * g(j, c);
    }
    const double n = norm(dst);
    if (wsum == 0.0 || n < 1e-12) {
      // No positively correlated neighbor: keep the query direction.
      std::copy(q.row(i).begin(), q.row(i).end(), dst.begin());
    }
    const double m = norm(dst);
    for (double& x : dst) x /= m;
  }
  return out;
}

}  // namespace reid
