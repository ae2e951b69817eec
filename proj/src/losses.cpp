#include "reid/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "reid/errors.hpp"
#include "reid/numerics.hpp"

namespace reid {

namespace {

constexpr double kEuclidFloor = 1e-12;
constexpr double kNormFloor = 1e-12;

void check_labels(const Mat& m, Labels labels, const char* op) {
  if (labels.size() != m.rows()) {
    throw ShapeError(std::string(op) + ": " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(m.rows()) + " rows");
  }
}

void check_composition(Labels labels) {
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  if (counts.size() < 2) {
    throw BatchCompositionError("batch needs at least 2 distinct identities");
  }
  for (const auto& [label, count] : counts) {
    if (count < 2) {
      throw BatchCompositionError("identity " + std::to_string(label) +
                                  " has no positive in the batch");
    }
  }
}

double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Adds scale * d dist(u, v) / du to gu and scale * d dist(u, v) / dv to gv.
void accumulate_distance_grad(TripletMetric metric, std::span<const double> u,
                              std::span<const double> v, double scale,
                              std::span<double> gu, std::span<double> gv) {
  const std::size_t d = u.size();
  switch (metric) {
    case TripletMetric::kSqEuclidean:
      for (std::size_t k = 0; k < d; ++k) {
        const double g = 2.0 * (u[k] - v[k]) * scale;
        gu[k] += g;
        gv[k] -= g;
      }
      break;
    case TripletMetric::kEuclidean: {
      double sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) sq += (u[k] - v[k]) * (u[k] - v[k]);
      if (sq <= kEuclidFloor) break;  // floored branch is constant
      const double inv = scale / std::sqrt(sq);
      for (std::size_t k = 0; k < d; ++k) {
        const double g = (u[k] - v[k]) * inv;
        gu[k] += g;
        gv[k] -= g;
      }
      break;
    }
    case TripletMetric::kCosineDistance: {
      const double nu = norm(u), nv = norm(v);
      const double c = dot(u, v) / (nu * nv);
      // d(1 - cos)/du = -(v / (|u||v|) - cos u / |u|^2)
      for (std::size_t k = 0; k < d; ++k) {
        gu[k] -= scale * (v[k] / (nu * nv) - c * u[k] / (nu * nu));
        gv[k] -= scale * (u[k] / (nu * nv) - c * v[k] / (nv * nv));
      }
      break;
    }
  }
}

}  // namespace

std::string to_string(TripletMetric m) {
  switch (m) {
    case TripletMetric::kEuclidean: return "euclidean";
    case TripletMetric::kSqEuclidean: return "sq_euclidean";
    case TripletMetric::kCosineDistance: return "cosine_distance";
  }
  return "?";
}

TripletMetric triplet_metric_from_string(const std::string& s) {
  if (s == "euclidean") return TripletMetric::kEuclidean;
  if (s == "sq_euclidean") return TripletMetric::kSqEuclidean;
  if (s == "cosine_distance" || s == "cosine") return TripletMetric::kCosineDistance;
  throw ParameterError("unknown triplet metric '" + s + "'");
}

CeResult softmax_cross_entropy(const Mat& logits, Labels labels, const CeConfig& cfg) {
  check_labels(logits, labels, "softmax_cross_entropy");
  const std::size_t n = logits.rows(), classes = logits.cols();
  if (n == 0) throw ShapeError("softmax_cross_entropy: empty batch");
  if (!(cfg.label_smoothing >= 0.0 && cfg.label_smoothing < 1.0))
    throw ParameterError("label_smoothing must be in [0, 1)");
  const double eps = cfg.label_smoothing;
  const double off = eps / static_cast<double>(classes);
  CeResult r;
  r.dlogits = Mat(n, classes);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw LabelError("label " + std::to_string(label) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
    auto z = logits.row(i);
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    const double log_sum = std::log(sum);
    for (std::size_t c = 0; c < classes; ++c) {
      const double log_p = z[c] - zmax - log_sum;
      const double q = off + (static_cast<std::size_t>(label) == c ? 1.0 - eps : 0.0);
      if (q > 0.0) r.loss -= q * log_p;
      r.dlogits(i, c) = (std::exp(log_p) - q) / static_cast<double>(n);
    }
  }
  r.loss /= static_cast<double>(n);
  return r;
}

TripletIndices batch_hard_mine(const Mat& dist, Labels labels) {
  if (dist.rows() != dist.cols())
    throw ShapeError("batch_hard_mine: distance matrix " + dist.shape_str());
  check_labels(dist, labels, "batch_hard_mine");
  check_composition(labels);
  const std::size_t n = dist.rows();
  TripletIndices idx;
  idx.positive.resize(n);
  idx.negative.resize(n);
  for (std::size_t a = 0; a < n; ++a) {
    double best_pos = -std::numeric_limits<double>::infinity();
    double best_neg = std::numeric_limits<double>::infinity();
    std::size_t p = n, q = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      const double d = dist(a, j);
      if (labels[j] == labels[a]) {
        if (d > best_pos) { best_pos = d; p = j; }
      } else if (d < best_neg) {
        best_neg = d;
        q = j;
      }
    }
    idx.positive[a] = p;
    idx.negative[a] = q;
  }
  return idx;
}

Mat triplet_distance_matrix(const Mat& features, TripletMetric metric) {
  switch (metric) {
    case TripletMetric::kSqEuclidean:
      return pairwise_sq_euclidean(features, features);
    case TripletMetric::kEuclidean: {
      Mat d = pairwise_sq_euclidean(features, features);
      for (double& v : d.values()) v = std::sqrt(std::max(v, kEuclidFloor));
      return d;
    }
    case TripletMetric::kCosineDistance: {
      for (std::size_t i = 0; i < features.rows(); ++i) {
        if (norm(features.row(i)) < kNormFloor) {
          throw DegenerateInputError("cosine triplet metric: row " +
                                     std::to_string(i) + " has zero norm");
        }
      }
      Mat d = pairwise_cosine_sim(features, features);
      for (double& v : d.values()) v = 1.0 - v;
      return d;
    }
  }
  throw ParameterError("unknown triplet metric");
}

TripletResult batch_hard_triplet_loss(const Mat& features, Labels labels,
                                      const TripletConfig& cfg) {
  check_labels(features, labels, "batch_hard_triplet_loss");
  if (!(cfg.margin >= 0.0)) throw ParameterError("triplet margin must be >= 0");
  const Mat dist = triplet_distance_matrix(features, cfg.metric);
  TripletResult r;
  r.indices = batch_hard_mine(dist, labels);
  const std::size_t n = features.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  r.dfeatures = Mat(n, features.cols());
  r.active.assign(n, false);
  for (std::size_t a = 0; a < n; ++a) {
    const std::size_t p = r.indices.positive[a], q = r.indices.negative[a];
    const double z = dist(a, p) - dist(a, q);
    double coeff;
    if (cfg.soft_margin) {
      r.loss += softplus(z);
      coeff = sigmoid(z);
    } else {
      const double h = z + cfg.margin;
      if (!(h > 0.0)) continue;
      r.loss += h;
      coeff = 1.0;
    }
    ++r.active_anchors;
    r.active[a] = true;
    coeff *= inv_n;
    accumulate_distance_grad(cfg.metric, features.row(a), features.row(p), coeff,
                             r.dfeatures.row(a), r.dfeatures.row(p));
    accumulate_distance_grad(cfg.metric, features.row(a), features.row(q), -coeff,
                             r.dfeatures.row(a), r.dfeatures.row(q));
  }
  r.loss *= inv_n;
  return r;
}

}  // namespace reid
