#ifndef REID_LAYERS_HPP_
#define REID_LAYERS_HPP_

#include <cstdint>
#include <optional>

#include "reid/mat.hpp"

namespace reid {

struct LinearParams {
  Mat weight;                 // out x in
  std::optional<Mat> bias;    // 1 x out
  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
};

struct LinearCache {
  Mat input;
};

struct LinearGrads {
  Mat dx;
  Mat dweight;
  std::optional<Mat> dbias;
};

struct LinearOutput {
  Mat y;
  LinearCache cache;
};

// y = x W^T (+ b).
LinearOutput linear(const Mat& x, const LinearParams& p);
LinearGrads linear_backward(const Mat& dy, const LinearCache& cache,
                            const LinearParams& p);

struct BnParams {
  Mat gamma;
  Mat beta;
  Mat running_mean;
  Mat running_var;
  double momentum = 0.1;
  double eps = 1e-5;
  // Number of training batches folded into the running statistics.
  std::uint64_t batches_tracked = 0;

  static BnParams make(std::size_t dim, double momentum = 0.1, double eps = 1e-5);
  std::size_t dim() const { return gamma.cols(); }
};

struct BnCache {
  Mat xhat;           // normalized input
  Mat inv_std;        // 1 x d
  Mat gamma;          // 1 x d, copy at forward time
  Mat batch_mean;     // 1 x d
  Mat batch_var;      // 1 x d, biased (1/n)
};

struct BnOutput {
  Mat y;
  BnCache cache;
};

struct BnGrads {
  Mat dx;
  Mat dgamma;
  Mat dbeta;
};

// Training-mode batch normalization with biased batch variance. Does not
// touch the running statistics; see update_running_stats.
BnOutput batchnorm_train(const Mat& x, const BnParams& p);
// running <- (1 - momentum) running + momentum batch.
void update_running_stats(BnParams& p, const BnCache& cache);
BnOutput batchnorm_train_update(const Mat& x, BnParams& p);
Mat batchnorm_eval(const Mat& x, const BnParams& p);
BnGrads batchnorm_backward(const Mat& dy, const BnCache& cache);

struct L2Cache {
  Mat y;       // normalized rows
  Mat norms;   // n x 1
};

struct L2Output {
  Mat y;
  L2Cache cache;
};

L2Output l2_normalize(const Mat& x);
// Removes the radial component of dy and rescales by 1/||x_i||.
Mat l2_normalize_backward(const Mat& dy, const L2Cache& cache);

struct ReluCache {
  Mat input;
};

struct ReluOutput {
  Mat y;
  ReluCache cache;
};

ReluOutput relu(const Mat& x);
Mat relu_backward(const Mat& dy, const ReluCache& cache);

}  // namespace reid

#endif  // REID_LAYERS_HPP_
