#include "reid/layers.hpp"

#include <cmath>

#include "reid/errors.hpp"
#include "reid/numerics.hpp"

namespace reid {

namespace {

constexpr double kNormFloor = 1e-12;

void require_same(const char* op, const Mat& a, const Mat& b) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": " + a.shape_str() + " vs " +
                     b.shape_str());
  }
}

}  // namespace

LinearOutput linear(const Mat& x, const LinearParams& p) {
  if (x.cols() != p.in_dim()) {
    throw ShapeError("linear: input " + x.shape_str() + " vs weight " +
                     p.weight.shape_str());
  }
  Mat y = matmul_bt(x, p.weight);
  if (p.bias) {
    if (p.bias->rows() != 1 || p.bias->cols() != p.out_dim())
      throw ShapeError("linear: bias shape " + p.bias->shape_str());
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += (*p.bias)(0, j);
  }
  return {std::move(y), LinearCache{x}};
}

LinearGrads linear_backward(const Mat& dy, const LinearCache& cache,
                            const LinearParams& p) {
  if (dy.rows() != cache.input.rows() || dy.cols() != p.out_dim()) {
    throw ShapeError("linear_backward: dy " + dy.shape_str() + " vs input " +
                     cache.input.shape_str());
  }
  LinearGrads g;
  g.dx = matmul(dy, p.weight);
  g.dweight = matmul_at(dy, cache.input);
  if (p.bias) {
    Mat db(1, dy.cols());
    for (std::size_t i = 0; i < dy.rows(); ++i)
      for (std::size_t j = 0; j < dy.cols(); ++j) db(0, j) += dy(i, j);
    g.dbias = std::move(db);
  }
  return g;
}

BnParams BnParams::make(std::size_t dim, double momentum, double eps) {
  if (!(momentum > 0.0 && momentum <= 1.0))
    throw ParameterError("batchnorm: momentum must be in (0, 1]");
  if (!(eps >= 0.0)) throw ParameterError("batchnorm: eps must be >= 0");
  BnParams p;
  p.gamma = Mat(1, dim, 1.0);
  p.beta = Mat(1, dim, 0.0);
  p.running_mean = Mat(1, dim, 0.0);
  p.running_var = Mat(1, dim, 1.0);
  p.momentum = momentum;
  p.eps = eps;
  return p;
}

BnOutput batchnorm_train(const Mat& x, const BnParams& p) {
  const std::size_t n = x.rows(), d = x.cols();
  if (n < 2) {
    throw BatchSizeError("batchnorm_train: need at least 2 rows, got " +
                         std::to_string(n));
  }
  if (d != p.dim()) {
    throw ShapeError("batchnorm_train: input " + x.shape_str() +
                     " vs gamma " + p.gamma.shape_str());
  }
  BnCache c;
  c.batch_mean = Mat(1, d);
  c.batch_var = Mat(1, d);
  c.inv_std = Mat(1, d);
  c.gamma = p.gamma;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) c.batch_mean(0, j) += x(i, j);
  for (std::size_t j = 0; j < d; ++j) c.batch_mean(0, j) /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double z = x(i, j) - c.batch_mean(0, j);
      c.batch_var(0, j) += z * z;
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    c.batch_var(0, j) /= static_cast<double>(n);
    if (!(c.batch_var(0, j) + p.eps > 0.0)) {
      throw NumericError("batchnorm_train: column " + std::to_string(j) +
                         " has zero variance and eps = 0");
    }
    c.inv_std(0, j) = 1.0 / std::sqrt(c.batch_var(0, j) + p.eps);
  }
  c.xhat = Mat(n, d);
  Mat y(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (x(i, j) - c.batch_mean(0, j)) * c.inv_std(0, j);
      c.xhat(i, j) = xh;
      y(i, j) = p.gamma(0, j) * xh + p.beta(0, j);
    }
  }
  return {std::move(y), std::move(c)};
}

void update_running_stats(BnParams& p, const BnCache& cache) {
  const double m = p.momentum;
  for (std::size_t j = 0; j < p.dim(); ++j) {
    p.running_mean(0, j) = (1.0 - m) * p.running_mean(0, j) + m * cache.batch_mean(0, j);
    p.running_var(0, j) = (1.0 - m) * p.running_var(0, j) + m * cache.batch_var(0, j);
  }
  ++p.batches_tracked;
}

BnOutput batchnorm_train_update(const Mat& x, BnParams& p) {
  BnOutput out = batchnorm_train(x, p);
  update_running_stats(p, out.cache);
  return out;
}

Mat batchnorm_eval(const Mat& x, const BnParams& p) {
  if (x.cols() != p.dim()) {
    throw ShapeError("batchnorm_eval: input " + x.shape_str() + " vs gamma " +
                     p.gamma.shape_str());
  }
  Mat y(x.rows(), x.cols());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    const double scale = p.gamma(0, j) / std::sqrt(p.running_var(0, j) + p.eps);
    const double shift = p.beta(0, j) - scale * p.running_mean(0, j);
    for (std::size_t i = 0; i < x.rows(); ++i) y(i, j) = scale * x(i, j) + shift;
  }
  return y;
}

BnGrads batchnorm_backward(const Mat& dy, const BnCache& cache) {
  require_same("batchnorm_backward", dy, cache.xhat);
  const std::size_t n = dy.rows(), d = dy.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  BnGrads g;
  g.dgamma = Mat(1, d);
  g.dbeta = Mat(1, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      g.dbeta(0, j) += dy(i, j);
      g.dgamma(0, j) += dy(i, j) * cache.xhat(i, j);
    }
  }
  // dx = gamma * inv_std / n * (n dy - sum(dy) - xhat * sum(dy * xhat))
  g.dx = Mat(n, d);
  for (std::size_t j = 0; j < d; ++j) {
    const double k = cache.gamma(0, j) * cache.inv_std(0, j) * inv_n;
    for (std::size_t i = 0; i < n; ++i) {
      g.dx(i, j) = k * (static_cast<double>(n) * dy(i, j) - g.dbeta(0, j) -
                        cache.xhat(i, j) * g.dgamma(0, j));
    }
  }
  return g;
}

L2Output l2_normalize(const Mat& x) {
  L2Cache c;
  c.norms = Mat(x.rows(), 1);
  c.y = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double nrm = norm(x.row(i));
    if (nrm < kNormFloor) {
      throw DegenerateInputError("l2_normalize: row " + std::to_string(i) +
                                 " has zero norm");
    }
    c.norms(i, 0) = nrm;
    for (double& v : c.y.row(i)) v /= nrm;
  }
  Mat y = c.y;
  return {std::move(y), std::move(c)};
}

Mat l2_normalize_backward(const Mat& dy, const L2Cache& cache) {
  require_same("l2_normalize_backward", dy, cache.y);
  Mat dx(dy.rows(), dy.cols());
  for (std::size_t i = 0; i < dy.rows(); ++i) {
    const double radial = dot(dy.row(i), cache.y.row(i));
    const double inv = 1.0 / cache.norms(i, 0);
    for (std::size_t j = 0; j < dy.cols(); ++j)
      dx(i, j) = (dy(i, j) - radial * cache.y(i, j)) * inv;
  }
  return dx;
}

ReluOutput relu(const Mat& x) {
  Mat y = x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return {std::move(y), ReluCache{x}};
}

Mat relu_backward(const Mat& dy, const ReluCache& cache) {
  require_same("relu_backward", dy, cache.input);
  Mat dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(cache.input[i] > 0.0)) dx[i] = 0.0;
  return dx;
}

}  // namespace reid
