#include "reid/numerics.hpp"

#include <algorithm>
#include <cmath>

#include "reid/errors.hpp"

namespace reid {

namespace {

constexpr double kNormFloor = 1e-12;

void require_inner(const char* op, std::size_t lhs, std::size_t rhs,
                   const Mat& a, const Mat& b) {
  if (lhs != rhs) {
    throw ShapeError(std::string(op) + ": inner dimensions differ (" +
                     a.shape_str() + " vs " + b.shape_str() + ")");
  }
}

}  // namespace

Mat matmul(const Mat& a, const Mat& b) {
  require_inner("matmul", a.cols(), b.rows(), a, b);
  Mat out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Mat matmul_bt(const Mat& a, const Mat& b) {
  require_inner("matmul_bt", a.cols(), b.cols(), a, b);
  Mat out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  return out;
}

Mat matmul_at(const Mat& a, const Mat& b) {
  require_inner("matmul_at", a.rows(), b.rows(), a, b);
  Mat out(a.cols(), b.cols());
  for (std::size_t n = 0; n < a.rows(); ++n) {
    auto arow = a.row(n);
    auto brow = b.row(n);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double ai = arow[i];
      auto orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += ai * brow[j];
    }
  }
  return out;
}

Mat pairwise_sq_euclidean(const Mat& x, const Mat& y) {
  if (x.cols() != y.cols()) {
    throw ShapeError("pairwise_sq_euclidean: feature dims differ (" +
                     x.shape_str() + " vs " + y.shape_str() + ")");
  }
  std::vector<double> xn(x.rows()), yn(y.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) xn[i] = dot(x.row(i), x.row(i));
  for (std::size_t j = 0; j < y.rows(); ++j) yn[j] = dot(y.row(j), y.row(j));
  Mat d = matmul_bt(x, y);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < y.rows(); ++j) {
      d(i, j) = std::max(0.0, xn[i] + yn[j] - 2.0 * d(i, j));
    }
  }
  // The expansion leaves rounding residue on identical rows.
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < y.rows(); ++j) {
      if (d(i, j) != 0.0 && std::equal(x.row(i).begin(), x.row(i).end(),
                                        y.row(j).begin())) {
        d(i, j) = 0.0;
      }
    }
  }
  return d;
}

Mat l2_normalized_rows(const Mat& x) {
  Mat out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double n = norm(x.row(i));
    if (n < kNormFloor) {
      throw DegenerateInputError("row " + std::to_string(i) +
                                 " has zero norm");
    }
    for (double& v : out.row(i)) v /= n;
  }
  return out;
}

Mat pairwise_cosine_sim(const Mat& x, const Mat& y) {
  if (x.cols() != y.cols()) {
    throw ShapeError("pairwise_cosine_sim: feature dims differ (" +
                     x.shape_str() + " vs " + y.shape_str() + ")");
  }
  return matmul_bt(l2_normalized_rows(x), l2_normalized_rows(y));
}

Mat finite_diff_grad(const ScalarFn& f, const Mat& x, double h) {
  if (!(h > 0.0)) throw ParameterError("finite_diff_grad: step must be > 0");
  Mat probe = x;
  Mat grad(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(probe);
    probe[i] = orig - h;
    const double fm = f(probe);
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: non-finite function value at entry " +
                         std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double max_rel_error(const Mat& a, const Mat& b, double floor) {
  if (!a.same_shape(b))
    throw ShapeError("max_rel_error: " + a.shape_str() + " vs " + b.shape_str());
  double scale = floor;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst / scale;
}

Mat kaiming_init(std::size_t fan_in, std::size_t rows, std::size_t cols, Rng& rng) {
  if (fan_in == 0) throw ParameterError("kaiming_init: fan_in must be >= 1");
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  Mat w(rows, cols);
  for (double& v : w.values()) v = rng.normal(0.0, stddev);
  return w;
}

}  // namespace reid
