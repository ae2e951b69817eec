#ifndef REID_NUMERICS_HPP_
#define REID_NUMERICS_HPP_

#include <cstddef>
#include <functional>

#include "reid/mat.hpp"
#include "reid/rng.hpp"

namespace reid {

// a (n x k) times b (k x m).
Mat matmul(const Mat& a, const Mat& b);
// a (n x k) times b^T where b is (m x k); the layout used by linear layers.
Mat matmul_bt(const Mat& a, const Mat& b);
// a^T (k x n) times b (n x m).
Mat matmul_at(const Mat& a, const Mat& b);

// Squared Euclidean distance between every row of x and every row of y,
// clamped at zero.
Mat pairwise_sq_euclidean(const Mat& x, const Mat& y);
// Cosine similarity between rows. Throws DegenerateInputError when any row
// has norm below 1e-12.
Mat pairwise_cosine_sim(const Mat& x, const Mat& y);

// Row-wise L2 normalization without a backward cache.
Mat l2_normalized_rows(const Mat& x);

using ScalarFn = std::function<double(const Mat&)>;

// Central-difference gradient of f at x, one entry at a time.
Mat finite_diff_grad(const ScalarFn& f, const Mat& x, double h = 1e-4);

// max |a - b| scaled by the larger of the two blocks' max-abs entries (or
// floor, whichever is bigger). Entries that are near zero in both blocks
// are measured against the block scale, not against themselves.
double max_rel_error(const Mat& a, const Mat& b, double floor = 1e-10);

// N(0, sqrt(2 / fan_in)) entries.
Mat kaiming_init(std::size_t fan_in, std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace reid

#endif  // REID_NUMERICS_HPP_
