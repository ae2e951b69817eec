#ifndef REID_MAT_HPP_
#define REID_MAT_HPP_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace reid {

// Dense row-major matrix of doubles. Every feature block, parameter and
// gradient in the library is carried by this type.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0);
  Mat(std::size_t rows, std::size_t cols, std::vector<double> data);
  Mat(std::initializer_list<std::initializer_list<double>> rows);

  static Mat zeros(std::size_t rows, std::size_t cols) { return Mat(rows, cols); }
  static Mat identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& storage() const { return data_; }

  Mat transpose() const;
  // Rows selected by index, in the given order.
  Mat gather_rows(std::span<const std::size_t> indices) const;

  bool all_finite() const;
  bool same_shape(const Mat& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_str() const;

  Mat& operator+=(const Mat& other);
  Mat& operator-=(const Mat& other);
  Mat& operator*=(double s);

  friend bool operator==(const Mat& a, const Mat& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Mat operator+(Mat a, const Mat& b);
Mat operator-(Mat a, const Mat& b);
Mat operator*(Mat a, double s);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
// Largest absolute entry-wise difference; throws ShapeError on mismatch.
double max_abs_diff(const Mat& a, const Mat& b);

}  // namespace reid

#endif  // REID_MAT_HPP_
