// include/rnnt/array.h
//
// Dense row-major double matrices and the value-only kernels shared by the
// inference path and the differentiable ops in tape.h. Every array is at most
// two-dimensional; vectors are 1 x n.

#ifndef RNNT_ARRAY_H_
#define RNNT_ARRAY_H_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace rnnt {

class Array {
 public:
  Array() = default;
  Array(size_t rows, size_t cols, double fill = 0.0);
  Array(size_t rows, size_t cols, std::vector<double> data);

  static Array Row(std::vector<double> values);

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::vector<size_t> shape() const { return {rows_, cols_}; }
  std::string ShapeString() const;

  double &operator()(size_t r, size_t c) { return data_[r * cols_ + c]; }
  double operator()(size_t r, size_t c) const { return data_[r * cols_ + c]; }
  double &operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double> &values() const { return data_; }
  std::span<double> row(size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  bool SameShape(const Array &other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool AllFinite() const;
  void Fill(double v);

  // Bitwise equality of shape and contents.
  bool operator==(const Array &other) const = default;

 private:
  size_t rows_ = 0;
  size_t cols_ = 0;
  std::vector<double> data_;
};

// Value kernels. Each one throws ShapeError naming itself and the operand
// shapes when the operands do not fit.
namespace kernels {

Array MatMul(const Array &a, const Array &b);
// a^T b and a b^T, used by the matmul backward pass.
Array MatMulTransA(const Array &a, const Array &b);
Array MatMulTransB(const Array &a, const Array &b);
Array Add(const Array &a, const Array &b);
// Adds the 1 x n row `bias` to every row of `a`.
Array AddRow(const Array &a, const Array &bias);
Array Mul(const Array &a, const Array &b);
Array Scale(const Array &a, double factor);
Array Tanh(const Array &a);
Array Sigmoid(const Array &a);
Array LogSoftmaxRows(const Array &a);
Array MeanRows(const Array &a);
Array SliceCols(const Array &a, size_t begin, size_t end);
Array TakeRow(const Array &a, size_t r);
// Row i*b.rows()+j equals a.row(i) + b.row(j).
Array PairwiseRowSum(const Array &a, const Array &b);

// log(sum(exp(v))) with the usual max shift; -inf for an empty or all -inf
// input.
double LogSumExp(std::span<const double> v);
double LogAdd(double a, double b);

}  // namespace kernels

}  // namespace rnnt

#endif  // RNNT_ARRAY_H_
