// src/array.cc

#include "rnnt/array.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "rnnt/error.h"

namespace rnnt {

Array::Array(size_t rows, size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Array::Array(size_t rows, size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("Array: " + std::to_string(data_.size()) +
                     " values do not fill shape [" + std::to_string(rows) +
                     "," + std::to_string(cols) + "]");
  }
}

Array Array::Row(std::vector<double> values) {
  size_t n = values.size();
  return Array(1, n, std::move(values));
}

std::string Array::ShapeString() const {
  return "[" + std::to_string(rows_) + "," + std::to_string(cols_) + "]";
}

bool Array::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Array::Fill(double v) { std::fill(data_.begin(), data_.end(), v); }

namespace kernels {
namespace {

[[noreturn]] void Mismatch(const char *op, const Array &a, const Array &b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " +
                   a.ShapeString() + " and " + b.ShapeString());
}

template <typename F>
Array Map(const Array &a, F f) {
  Array out(a.rows(), a.cols());
  auto src = a.data();
  auto dst = out.data();
  for (size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

}  // namespace

// The k-loop is outermost per output row so every element is summed in
// ascending k order regardless of how many rows a has. The decoder relies on
// this to get bit-identical values from the stepwise and batched paths.
Array MatMul(const Array &a, const Array &b) {
  if (a.cols() != b.rows()) Mismatch("matmul", a, b);
  Array out(a.rows(), b.cols());
  const size_t n = b.cols();
  for (size_t i = 0; i < a.rows(); ++i) {
    double *dst = out.row(i).data();
    const double *arow = a.row(i).data();
    for (size_t k = 0; k < a.cols(); ++k) {
      const double x = arow[k];
      const double *brow = b.row(k).data();
      for (size_t j = 0; j < n; ++j) dst[j] += x * brow[j];
    }
  }
  return out;
}

Array MatMulTransA(const Array &a, const Array &b) {
  if (a.rows() != b.rows()) Mismatch("matmul^T", a, b);
  Array out(a.cols(), b.cols());
  for (size_t r = 0; r < a.rows(); ++r) {
    const double *arow = a.row(r).data();
    const double *brow = b.row(r).data();
    for (size_t i = 0; i < a.cols(); ++i) {
      const double x = arow[i];
      if (x == 0.0) continue;
      double *dst = out.row(i).data();
      for (size_t j = 0; j < b.cols(); ++j) dst[j] += x * brow[j];
    }
  }
  return out;
}

Array MatMulTransB(const Array &a, const Array &b) {
  if (a.cols() != b.cols()) Mismatch("matmul^T", a, b);
  Array out(a.rows(), b.rows());
  for (size_t i = 0; i < a.rows(); ++i) {
    const double *arow = a.row(i).data();
    for (size_t j = 0; j < b.rows(); ++j) {
      const double *brow = b.row(j).data();
      double acc = 0.0;
      for (size_t k = 0; k < a.cols(); ++k) acc += arow[k] * brow[k];
      out(i, j) = acc;
    }
  }
  return out;
}

Array Add(const Array &a, const Array &b) {
  if (!a.SameShape(b)) Mismatch("add", a, b);
  Array out(a.rows(), a.cols());
  for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Array AddRow(const Array &a, const Array &bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) Mismatch("add-row", a, bias);
  Array out(a.rows(), a.cols());
  for (size_t r = 0; r < a.rows(); ++r) {
    for (size_t c = 0; c < a.cols(); ++c) out(r, c) = a(r, c) + bias[c];
  }
  return out;
}

Array Mul(const Array &a, const Array &b) {
  if (!a.SameShape(b)) Mismatch("mul", a, b);
  Array out(a.rows(), a.cols());
  for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Array Scale(const Array &a, double factor) {
  return Map(a, [factor](double v) { return v * factor; });
}

Array Tanh(const Array &a) {
  return Map(a, [](double v) { return std::tanh(v); });
}

Array Sigmoid(const Array &a) {
  return Map(a, [](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

Array LogSoftmaxRows(const Array &a) {
  Array out(a.rows(), a.cols());
  for (size_t r = 0; r < a.rows(); ++r) {
    auto src = a.row(r);
    const double lse = LogSumExp(src);
    auto dst = out.row(r);
    for (size_t c = 0; c < src.size(); ++c) dst[c] = src[c] - lse;
  }
  return out;
}

Array MeanRows(const Array &a) {
  if (a.rows() == 0) throw ShapeError("mean-over-axis: empty input");
  Array out(1, a.cols());
  for (size_t r = 0; r < a.rows(); ++r) {
    for (size_t c = 0; c < a.cols(); ++c) out[c] += a(r, c);
  }
  const double inv = 1.0 / static_cast<double>(a.rows());
  for (size_t c = 0; c < a.cols(); ++c) out[c] *= inv;
  return out;
}

Array SliceCols(const Array &a, size_t begin, size_t end) {
  if (begin > end || end > a.cols()) {
    throw ShapeError("slice-cols: [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") out of " + a.ShapeString());
  }
  Array out(a.rows(), end - begin);
  for (size_t r = 0; r < a.rows(); ++r) {
    for (size_t c = begin; c < end; ++c) out(r, c - begin) = a(r, c);
  }
  return out;
}

Array TakeRow(const Array &a, size_t r) {
  if (r >= a.rows()) {
    throw ShapeError("row: index " + std::to_string(r) + " out of " +
                     a.ShapeString());
  }
  auto src = a.row(r);
  return Array(1, a.cols(), std::vector<double>(src.begin(), src.end()));
}

Array PairwiseRowSum(const Array &a, const Array &b) {
  if (a.cols() != b.cols()) Mismatch("pairwise-row-sum", a, b);
  Array out(a.rows() * b.rows(), a.cols());
  for (size_t i = 0; i < a.rows(); ++i) {
    for (size_t j = 0; j < b.rows(); ++j) {
      double *dst = out.row(i * b.rows() + j).data();
      for (size_t c = 0; c < a.cols(); ++c) dst[c] = a(i, c) + b(j, c);
    }
  }
  return out;
}

double LogSumExp(std::span<const double> v) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  double mx = kNegInf;
  for (double x : v) mx = std::max(mx, x);
  if (mx == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - mx);
  return mx + std::log(acc);
}

double LogAdd(double a, double b) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  if (a < b) std::swap(a, b);
  if (b == kNegInf) return a;
  return a + std::log1p(std::exp(b - a));
}

}  // namespace kernels
}  // namespace rnnt
