// Copyright 2026 The wsnad Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "wsnad/common.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "wsnad/kernels.hpp"

namespace wsnad {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config error";
    case ErrorKind::shape: return "shape error";
    case ErrorKind::data: return "data error";
    case ErrorKind::state: return "state error";
    case ErrorKind::contract: return "contract error";
    case ErrorKind::shortage: return "shortage error";
    case ErrorKind::io: return "I/O error";
    case ErrorKind::compat: return "compatibility error";
    case ErrorKind::divergence: return "divergence";
  }
  return "error";
}

void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, std::string(to_string(kind)) + ": " + what);
}

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) fail(ErrorKind::shape, "buffer size does not match " + shape_str());
}

Mat::Mat(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) fail(ErrorKind::shape, "ragged initializer list");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Mat::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Mat Mat::transposed() const {
  Mat t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Mat Mat::rows_slice(std::size_t r0, std::size_t r1) const {
  if (r0 > r1 || r1 > rows_) fail(ErrorKind::shape, "row slice out of range for " + shape_str());
  Mat out(r1 - r0, cols_);
  std::copy(data_.begin() + static_cast<std::ptrdiff_t>(r0 * cols_),
            data_.begin() + static_cast<std::ptrdiff_t>(r1 * cols_), out.data_.begin());
  return out;
}

Mat Mat::cols_slice(std::size_t c0, std::size_t c1) const {
  if (c0 > c1 || c1 > cols_) fail(ErrorKind::shape, "column slice out of range for " + shape_str());
  Mat out(rows_, c1 - c0);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = c0; c < c1; ++c) out(r, c - c0) = (*this)(r, c);
  return out;
}

Mat& Mat::operator+=(const Mat& o) {
  if (!same_shape(o)) fail(ErrorKind::shape, shape_str() + " += " + o.shape_str());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Mat& Mat::operator-=(const Mat& o) {
  if (!same_shape(o)) fail(ErrorKind::shape, shape_str() + " -= " + o.shape_str());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Mat& Mat::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

std::string Mat::shape_str() const {
  std::ostringstream os;
  os << rows_ << "x" << cols_;
  return os.str();
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) fail(ErrorKind::shape, "matmul " + a.shape_str() + " · " + b.shape_str());
  Mat c(a.rows(), b.cols());
  kernels::active().gemm(a.rows(), b.cols(), a.cols(), a.data(), b.data(), c.data());
  return c;
}

Mat matmul_nt(const Mat& a, const Mat& b) {
  if (a.cols() != b.cols())
    fail(ErrorKind::shape, "matmul_nt " + a.shape_str() + " · (" + b.shape_str() + ")ᵀ");
  Mat c(a.rows(), b.rows());
  kernels::active().gemm_nt(a.rows(), b.rows(), a.cols(), a.data(), b.data(), c.data());
  return c;
}

double max_abs_diff(const Mat& a, const Mat& b) {
  if (!a.same_shape(b)) fail(ErrorKind::shape, "compare " + a.shape_str() + " vs " + b.shape_str());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool all_finite(const Mat& m) {
  return std::all_of(m.storage().begin(), m.storage().end(), [](double v) { return std::isfinite(v); });
}

void require_shape(const Mat& m, std::size_t rows, std::size_t cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    fail(ErrorKind::shape, std::string(what) + ": expected " + std::to_string(rows) + "x" +
                               std::to_string(cols) + ", got " + m.shape_str());
  }
}

}  // namespace wsnad
