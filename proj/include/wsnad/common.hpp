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

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wsnad {

/// Coarse error category. The CLI maps each kind onto a process exit code.
enum class ErrorKind {
  config,      // invalid configuration or flag value
  shape,       // tensor shape mismatch
  data,        // malformed or non-finite input data
  state,       // streaming state inconsistent with parameters
  contract,    // caller violated an operation precondition
  shortage,    // not enough samples to build an episode
  io,          // filesystem or serialization failure
  compat,      // checkpoint/config or manifest mismatch
  divergence,  // training produced non-finite values
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

/// Dense row-major matrix of doubles. Higher-rank tensors are flattened into
/// rows; e.g. a B×N×W×d activation is stored as (B·N·W) rows of width d with
/// each node's W time steps contiguous.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Mat(std::size_t rows, std::size_t cols, std::vector<double> data);
  Mat(std::initializer_list<std::initializer_list<double>> rows);

  static Mat identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  void fill(double v);
  Mat transposed() const;
  Mat rows_slice(std::size_t r0, std::size_t r1) const;
  Mat cols_slice(std::size_t c0, std::size_t c1) const;

  Mat& operator+=(const Mat& o);
  Mat& operator-=(const Mat& o);
  Mat& operator*=(double s);

  bool same_shape(const Mat& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_str() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// C = A·B using the active kernel set.
Mat matmul(const Mat& a, const Mat& b);
/// C = A·Bᵀ
Mat matmul_nt(const Mat& a, const Mat& b);

double max_abs_diff(const Mat& a, const Mat& b);
bool all_finite(const Mat& m);

void require_shape(const Mat& m, std::size_t rows, std::size_t cols, const char* what);

}  // namespace wsnad
