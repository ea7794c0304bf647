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

#include "wsnad/tensor_ops.hpp"

#include <cmath>

namespace wsnad {

void rotary_inplace(Mat& x, std::size_t block, std::size_t head_dim, long pos0, bool conjugate,
                    double base) {
  if (head_dim == 0 || head_dim % 2 != 0)
    fail(ErrorKind::config, "rotary head width must be even, got " + std::to_string(head_dim));
  if (x.cols() % head_dim != 0)
    fail(ErrorKind::shape, "rotary: width " + std::to_string(x.cols()) + " not a multiple of head width " +
                               std::to_string(head_dim));
  if (block == 0) fail(ErrorKind::shape, "rotary: zero block length");
  const std::size_t pairs = head_dim / 2;
  const double sign = conjugate ? -1.0 : 1.0;
  std::vector<double> theta(pairs);
  for (std::size_t m = 0; m < pairs; ++m)
    theta[m] = std::pow(base, -2.0 * static_cast<double>(m) / static_cast<double>(head_dim));
  std::vector<double> cs(pairs), sn(pairs);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double p = static_cast<double>(pos0 + static_cast<long>(r % block));
    for (std::size_t m = 0; m < pairs; ++m) {
      const double a = sign * p * theta[m];
      cs[m] = std::cos(a);
      sn[m] = std::sin(a);
    }
    double* row = x.data() + r * x.cols();
    for (std::size_t h0 = 0; h0 < x.cols(); h0 += head_dim) {
      for (std::size_t m = 0; m < pairs; ++m) {
        double& u = row[h0 + 2 * m];
        double& v = row[h0 + 2 * m + 1];
        const double nu = u * cs[m] - v * sn[m];
        const double nv = u * sn[m] + v * cs[m];
        u = nu;
        v = nv;
      }
    }
  }
}

void group_norm_rows(Mat& x, std::size_t groups, double eps, std::vector<double>* inv_std) {
  if (groups == 0 || x.cols() % groups != 0)
    fail(ErrorKind::shape, "group norm: width " + std::to_string(x.cols()) + " not divisible into " +
                               std::to_string(groups) + " groups");
  const std::size_t gw = x.cols() / groups;
  if (inv_std != nullptr) inv_std->assign(x.rows() * groups, 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double* row = x.data() + r * x.cols();
    for (std::size_t g = 0; g < groups; ++g) {
      double* s = row + g * gw;
      double mu = 0.0;
      for (std::size_t i = 0; i < gw; ++i) mu += s[i];
      mu /= static_cast<double>(gw);
      double var = 0.0;
      for (std::size_t i = 0; i < gw; ++i) var += (s[i] - mu) * (s[i] - mu);
      var /= static_cast<double>(gw);
      const double inv = 1.0 / std::sqrt(var + eps);
      for (std::size_t i = 0; i < gw; ++i) s[i] = (s[i] - mu) * inv;
      if (inv_std != nullptr) (*inv_std)[r * groups + g] = inv;
    }
  }
}

Mat decay_mask(std::size_t window, double gamma) {
  Mat d(window, window);
  for (std::size_t t1 = 0; t1 < window; ++t1) {
    double w = 1.0;
    for (std::size_t t2 = t1 + 1; t2-- > 0;) {
      d(t1, t2) = w;
      w *= gamma;
    }
  }
  return d;
}

}  // namespace wsnad
