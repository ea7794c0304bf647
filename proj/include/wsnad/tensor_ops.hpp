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
#include <span>

#include "wsnad/common.hpp"

// Plain (non-differentiable) numeric helpers shared by the autodiff ops and
// the streaming inference path, so both apply bit-identical arithmetic.

namespace wsnad {

/// Rotates consecutive coordinate pairs of every row. Rows are grouped in
/// blocks of `block` positions; row r sits at position pos0 + r % block.
/// Each row is split into heads of width `head_dim` (even); pair m of a head
/// is rotated by angle sign·p·base^(−2m/head_dim), sign = −1 when conjugate.
void rotary_inplace(Mat& x, std::size_t block, std::size_t head_dim, long pos0, bool conjugate,
                    double base);

/// Per-row group normalisation: each row is cut into `groups` contiguous
/// slabs that are independently shifted to mean 0 and scaled by
/// 1/sqrt(var + eps). Returns the per-(row, group) inverse std in inv_std
/// when non-null (length rows·groups).
void group_norm_rows(Mat& x, std::size_t groups, double eps, std::vector<double>* inv_std = nullptr);

/// Lower-triangular decay mask D(t1,t2) = gamma^(t1−t2) for t1 ≥ t2, else 0.
Mat decay_mask(std::size_t window, double gamma);

}  // namespace wsnad
