// Copyright 2026 The nvpfi Authors.
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

// Independent reference computations shared by unit and acceptance tests.
// None of them call into the code paths they check.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "nvpfi/metrics.hpp"
#include "nvpfi/realnvp.hpp"

namespace oracle {

// |det A| by Gaussian elimination with partial pivoting, in double.
inline double abs_det(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  double det = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::fabs(a[r][c]) > std::fabs(a[p][c])) p = r;
    }
    if (a[p][c] == 0.0) return 0.0;
    std::swap(a[p], a[c]);
    det *= a[c][c];
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
    }
  }
  return std::fabs(det);
}

// Central finite-difference Jacobian of a coupling layer's forward map.
inline std::vector<std::vector<double>> fd_jacobian(const nvpfi::CouplingLayer& layer,
                                                    const std::vector<float>& x, float step) {
  const std::size_t n = x.size();
  std::vector<std::vector<double>> j(n, std::vector<double>(n, 0.0));
  for (std::size_t c = 0; c < n; ++c) {
    auto xp = x, xm = x;
    xp[c] += step;
    xm[c] -= step;
    const double h = static_cast<double>(xp[c]) - static_cast<double>(xm[c]);
    const auto yp = nvpfi::coupling_forward(layer, xp).y;
    const auto ym = nvpfi::coupling_forward(layer, xm).y;
    for (std::size_t r = 0; r < n; ++r) {
      j[r][c] = (static_cast<double>(yp[r]) - static_cast<double>(ym[r])) / h;
    }
  }
  return j;
}

// Outcome table: one (label, faulty) pair per evaluated sample.
struct Counts {
  std::uint64_t sdc = 0, due = 0, masked = 0, n = 0;
};

// Brute-force counting straight from the definitions: DUE on a non-finite
// score, masked when the faulty prediction equals the label, SDC otherwise.
inline Counts count_outcomes(const std::vector<nvpfi::Label>& labels,
                             const std::vector<nvpfi::Prediction>& faulty, bool merge_due) {
  Counts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ++c.n;
    if (faulty[i] == nvpfi::Prediction::Due) {
      if (merge_due) {
        ++c.sdc;
      } else {
        ++c.due;
      }
    } else if (static_cast<int>(faulty[i]) == static_cast<int>(labels[i])) {
      ++c.masked;
    } else {
      ++c.sdc;
    }
  }
  return c;
}

// Mean in long double, left to right.
inline double mean(const std::vector<double>& v) {
  long double s = 0.0L;
  for (double x : v) s += x;
  return static_cast<double>(s / static_cast<long double>(v.size()));
}

}  // namespace oracle
