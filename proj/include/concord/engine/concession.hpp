// Copyright 2026 The Concord Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <span>

#include "concord/domain.hpp"
#include "concord/error.hpp"

namespace concord {

/// Linear concession: u_new = u_old * (1 - lambda * t / w), unclamped.
inline double decay_utility(double u_old, double lambda, int t, double w) {
  if (!(w > 0.0)) fail(ErrorCode::kPrecondition, "weight must be positive");
  if (t < 1) fail(ErrorCode::kPrecondition, "round must be at least 1");
  if (!(lambda >= 0.0)) fail(ErrorCode::kPrecondition, "lambda must be non-negative");
  return u_old * (1.0 - lambda * static_cast<double>(t) / w);
}

/// Same, clamped into the issue's band; a raw value below zero lands on
/// u_min.
inline double decay_utility(double u_old, double lambda, int t, double w,
                            const UtilityBand& band) {
  return band.clamp(decay_utility(u_old, lambda, t, w));
}

struct UnacceptedIssue {
  double offered_price = 0.0;
  double weight = 1.0;
  UtilityBand band;
};

struct LambdaResult {
  double lambda = 0.0;
  // Every offered price was zero, so no lambda balances the equation.
  bool degenerate = false;
};

/// Solves  sum_i x_i * lambda / w_i = (sum_i U_max_i - sum_i U_min_i) / rounds
/// over the issues still open.
inline LambdaResult derive_lambda(std::span<const UnacceptedIssue> open_issues,
                                  int rounds_remaining) {
  if (open_issues.empty()) fail(ErrorCode::kPrecondition, "no open issues");
  if (rounds_remaining < 1) fail(ErrorCode::kPrecondition, "no rounds remaining");
  double gap = 0.0;
  double scaled_offers = 0.0;
  for (const auto& issue : open_issues) {
    if (!(issue.weight > 0.0)) fail(ErrorCode::kPrecondition, "weight must be positive");
    if (!(issue.offered_price >= 0.0)) {
      fail(ErrorCode::kPrecondition, "offered price must be non-negative");
    }
    gap += issue.band.u_max - issue.band.u_min;
    scaled_offers += issue.offered_price / issue.weight;
  }
  if (scaled_offers == 0.0) return {0.0, true};
  const double per_round = gap / static_cast<double>(rounds_remaining);
  return {std::max(0.0, per_round / scaled_offers), false};
}

}  // namespace concord
