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

// Alliance engine: same-role agents agree internally on issue weights and
// cost shares, then act through a single composite agent.

#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "concord/domain.hpp"
#include "concord/error.hpp"
#include "concord/repository.hpp"

namespace concord {

struct AllianceMember {
  AgentRecord record;
  ProductId product_id;
  Valuations valuations;  // weights inside are the member's proposals
};

struct AllianceTerms {
  std::vector<AgentId> member_ids;
  std::map<LeafId, double> weights;
  std::map<AgentId, std::map<LeafId, double>> cost_shares;
  int internal_rounds = 0;
};

struct CompositeAgent {
  AgentRecord record;
  ProductId product_id;
  std::vector<AgentRecord> members;
  AllianceTerms terms;
  Valuations valuations;
};

/// One internal round: every proposal for a leaf moves. Must keep each value
/// inside the hull of its inputs.
using WeightStep = std::function<std::vector<double>(const std::vector<double>&)>;

/// Each member moves halfway toward the mean of the other members'
/// proposals. With two members both land on the midpoint in one round.
inline std::vector<double> midpoint_step(const std::vector<double>& proposals) {
  const double n = static_cast<double>(proposals.size());
  const double sum = std::accumulate(proposals.begin(), proposals.end(), 0.0);
  std::vector<double> next;
  next.reserve(proposals.size());
  for (double p : proposals) {
    const double others = (sum - p) / (n - 1.0);
    next.push_back(p + 0.5 * (others - p));
  }
  return next;
}

inline constexpr double kAllianceAgreementGap = 1e-6;

namespace detail {

inline bool agreed(const std::vector<double>& proposals) {
  const auto [lo, hi] = std::minmax_element(proposals.begin(), proposals.end());
  return *hi - *lo <= kAllianceAgreementGap * std::abs(*hi);
}

inline void check_members(std::span<const AllianceMember> members) {
  if (members.size() < 2) {
    fail(ErrorCode::kPrecondition, "an alliance needs at least two members");
  }
  for (const auto& m : members) {
    if (m.record.role != members.front().record.role ||
        m.product_id != members.front().product_id) {
      fail(ErrorCode::kPrecondition,
           "alliance members must share role and product");
    }
    if (m.valuations.size() != members.front().valuations.size()) {
      fail(ErrorCode::kPrecondition, "alliance members value different issues");
    }
    for (const auto& [leaf, v] : members.front().valuations) {
      if (!m.valuations.contains(leaf)) {
        fail(ErrorCode::kPrecondition, "member '" + m.record.agent_id +
                                           "' does not value '" + leaf + "'");
      }
    }
  }
}

}  // namespace detail

/// Internal pre-negotiation. Throws InternalDeadlock when some leaf's
/// proposals still disagree after `max_internal_rounds`.
inline AllianceTerms negotiate_terms(std::span<const AllianceMember> members,
                                     std::span<const NonFunctionalAttribute> nf,
                                     int max_internal_rounds,
                                     const WeightStep& step = midpoint_step) {
  detail::check_members(members);
  AllianceTerms terms;
  for (const auto& m : members) terms.member_ids.push_back(m.record.agent_id);

  for (const auto& [leaf, unused] : members.front().valuations) {
    std::vector<double> proposals;
    for (const auto& m : members) proposals.push_back(m.valuations.at(leaf).weight);
    int rounds = 0;
    while (!detail::agreed(proposals)) {
      if (rounds == max_internal_rounds) {
        fail(ErrorCode::kInternalDeadlock,
             "no weight agreement on '" + leaf + "' within " +
                 std::to_string(max_internal_rounds) + " rounds");
      }
      proposals = step(proposals);
      ++rounds;
    }
    terms.internal_rounds = std::max(terms.internal_rounds, rounds);
    const double mean = std::accumulate(proposals.begin(), proposals.end(), 0.0) /
                        static_cast<double>(proposals.size());
    const auto [lo, hi] = std::minmax_element(proposals.begin(), proposals.end());
    terms.weights[leaf] = std::clamp(mean, *lo, *hi);
  }

  // Shares proportional to each member's maximum payoff.
  std::vector<double> payoffs;
  for (const auto& m : members) {
    std::vector<UtilityBand> bands;
    for (const auto& [leaf, v] : m.valuations) bands.push_back(utility_band(v, nf));
    payoffs.push_back(payoff_bounds(bands).max_payoff);
  }
  const double total = std::accumulate(payoffs.begin(), payoffs.end(), 0.0);
  for (std::size_t k = 0; k < members.size(); ++k) {
    const double share = total > 0.0
                             ? payoffs[k] / total
                             : 1.0 / static_cast<double>(members.size());
    for (const auto& [leaf, unused] : members.front().valuations) {
      terms.cost_shares[members[k].record.agent_id][leaf] = share;
    }
  }
  return terms;
}

inline std::string composite_id(std::span<const AllianceMember> members) {
  std::string id = "alliance(";
  for (std::size_t k = 0; k < members.size(); ++k) {
    if (k > 0) id += "+";
    id += members[k].record.agent_id;
  }
  return id + ")";
}

/// The composite values each leaf at the sum of its members' costs, so its
/// floor never undercuts any member's own floor.
inline CompositeAgent form_composite(std::span<const AllianceMember> members,
                                     const AllianceTerms& terms) {
  detail::check_members(members);
  if (terms.member_ids.size() != members.size()) {
    fail(ErrorCode::kPrecondition, "terms do not match the member list");
  }
  CompositeAgent composite;
  composite.product_id = members.front().product_id;
  composite.terms = terms;
  const std::string id = composite_id(members);
  int priority = members.front().record.priority;
  for (const auto& m : members) priority = std::max(priority, m.record.priority);
  composite.record = AgentRecord{id, id, members.front().record.address,
                                 members.front().record.role, false, priority};
  for (const auto& m : members) {
    composite.members.push_back(m.record);
    for (const auto& [leaf, v] : m.valuations) {
      auto& out = composite.valuations[leaf];
      out.leaf_id = leaf;
      out.actual_cost += v.actual_cost;
      out.cost_with_margin += v.cost_with_margin;
    }
  }
  for (auto& [leaf, v] : composite.valuations) {
    auto it = terms.weights.find(leaf);
    if (it == terms.weights.end()) {
      fail(ErrorCode::kPrecondition, "terms lack a weight for '" + leaf + "'");
    }
    v.weight = it->second;
  }
  return composite;
}

/// Registers the composite and a fresh advertisement for it; the members'
/// advertisements leave the live set.
inline void register_composite(Repository& repo, const CompositeAgent& composite,
                               const std::vector<AdId>& member_ad_ids,
                               const Advertisement& ad) {
  repo.register_agent(composite.record);
  repo.consume(member_ad_ids);
  repo.submit_advertisement(ad);
}

/// Splits the deal revenue (or cost) among members by their cost shares.
inline std::map<AgentId, double> distribute_outcome(
    const CompositeAgent& composite,
    const std::map<LeafId, double>& final_prices) {
  std::map<AgentId, double> payouts;
  for (const auto& member : composite.members) {
    const auto& shares = composite.terms.cost_shares.at(member.agent_id);
    double total = 0.0;
    for (const auto& [leaf, price] : final_prices) total += shares.at(leaf) * price;
    payouts[member.agent_id] = total;
  }
  return payouts;
}

}  // namespace concord
