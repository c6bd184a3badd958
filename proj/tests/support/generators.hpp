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

// Random inputs shared by the unit and acceptance tests.

#pragma once

#include <random>
#include <string>
#include <vector>

#include "concord/domain.hpp"
#include "concord/engine/market.hpp"
#include "concord/harness/scenario.hpp"
#include "concord/repository.hpp"

namespace concord::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline bool coin(Rng& rng, double p = 0.5) { return std::bernoulli_distribution(p)(rng); }

inline NonFunctionalList random_nf(Rng& rng) {
  NonFunctionalList nf;
  const int n = uniform_int(rng, 0, 3);
  for (int k = 0; k < n; ++k) nf.push_back({"nf" + std::to_string(k), uniform(rng, 0.8, 1.25)});
  return nf;
}

/// Flat product with leaves i0..i{n-1}.
inline ProductSpec random_product(Rng& rng, int issues, const std::string& id = "p") {
  ProductSpec p;
  p.product_id = id;
  p.product_name = id;
  p.tree.node_id = id;
  p.tree.name = id;
  for (int k = 0; k < issues; ++k) {
    AttributeNode leaf;
    leaf.node_id = "i" + std::to_string(k);
    leaf.name = leaf.node_id;
    p.tree.children.push_back(leaf);
  }
  p.non_functional = random_nf(rng);
  return p;
}

inline std::vector<LeafId> leaves_of(const ProductSpec& p) { return validate_tree(p.tree); }

inline Valuations random_seller(Rng& rng, const ProductSpec& p) {
  Valuations v;
  for (const auto& leaf : leaves_of(p)) {
    const double actual = uniform(rng, 10.0, 1000.0);
    v[leaf] = {leaf, actual, actual * uniform(rng, 1.0, 2.0), uniform(rng, 0.5, 2.0)};
  }
  return v;
}

/// A buyer facing `seller`: on each issue the ceiling is at or above the
/// seller's floor when `overlap`, strictly below it otherwise.
inline Valuations random_buyer(Rng& rng, const Valuations& seller, bool overlap) {
  Valuations v;
  for (const auto& [leaf, s] : seller) {
    const double ceiling = overlap ? s.actual_cost * uniform(rng, 1.0, 2.0)
                                   : s.actual_cost * uniform(rng, 0.3, 0.95);
    v[leaf] = {leaf, ceiling * uniform(rng, 0.3, 1.0), ceiling, uniform(rng, 0.5, 2.0)};
  }
  return v;
}

/// Buyer valuations with an explicit per-issue overlap pattern.
inline Valuations random_buyer(Rng& rng, const Valuations& seller,
                               const std::vector<bool>& overlap) {
  Valuations v;
  std::size_t k = 0;
  for (const auto& [leaf, s] : seller) {
    Valuations one{{leaf, s}};
    v[leaf] = random_buyer(rng, one, overlap[k++]).at(leaf);
  }
  return v;
}

inline Participant participant(const std::string& id, Role role, Valuations v) {
  return Participant{AgentRecord{id, id, "", role, false, 0}, std::move(v)};
}

/// A whole-run scenario: one or two products, a handful of agents arriving
/// over the first steps, sometimes allied, sometimes over capacity.
inline Scenario random_scenario(Rng& rng) {
  Scenario s;
  const int products = uniform_int(rng, 1, 2);
  for (int k = 0; k < products; ++k) {
    s.products.push_back(random_product(rng, uniform_int(rng, 1, 3), "p" + std::to_string(k)));
  }
  int next = 0;
  for (const auto& product : s.products) {
    const auto base = random_seller(rng, product);
    const int sellers = uniform_int(rng, 1, 3);
    const int buyers = uniform_int(rng, 1, 3);
    for (int k = 0; k < sellers + buyers; ++k) {
      const bool is_seller = k < sellers;
      AgentSpec a;
      a.record.agent_id = (is_seller ? "S" : "B") + std::to_string(next++);
      a.record.name = a.record.agent_id;
      a.record.role = is_seller ? Role::kSeller : Role::kBuyer;
      a.record.allies = coin(rng, 0.25);
      a.record.priority = uniform_int(rng, 0, 3);
      a.product_id = product.product_id;
      if (is_seller) {
        a.valuations = base;
        for (auto& [leaf, v] : a.valuations) {
          v.actual_cost *= uniform(rng, 0.9, 1.1);
          v.cost_with_margin = v.actual_cost * uniform(rng, 1.0, 1.8);
          v.weight = uniform(rng, 0.5, 2.0);
        }
      } else {
        a.valuations = random_buyer(rng, base, coin(rng, 0.8));
      }
      a.weights_given = true;
      a.validity = uniform_int(rng, 2, 8);
      a.arrival = uniform_int(rng, 0, 3);
      s.agents.push_back(std::move(a));
    }
  }
  s.config.max_parties = static_cast<std::size_t>(uniform_int(rng, 2, 8));
  s.config.queue_policy = coin(rng) ? QueuePolicy::kFcfs : QueuePolicy::kPriority;
  s.config.round_limit = uniform_int(rng, 10, 60);
  s.config.seed = rng();
  s.config.max_internal_rounds = uniform_int(rng, 0, 40);
  return s;
}

}  // namespace concord::testing
