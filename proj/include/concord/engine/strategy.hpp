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

// Concession strategies are plug-ins: a strategy names a decay function, an
// opening rule and an optional acceptance override. Buyers mirror the decay
// so that their bids rise by the amount a seller's ask would fall.

#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>

#include "concord/domain.hpp"
#include "concord/engine/concession.hpp"
#include "concord/error.hpp"

namespace concord {

struct Strategy {
  std::string name;
  std::function<double(double u_old, double lambda, int t, double w)> decay;
  std::function<double(const UtilityBand& band, Role role)> opening_utility;
  // Returns a verdict to replace the floor/ceiling rule, or nullopt to keep it.
  std::function<std::optional<bool>(double offered, double limit, Role role)>
      accept_override;

  /// Next target utility for `role`, clamped to the band.
  double concede(double u_old, double lambda, int t, double w, Role role,
                 const UtilityBand& band) const {
    const double lowered = decay(u_old, lambda, t, w);
    const double next = role == Role::kSeller ? lowered : u_old + (u_old - lowered);
    return band.clamp(next);
  }
};

inline constexpr const char* kLinearStrategy = "linear";

inline Strategy linear_strategy() {
  return Strategy{
      kLinearStrategy,
      [](double u_old, double lambda, int t, double w) {
        return decay_utility(u_old, lambda, t, w);
      },
      [](const UtilityBand& band, Role role) {
        return role == Role::kSeller ? band.u_max : band.u_min;
      },
      nullptr};
}

class StrategyRegistry {
 public:
  StrategyRegistry() { strategies_.emplace(kLinearStrategy, linear_strategy()); }

  void register_strategy(const std::string& name, Strategy strategy) {
    std::lock_guard lock(mutex_);
    if (strategies_.contains(name)) fail(ErrorCode::kDuplicateStrategy, name);
    if (!strategy.decay) fail(ErrorCode::kPrecondition, "strategy needs a decay");
    if (!strategy.opening_utility) {
      strategy.opening_utility = linear_strategy().opening_utility;
    }
    strategy.name = name;
    strategies_.emplace(name, std::move(strategy));
  }

  Strategy get(const std::string& name) const {
    std::lock_guard lock(mutex_);
    auto it = strategies_.find(name);
    if (it == strategies_.end()) fail(ErrorCode::kUnknownStrategy, name);
    return it->second;
  }

  bool contains(const std::string& name) const {
    std::lock_guard lock(mutex_);
    return strategies_.contains(name);
  }

  /// Switching is refused while the agent has a live session.
  void select_strategy(const AgentId& agent_id, const std::string& name) {
    std::lock_guard lock(mutex_);
    if (!strategies_.contains(name)) fail(ErrorCode::kUnknownStrategy, name);
    if (locked_.contains(agent_id)) {
      fail(ErrorCode::kStrategyLocked, agent_id + " is negotiating");
    }
    selected_[agent_id] = name;
  }

  std::string selected(const AgentId& agent_id) const {
    std::lock_guard lock(mutex_);
    auto it = selected_.find(agent_id);
    return it == selected_.end() ? kLinearStrategy : it->second;
  }

  Strategy strategy_for(const AgentId& agent_id) const { return get(selected(agent_id)); }

  void lock(const AgentId& agent_id) {
    std::lock_guard lock(mutex_);
    locked_.insert(agent_id);
  }

  void unlock(const AgentId& agent_id) {
    std::lock_guard lock(mutex_);
    locked_.erase(agent_id);
  }

 private:
  mutable std::mutex mutex_;
  std::map<std::string, Strategy> strategies_;
  std::map<AgentId, std::string> selected_;
  std::set<AgentId> locked_;
};

}  // namespace concord
