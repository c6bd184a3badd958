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

// Condition checker: spawns a negotiation market for every product that has
// at least one buyer and one seller advertising, detects ally groups, and
// bounds the number of admitted parties with a waiting queue.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "concord/error.hpp"
#include "concord/repository.hpp"

namespace concord {

struct MarketSpawn {
  ProductId product_id;
  std::vector<AdId> buyer_ad_ids;
  std::vector<AdId> seller_ad_ids;
  std::vector<AgentId> buyer_ids;
  std::vector<AgentId> seller_ids;
};

/// Scans the repository product by product (ascending id). Every product with
/// both roles present yields one spawn; the spawned ads are consumed.
inline std::vector<MarketSpawn> scan(Repository& repo) {
  std::vector<MarketSpawn> spawns;
  for (const auto& product_id : repo.advertised_products()) {
    auto matches = repo.find_matches(product_id);
    if (matches.buyers.empty() || matches.sellers.empty()) continue;
    MarketSpawn spawn{product_id, {}, {}, {}, {}};
    for (const auto& ad : matches.buyers) {
      spawn.buyer_ad_ids.push_back(ad.ad_id);
      spawn.buyer_ids.push_back(ad.agent_id);
    }
    for (const auto& ad : matches.sellers) {
      spawn.seller_ad_ids.push_back(ad.ad_id);
      spawn.seller_ids.push_back(ad.agent_id);
    }
    std::vector<AdId> consumed = spawn.buyer_ad_ids;
    consumed.insert(consumed.end(), spawn.seller_ad_ids.begin(),
                    spawn.seller_ad_ids.end());
    repo.consume(consumed);
    spawns.push_back(std::move(spawn));
  }
  return spawns;
}

struct AllyGroup {
  ProductId product_id;
  Role role = Role::kBuyer;
  std::vector<AgentId> agent_ids;
  std::vector<AdId> ad_ids;
};

/// Same-role agents advertising `product_id` with the allies flag set. At
/// most one group per role; a lone volunteer forms no group.
inline std::vector<AllyGroup> detect_allies(const Repository& repo,
                                            const ProductId& product_id) {
  const auto matches = repo.find_matches(product_id);
  std::vector<AllyGroup> groups;
  for (const auto* side : {&matches.buyers, &matches.sellers}) {
    AllyGroup group{product_id, side == &matches.buyers ? Role::kBuyer
                                                        : Role::kSeller,
                    {}, {}};
    std::set<AgentId> seen;
    for (const auto& ad : *side) {
      auto agent = repo.find_agent(ad.agent_id);
      if (!agent || !agent->allies || !seen.insert(ad.agent_id).second) continue;
      group.agent_ids.push_back(ad.agent_id);
      group.ad_ids.push_back(ad.ad_id);
    }
    if (group.agent_ids.size() >= 2) groups.push_back(std::move(group));
  }
  return groups;
}

enum class QueuePolicy { kFcfs, kPriority };

inline std::string_view to_string(QueuePolicy policy) {
  return policy == QueuePolicy::kFcfs ? "fcfs" : "priority";
}

inline QueuePolicy queue_policy_from_string(std::string_view text) {
  if (text == "fcfs") return QueuePolicy::kFcfs;
  if (text == "priority") return QueuePolicy::kPriority;
  fail(ErrorCode::kScenario, "unknown queue policy '" + std::string(text) + "'");
}

struct QueueEntry {
  AgentId agent_id;
  std::uint64_t arrival_seq = 0;
  int priority = 0;

  bool operator==(const QueueEntry&) const = default;
};

struct Admitted {};
struct Queued {
  std::size_t position = 0;
};
using AdmitResult = std::variant<Admitted, Queued>;

/// Admission control for the whole system. Capacity counts admitted parties
/// across all products; everyone beyond it waits, ordered by arrival (FCFS)
/// or by descending priority with arrival as the tie-break.
class WaitingQueue {
 public:
  WaitingQueue(QueuePolicy policy, std::size_t capacity)
      : policy_(policy), capacity_(capacity) {
    if (capacity == 0) fail(ErrorCode::kPrecondition, "capacity must be positive");
  }

  AdmitResult admit(const AgentId& agent_id, int priority = 0) {
    std::lock_guard lock(mutex_);
    if (admitted_.contains(agent_id) || queued(agent_id)) {
      fail(ErrorCode::kAlreadyQueued, agent_id);
    }
    const std::uint64_t seq = next_seq_++;
    if (admitted_.size() < capacity_) {
      admitted_.insert(agent_id);
      return Admitted{};
    }
    QueueEntry entry{agent_id, seq, priority};
    auto pos = std::upper_bound(entries_.begin(), entries_.end(), entry,
                                [this](const QueueEntry& a, const QueueEntry& b) {
                                  return before(a, b);
                                });
    const auto position = static_cast<std::size_t>(pos - entries_.begin());
    entries_.insert(pos, std::move(entry));
    return Queued{position};
  }

  /// Frees the slot held by an admitted agent.
  void depart(const AgentId& agent_id) {
    std::lock_guard lock(mutex_);
    if (admitted_.erase(agent_id) == 0) fail(ErrorCode::kUnknownAgent, agent_id);
  }

  /// Admits the head of the queue if a slot is free.
  std::optional<AgentId> release_slot() {
    std::lock_guard lock(mutex_);
    if (entries_.empty() || admitted_.size() >= capacity_) return std::nullopt;
    AgentId head = entries_.front().agent_id;
    entries_.erase(entries_.begin());
    admitted_.insert(head);
    return head;
  }

  bool is_admitted(const AgentId& agent_id) const {
    std::lock_guard lock(mutex_);
    return admitted_.contains(agent_id);
  }

  std::size_t admitted_count() const {
    std::lock_guard lock(mutex_);
    return admitted_.size();
  }

  std::vector<QueueEntry> entries() const {
    std::lock_guard lock(mutex_);
    return entries_;
  }

  std::size_t capacity() const { return capacity_; }
  QueuePolicy policy() const { return policy_; }

 private:
  bool before(const QueueEntry& a, const QueueEntry& b) const {
    if (policy_ == QueuePolicy::kPriority && a.priority != b.priority) {
      return a.priority > b.priority;
    }
    return a.arrival_seq < b.arrival_seq;
  }

  bool queued(const AgentId& agent_id) const {
    return std::any_of(entries_.begin(), entries_.end(),
                       [&](const QueueEntry& e) { return e.agent_id == agent_id; });
  }

  mutable std::mutex mutex_;
  QueuePolicy policy_;
  std::size_t capacity_;
  std::uint64_t next_seq_ = 0;
  std::set<AgentId> admitted_;
  std::vector<QueueEntry> entries_;
};

}  // namespace concord
