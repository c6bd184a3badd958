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

// Master coordinator: one per agent, owning a coordinator (session) per peer
// and choosing whom to finalize with among temporary agreements.

#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "concord/engine/session.hpp"
#include "concord/error.hpp"
#include "concord/repository.hpp"

namespace concord {

struct FinalizeCandidate {
  AgentId peer_id;
  double total = 0.0;
};

/// Most favourable peer: lowest total for a buyer, highest for a seller,
/// lowest agent id on ties.
inline AgentId choose_peer(Role role, std::span<const FinalizeCandidate> candidates) {
  if (candidates.empty()) fail(ErrorCode::kPrecondition, "nothing to finalize");
  const FinalizeCandidate* best = &candidates.front();
  for (const auto& c : candidates.subspan(1)) {
    const bool better = role == Role::kBuyer ? c.total < best->total : c.total > best->total;
    if (better || (c.total == best->total && c.peer_id < best->peer_id)) best = &c;
  }
  return best->peer_id;
}

struct FinalizeDecision {
  AgentId chosen;
  Message finalize;
  std::vector<Message> declines;
};

class MasterCoordinator {
 public:
  MasterCoordinator(AgentRecord record, Valuations valuations, Strategy strategy)
      : record_(std::move(record)),
        valuations_(std::move(valuations)),
        strategy_(std::move(strategy)) {}

  const AgentRecord& record() const { return record_; }
  const AgentId& agent_id() const { return record_.agent_id; }
  Role role() const { return record_.role; }
  const Valuations& valuations() const { return valuations_; }
  const Strategy& strategy() const { return strategy_; }

  NegotiationSession& open_session(const NegotiationId& id, const ProductSpec& product,
                                   const AgentId& peer_id, int round_limit) {
    if (sessions_.contains(peer_id)) {
      fail(ErrorCode::kPrecondition, agent_id() + " already negotiates with " + peer_id);
    }
    auto session = std::make_unique<NegotiationSession>(SessionConfig{
        id, product, agent_id(), role(), peer_id, valuations_, round_limit, strategy_});
    auto& ref = *session;
    sessions_.emplace(peer_id, std::move(session));
    return ref;
  }

  NegotiationSession& session(const AgentId& peer_id) {
    auto it = sessions_.find(peer_id);
    if (it == sessions_.end()) fail(ErrorCode::kUnknownAgent, peer_id);
    return *it->second;
  }

  bool any_active() const {
    return std::any_of(sessions_.begin(), sessions_.end(), [](const auto& kv) {
      return kv.second->status() == SessionStatus::kActive;
    });
  }

  std::vector<FinalizeCandidate> temp_agreed() const {
    std::vector<FinalizeCandidate> out;
    for (const auto& [peer, session] : sessions_) {
      if (session->status() == SessionStatus::kTempAgreed) {
        out.push_back({peer, session->sealed_total()});
      }
    }
    return out;
  }

  /// Finalizes with the most favourable temporary agreement and declines
  /// the rest.
  FinalizeDecision finalize() {
    const auto candidates = temp_agreed();
    return finalize_with(choose_peer(role(), candidates));
  }

  /// Finalizes with `chosen`, which must hold a temporary agreement.
  FinalizeDecision finalize_with(const AgentId& chosen) {
    FinalizeDecision decision;
    decision.chosen = chosen;
    auto& target = session(chosen);
    if (target.status() != SessionStatus::kTempAgreed) {
      fail(ErrorCode::kPrecondition, chosen + " holds no temporary agreement");
    }
    decision.finalize = target.close(MessageKind::kFinalize);
    decision.declines = decline_all();
    return decision;
  }

  /// Declines every remaining temporary agreement.
  std::vector<Message> decline_all() {
    std::vector<Message> declines;
    for (auto& [peer, session] : sessions_) {
      if (session->status() == SessionStatus::kTempAgreed) {
        declines.push_back(session->close(MessageKind::kDecline));
      }
    }
    return declines;
  }

 private:
  AgentRecord record_;
  Valuations valuations_;
  Strategy strategy_;
  std::map<AgentId, std::unique_ptr<NegotiationSession>> sessions_;
};

}  // namespace concord
