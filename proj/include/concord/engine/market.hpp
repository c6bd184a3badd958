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

// Negotiation market for one product: every buyer negotiates with every
// seller in parallel. Each call to step() is one round barrier: every
// unfinished pair delivers its pending turn, concurrently, and the pairs'
// received messages are appended to the transcript in pair order.
//
// When no pair is active the market settles. Buyers propose to sellers in
// the order of their own finalize choice, sellers hold the best proposal by
// theirs, and the stable result is closed with finalize/decline messages.

#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "concord/domain.hpp"
#include "concord/engine/coordinator.hpp"
#include "concord/engine/executor.hpp"
#include "concord/engine/link.hpp"
#include "concord/engine/session.hpp"
#include "concord/engine/strategy.hpp"
#include "concord/error.hpp"
#include "concord/repository.hpp"

namespace concord {

struct Participant {
  AgentRecord record;
  Valuations valuations;
  std::string strategy = kLinearStrategy;
};

struct SessionSnapshot {
  NegotiationId negotiation_id;
  AgentId self_id;
  int round = 0;
  SessionStatus status = SessionStatus::kActive;
  std::map<LeafId, ConcessionState> issues;

  bool operator==(const SessionSnapshot&) const = default;
};

inline SessionSnapshot snapshot_of(const NegotiationSession& s) {
  return {s.negotiation_id(), s.self_id(), s.round(), s.status(), s.issues()};
}

enum class PairResult { kActive, kAgreement, kRoundLimit, kFinalized, kDeclined };

inline std::string_view to_string(PairResult r) {
  switch (r) {
    case PairResult::kActive: return "active";
    case PairResult::kAgreement: return "temp_agreed";
    case PairResult::kRoundLimit: return "aborted_round_limit";
    case PairResult::kFinalized: return "finalized";
    case PairResult::kDeclined: return "declined";
  }
  return "?";
}

struct PairSummary {
  NegotiationId negotiation_id;
  AgentId buyer_id;
  AgentId seller_id;
  PairResult result = PairResult::kActive;
  int rounds = 0;
  PriceMap final_prices;
  double total = 0.0;
};

struct Deal {
  NegotiationId negotiation_id;
  AgentId buyer_id;
  AgentId seller_id;
  PriceMap final_prices;
  double total = 0.0;

  bool operator==(const Deal&) const = default;
};

inline NegotiationId pair_id(const NegotiationId& market, const AgentId& seller,
                             const AgentId& buyer) {
  return market + "/" + seller + "/" + buyer;
}

/// Buyer-proposing deferred acceptance over temporary agreements.
/// `totals[{buyer, seller}]` is the sealed total of that pair.
inline std::map<AgentId, AgentId> stable_matching(
    const std::vector<AgentId>& buyers,
    const std::map<std::pair<AgentId, AgentId>, double>& totals) {
  std::map<AgentId, std::set<AgentId>> rejected;
  std::map<AgentId, AgentId> held;  // seller -> buyer
  std::vector<AgentId> free(buyers.rbegin(), buyers.rend());
  while (!free.empty()) {
    const AgentId buyer = free.back();
    free.pop_back();
    std::vector<FinalizeCandidate> options;
    for (const auto& [key, total] : totals) {
      if (key.first == buyer && !rejected[buyer].contains(key.second)) {
        options.push_back({key.second, total});
      }
    }
    if (options.empty()) continue;
    const AgentId seller = choose_peer(Role::kBuyer, options);
    auto it = held.find(seller);
    if (it == held.end()) {
      held[seller] = buyer;
      continue;
    }
    const AgentId incumbent = it->second;
    const std::vector<FinalizeCandidate> offers{{incumbent, totals.at({incumbent, seller})},
                                                {buyer, totals.at({buyer, seller})}};
    const AgentId keep = choose_peer(Role::kSeller, offers);
    const AgentId loser = keep == buyer ? incumbent : buyer;
    held[seller] = keep;
    rejected[loser].insert(seller);
    free.push_back(loser);
  }
  std::map<AgentId, AgentId> by_buyer;
  for (const auto& [seller, buyer] : held) by_buyer[buyer] = seller;
  return by_buyer;
}

class Market {
 public:
  using BarrierObserver = std::function<void(int step, const std::vector<SessionSnapshot>&)>;

  Market(NegotiationId id, ProductSpec product, int round_limit,
         const StrategyRegistry& strategies, Executor& executor,
         LinkFactory links = in_process_links())
      : id_(std::move(id)),
        product_(std::move(product)),
        round_limit_(round_limit),
        strategies_(strategies),
        executor_(executor),
        links_(std::move(links)) {
    validate_tree(product_.tree);
  }

  Market(const Market&) = delete;
  Market& operator=(const Market&) = delete;

  const NegotiationId& id() const { return id_; }
  const ProductSpec& product() const { return product_; }
  int round_limit() const { return round_limit_; }

  void set_observer(BarrierObserver observer) { observer_ = std::move(observer); }

  /// Adds an agent, opening a session with every participant of the other
  /// role. Allowed until the market settles.
  void join(const Participant& p) {
    if (settled_) fail(ErrorCode::kPrecondition, "market " + id_ + " already settled");
    if (masters_.contains(p.record.agent_id)) {
      fail(ErrorCode::kDuplicateAgent, p.record.agent_id);
    }
    check_valuations(product_, p.valuations);
    auto master = std::make_unique<MasterCoordinator>(p.record, p.valuations,
                                                      strategies_.get(p.strategy));
    auto& self = *master;
    masters_.emplace(p.record.agent_id, std::move(master));
    participants_.push_back(p);
    (p.record.role == Role::kBuyer ? buyers_ : sellers_).push_back(p.record.agent_id);
    const auto& others = p.record.role == Role::kBuyer ? sellers_ : buyers_;
    for (const auto& other_id : others) {
      auto& other = *masters_.at(other_id);
      auto& seller = self.role() == Role::kSeller ? self : other;
      auto& buyer = self.role() == Role::kBuyer ? self : other;
      const auto nid = pair_id(id_, seller.agent_id(), buyer.agent_id());
      Pair pair;
      pair.negotiation_id = nid;
      pair.seller = &seller.open_session(nid, product_, buyer.agent_id(), round_limit_);
      pair.buyer = &buyer.open_session(nid, product_, seller.agent_id(), round_limit_);
      pair.link = links_();
      pairs_.push_back(std::move(pair));
    }
  }

  const std::vector<Participant>& participants() const { return participants_; }
  const std::vector<AgentId>& buyers() const { return buyers_; }
  const std::vector<AgentId>& sellers() const { return sellers_; }
  std::vector<AgentId> agent_ids() const {
    std::vector<AgentId> ids;
    for (const auto& p : participants_) ids.push_back(p.record.agent_id);
    return ids;
  }

  bool negotiating() const {
    return std::any_of(pairs_.begin(), pairs_.end(), [](const Pair& p) { return !p.done; });
  }

  bool settled() const { return settled_; }

  /// One round barrier. Returns false when nothing was left to do.
  bool step() {
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < pairs_.size(); ++i) {
      if (!pairs_[i].done) active.push_back(i);
    }
    if (active.empty()) return false;
    executor_.parallel_for(active.size(), [&](std::size_t k) { advance(pairs_[active[k]]); });
    for (auto index : active) {
      auto& pair = pairs_[index];
      for (auto& m : pair.inbox) {
        if (m.is_proposal()) ++offers_generated_;
        transcript_.push_back(std::move(m));
      }
      pair.inbox.clear();
    }
    ++steps_;
    if (observer_) observer_(steps_, snapshot());
    return true;
  }

  /// Steps until every pair is done, then settles.
  std::vector<Deal> run() {
    while (step()) {
    }
    return settle();
  }

  /// Closes all temporary agreements; requires every pair to be done.
  std::vector<Deal> settle() {
    if (negotiating()) fail(ErrorCode::kPrecondition, "market still negotiating");
    if (settled_) return deals_;
    std::map<std::pair<AgentId, AgentId>, double> totals;
    for (const auto& pair : pairs_) {
      if (pair.buyer->status() == SessionStatus::kTempAgreed &&
          pair.seller->status() == SessionStatus::kTempAgreed) {
        totals[{pair.buyer->self_id(), pair.seller->self_id()}] = pair.buyer->sealed_total();
      }
    }
    const auto matches = stable_matching(buyers_, totals);

    std::vector<std::pair<Pair*, std::vector<std::pair<Role, Message>>>> outgoing;
    for (auto& pair : pairs_) {
      if (pair.buyer->status() != SessionStatus::kTempAgreed) continue;
      auto it = matches.find(pair.buyer->self_id());
      const bool chosen = it != matches.end() && it->second == pair.seller->self_id();
      const auto kind = chosen ? MessageKind::kFinalize : MessageKind::kDecline;
      outgoing.push_back({&pair,
                          {{Role::kBuyer, pair.buyer->close(kind)},
                           {Role::kSeller, pair.seller->close(kind)}}});
      if (chosen) {
        deals_.push_back({pair.negotiation_id, pair.buyer->self_id(), pair.seller->self_id(),
                          pair.buyer->sealed_prices(), pair.buyer->sealed_total()});
      }
    }
    for (auto& [pair, messages] : outgoing) {
      for (const auto& [from, m] : messages) pair->link->send(from, m);
      for (Role to : {Role::kSeller, Role::kBuyer}) {
        auto& session = to == Role::kSeller ? *pair->seller : *pair->buyer;
        for (const auto& m : pair->link->receive(to)) {
          session.step_round(m, executor_);
          transcript_.push_back(m);
        }
      }
    }
    settled_ = true;
    ++steps_;
    if (observer_) observer_(steps_, snapshot());
    return deals_;
  }

  const std::vector<Message>& transcript() const { return transcript_; }
  const std::vector<Deal>& deals() const { return deals_; }
  std::uint64_t offers_generated() const { return offers_generated_; }
  int steps() const { return steps_; }

  std::vector<SessionSnapshot> snapshot() const {
    std::vector<SessionSnapshot> out;
    for (const auto& pair : pairs_) {
      out.push_back(snapshot_of(*pair.seller));
      out.push_back(snapshot_of(*pair.buyer));
    }
    return out;
  }

  std::vector<PairSummary> summaries() const {
    std::vector<PairSummary> out;
    for (const auto& pair : pairs_) {
      PairSummary s;
      s.negotiation_id = pair.negotiation_id;
      s.buyer_id = pair.buyer->self_id();
      s.seller_id = pair.seller->self_id();
      s.rounds = std::max(pair.buyer->round(), pair.seller->round());
      const auto status = pair.buyer->status();
      if (status == SessionStatus::kFinalized) {
        s.result = PairResult::kFinalized;
      } else if (status == SessionStatus::kDeclined) {
        s.result = PairResult::kDeclined;
      } else if (status == SessionStatus::kTempAgreed) {
        s.result = PairResult::kAgreement;
      } else if (status == SessionStatus::kActive) {
        s.result = PairResult::kActive;
      } else {
        s.result = PairResult::kRoundLimit;
      }
      if (status == SessionStatus::kFinalized || status == SessionStatus::kDeclined ||
          status == SessionStatus::kTempAgreed) {
        s.final_prices = pair.buyer->sealed_prices();
        s.total = pair.buyer->sealed_total();
      }
      out.push_back(std::move(s));
    }
    return out;
  }

  MasterCoordinator& master(const AgentId& agent_id) {
    auto it = masters_.find(agent_id);
    if (it == masters_.end()) fail(ErrorCode::kUnknownAgent, agent_id);
    return *it->second;
  }

 private:
  struct Pair {
    NegotiationId negotiation_id;
    NegotiationSession* seller = nullptr;
    NegotiationSession* buyer = nullptr;
    std::unique_ptr<Link> link;
    std::vector<Message> inbox;  // received during the current step
    bool started = false;
    bool done = false;
  };

  // One turn of one pair. Only this pair's state is touched.
  void advance(Pair& pair) {
    if (!pair.started) {
      pair.started = true;
      pair.link->send(Role::kSeller, pair.seller->initial_offer());
      return;
    }
    auto to_seller = pair.link->receive(Role::kSeller);
    auto to_buyer = pair.link->receive(Role::kBuyer);
    deliver(pair, Role::kSeller, to_seller);
    deliver(pair, Role::kBuyer, to_buyer);
    const bool open = pair.seller->status() == SessionStatus::kActive ||
                      pair.buyer->status() == SessionStatus::kActive;
    pair.done = !open && pair.link->idle();
  }

  void deliver(Pair& pair, Role to, const std::vector<Message>& messages) {
    auto& session = to == Role::kSeller ? *pair.seller : *pair.buyer;
    for (const auto& m : messages) {
      pair.inbox.push_back(m);
      auto result = session.step_round(m, executor_);
      for (const auto& out : result.outgoing) pair.link->send(to, out);
    }
  }

  NegotiationId id_;
  ProductSpec product_;
  int round_limit_;
  const StrategyRegistry& strategies_;
  Executor& executor_;
  LinkFactory links_;
  BarrierObserver observer_;
  std::map<AgentId, std::unique_ptr<MasterCoordinator>> masters_;
  std::vector<Participant> participants_;
  std::vector<AgentId> buyers_;
  std::vector<AgentId> sellers_;
  std::vector<Pair> pairs_;
  std::vector<Message> transcript_;
  std::vector<Deal> deals_;
  std::uint64_t offers_generated_ = 0;
  int steps_ = 0;
  bool settled_ = false;
};

}  // namespace concord
