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

// Single-context reference for a negotiation market. It follows the same
// protocol as the engine but shares none of its session, coordinator,
// executor or link code: plain loops over plain structs, one thread.
// Snapshots are produced at the same round barriers so the two can be
// compared state by state.

#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "concord/domain.hpp"
#include "concord/engine/market.hpp"
#include "concord/engine/message.hpp"
#include "concord/engine/session.hpp"

namespace concord::testing {

class ReferenceMarket {
 public:
  ReferenceMarket(std::string id, ProductSpec product, int round_limit)
      : id_(std::move(id)), product_(std::move(product)), round_limit_(round_limit) {
    leaves_ = dfs_leaves(product_.tree);
    scale_ = 1.0;
    for (const auto& a : product_.non_functional) scale_ *= a.multiplier;
  }

  void join(const Participant& p) {
    agents_.push_back(p);
    auto& mine = p.record.role == Role::kBuyer ? buyers_ : sellers_;
    const auto& others = p.record.role == Role::kBuyer ? sellers_ : buyers_;
    mine.push_back(agents_.size() - 1);
    for (auto other : others) {
      const auto& o = agents_[other];
      const auto& seller = p.record.role == Role::kSeller ? p : o;
      const auto& buyer = p.record.role == Role::kBuyer ? p : o;
      Pair pair;
      pair.id = id_ + "/" + seller.record.agent_id + "/" + buyer.record.agent_id;
      pair.seller = make_side(seller, buyer.record.agent_id, pair.id);
      pair.buyer = make_side(buyer, seller.record.agent_id, pair.id);
      pairs_.push_back(std::move(pair));
    }
  }

  /// Runs to completion, returning the state after every barrier.
  std::vector<std::vector<SessionSnapshot>> run() {
    std::vector<std::vector<SessionSnapshot>> barriers;
    for (;;) {
      bool any = false;
      for (auto& pair : pairs_) {
        if (pair.done) continue;
        any = true;
        advance(pair);
      }
      if (!any) break;
      barriers.push_back(snapshot());
    }
    settle();
    barriers.push_back(snapshot());
    return barriers;
  }

  const std::vector<Message>& transcript() const { return transcript_; }

 private:
  struct Issue {
    double u = 0.0;
    double lambda = 0.0;
    bool sealed = false;
    std::optional<double> price;
    std::optional<double> last_offer;
  };

  struct Side {
    std::string self;
    std::string peer;
    std::string nid;
    Role role = Role::kBuyer;
    Valuations val;
    std::map<std::string, double> lo, hi;
    std::map<std::string, Issue> issues;
    std::map<std::string, double> peer_offer;
    std::vector<std::string> fresh;  // sealed by the last evaluation
    int round = 0;
    bool offered = false;
    SessionStatus status = SessionStatus::kActive;
  };

  struct Pair {
    std::string id;
    Side seller;
    Side buyer;
    std::deque<Message> to_seller;
    std::deque<Message> to_buyer;
    std::vector<Message> seen;
    bool started = false;
    bool done = false;
  };

  static std::vector<std::string> dfs_leaves(const AttributeNode& n) {
    if (n.children.empty()) return {n.node_id};
    std::vector<std::string> out;
    for (const auto& c : n.children) {
      for (auto& l : dfs_leaves(c)) out.push_back(l);
    }
    return out;
  }

  Side make_side(const Participant& p, const std::string& peer, const std::string& nid) const {
    Side s;
    s.self = p.record.agent_id;
    s.peer = peer;
    s.nid = nid;
    s.role = p.record.role;
    s.val = p.valuations;
    for (const auto& leaf : leaves_) {
      const auto& v = p.valuations.at(leaf);
      s.lo[leaf] = scale_ * v.actual_cost;
      s.hi[leaf] = scale_ * v.cost_with_margin;
      s.issues[leaf].u = s.role == Role::kSeller ? s.hi[leaf] : s.lo[leaf];
    }
    return s;
  }

  Message proposal(Side& s, MessageKind kind) const {
    Message m{kind, s.nid, s.self, s.round, {}, {}};
    for (auto& [leaf, issue] : s.issues) {
      const double price = issue.price ? *issue.price : issue.u / scale_;
      issue.last_offer = price;
      m.prices[leaf] = price;
    }
    return m;
  }

  bool all_sealed(const Side& s) const {
    for (const auto& [leaf, issue] : s.issues) {
      if (!issue.sealed) return false;
    }
    return true;
  }

  std::vector<Message> react(Side& s, const Message& in) const {
    Message out_accept{MessageKind::kAccept, s.nid, s.self, 0, {}, {}};
    Message withdraw{MessageKind::kWithdraw, s.nid, s.self, 0, {}, {}};
    switch (in.kind) {
      case MessageKind::kWithdraw:
        s.status = SessionStatus::kWithdrawn;
        return {};
      case MessageKind::kFinalize:
        s.status = SessionStatus::kFinalized;
        return {};
      case MessageKind::kDecline:
        s.status = SessionStatus::kDeclined;
        return {};
      case MessageKind::kAccept:
        for (const auto& leaf : in.accepted) {
          auto& issue = s.issues.at(leaf);
          issue.sealed = true;
          issue.price = issue.last_offer;
        }
        if (all_sealed(s)) s.status = SessionStatus::kTempAgreed;
        return {};
      default:
        break;
    }
    if (round_limit_ == 0) {
      s.status = SessionStatus::kAborted;
      withdraw.round = s.round;
      return {withdraw};
    }
    s.fresh.clear();
    for (const auto& leaf : leaves_) {
      auto& issue = s.issues.at(leaf);
      if (issue.sealed) continue;
      const double x = in.prices.at(leaf);
      const bool ok = s.role == Role::kSeller ? x >= s.lo.at(leaf) / scale_
                                              : x <= s.hi.at(leaf) / scale_;
      if (ok) {
        issue.sealed = true;
        issue.price = x;
        s.fresh.push_back(leaf);
      }
    }
    s.peer_offer = in.prices;
    out_accept.round = s.round;
    out_accept.accepted = s.fresh;
    if (all_sealed(s)) {
      s.status = SessionStatus::kTempAgreed;
      return {out_accept};
    }
    if (s.round >= round_limit_) {
      s.status = SessionStatus::kAborted;
      withdraw.round = s.round;
      return {withdraw};
    }
    std::vector<Message> out;
    if (!s.fresh.empty()) out.push_back(out_accept);
    if (!s.offered) {
      s.offered = true;
      out.push_back(proposal(s, MessageKind::kOffer));
      return out;
    }
    // lambda over the still-open issues, then one concession step each
    double gap = 0.0;
    double weighted = 0.0;
    for (const auto& [leaf, issue] : s.issues) {
      if (issue.sealed) continue;
      gap += s.hi.at(leaf) - s.lo.at(leaf);
      weighted += s.peer_offer.at(leaf) / s.val.at(leaf).weight;
    }
    const double lambda =
        weighted == 0.0 ? 0.0 : std::max(0.0, gap / static_cast<double>(round_limit_ - s.round) / weighted);
    const int t = s.round + 1;
    for (auto& [leaf, issue] : s.issues) {
      if (issue.sealed) continue;
      const double w = s.val.at(leaf).weight;
      const double down = issue.u * (1.0 - lambda * static_cast<double>(t) / w);
      const double next = s.role == Role::kSeller ? down : issue.u + (issue.u - down);
      issue.u = std::clamp(next, s.lo.at(leaf), s.hi.at(leaf));
      issue.lambda = lambda;
    }
    s.round = t;
    out.push_back(proposal(s, MessageKind::kCounterOffer));
    return out;
  }

  void advance(Pair& pair) {
    if (!pair.started) {
      pair.started = true;
      pair.seller.offered = true;
      pair.to_buyer.push_back(proposal(pair.seller, MessageKind::kOffer));
      return;
    }
    std::deque<Message> for_seller;
    std::deque<Message> for_buyer;
    for_seller.swap(pair.to_seller);
    for_buyer.swap(pair.to_buyer);
    for (const auto& m : for_seller) {
      transcript_.push_back(m);
      for (auto& r : react(pair.seller, m)) pair.to_buyer.push_back(r);
    }
    for (const auto& m : for_buyer) {
      transcript_.push_back(m);
      for (auto& r : react(pair.buyer, m)) pair.to_seller.push_back(r);
    }
    const bool open = pair.seller.status == SessionStatus::kActive ||
                      pair.buyer.status == SessionStatus::kActive;
    pair.done = !open && pair.to_seller.empty() && pair.to_buyer.empty();
  }

  static double total(const Side& s) {
    double sum = 0.0;
    for (const auto& [leaf, issue] : s.issues) sum += *issue.price;
    return sum;
  }

  // Buyers propose in their preference order; a seller keeps the proposal
  // it prefers. Preferences: buyer lowest total, seller highest, ties to the
  // lower id.
  void settle() {
    std::map<std::string, std::vector<std::pair<double, std::string>>> prefs;  // buyer -> (total, seller)
    std::map<std::pair<std::string, std::string>, double> totals;
    for (const auto& pair : pairs_) {
      if (pair.buyer.status == SessionStatus::kTempAgreed &&
          pair.seller.status == SessionStatus::kTempAgreed) {
        const double t = total(pair.buyer);
        prefs[pair.buyer.self].push_back({t, pair.seller.self});
        totals[{pair.buyer.self, pair.seller.self}] = t;
      }
    }
    for (auto& [buyer, list] : prefs) std::sort(list.begin(), list.end());
    std::map<std::string, std::size_t> next;
    std::map<std::string, std::string> held;  // seller -> buyer
    std::deque<std::string> free;
    for (auto b : buyers_) free.push_back(agents_[b].record.agent_id);
    while (!free.empty()) {
      const auto buyer = free.front();
      free.pop_front();
      auto& list = prefs[buyer];
      if (next[buyer] >= list.size()) continue;
      const auto seller = list[next[buyer]++].second;
      auto it = held.find(seller);
      if (it == held.end()) {
        held[seller] = buyer;
        continue;
      }
      const auto incumbent = it->second;
      const double mine = totals.at({buyer, seller});
      const double theirs = totals.at({incumbent, seller});
      if (mine > theirs || (mine == theirs && buyer < incumbent)) {
        it->second = buyer;
        free.push_front(incumbent);
      } else {
        free.push_front(buyer);
      }
    }
    std::set<std::pair<std::string, std::string>> chosen;
    for (const auto& [seller, buyer] : held) chosen.insert({buyer, seller});
    for (auto& pair : pairs_) {
      if (pair.buyer.status != SessionStatus::kTempAgreed) continue;
      const bool win = chosen.contains({pair.buyer.self, pair.seller.self});
      const auto kind = win ? MessageKind::kFinalize : MessageKind::kDecline;
      const auto status = win ? SessionStatus::kFinalized : SessionStatus::kDeclined;
      transcript_.push_back({kind, pair.id, pair.buyer.self, pair.buyer.round, {}, {}});
      transcript_.push_back({kind, pair.id, pair.seller.self, pair.seller.round, {}, {}});
      pair.buyer.status = status;
      pair.seller.status = status;
    }
  }

  std::vector<SessionSnapshot> snapshot() const {
    std::vector<SessionSnapshot> out;
    for (const auto& pair : pairs_) {
      for (const Side* s : {&pair.seller, &pair.buyer}) {
        SessionSnapshot snap;
        snap.negotiation_id = s->nid;
        snap.self_id = s->self;
        snap.round = s->round;
        snap.status = s->status;
        for (const auto& [leaf, issue] : s->issues) {
          ConcessionState c;
          c.leaf_id = leaf;
          c.u_target = issue.u;
          c.lambda = issue.lambda;
          c.accepted = issue.sealed;
          c.sealed_price = issue.price;
          c.last_offer = issue.last_offer;
          snap.issues[leaf] = c;
        }
        out.push_back(std::move(snap));
      }
    }
    return out;
  }

  std::string id_;
  ProductSpec product_;
  int round_limit_;
  std::vector<std::string> leaves_;
  double scale_ = 1.0;
  std::vector<Participant> agents_;
  std::vector<std::size_t> buyers_;
  std::vector<std::size_t> sellers_;
  std::vector<Pair> pairs_;
  std::vector<Message> transcript_;
};

}  // namespace concord::testing
