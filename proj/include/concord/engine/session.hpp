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

// One side of a bilateral multi-issue negotiation. The seller opens at its
// maximum utility, the buyer answers at its minimum, and from then on each
// rejected issue concedes along the strategy's decay while accepted issues
// stay sealed at the accepted price.
//
// Per-issue evaluation and concession run as independent tasks on the
// executor; lambda and the round counter only change between those two
// phases, on the calling thread.

#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "concord/domain.hpp"
#include "concord/engine/concession.hpp"
#include "concord/engine/executor.hpp"
#include "concord/engine/message.hpp"
#include "concord/engine/strategy.hpp"
#include "concord/error.hpp"

namespace concord {

enum class SessionStatus { kActive, kTempAgreed, kFinalized, kDeclined, kAborted, kWithdrawn };

inline std::string_view to_string(SessionStatus status) {
  switch (status) {
    case SessionStatus::kActive: return "active";
    case SessionStatus::kTempAgreed: return "temp_agreed";
    case SessionStatus::kFinalized: return "finalized";
    case SessionStatus::kDeclined: return "declined";
    case SessionStatus::kAborted: return "aborted";
    case SessionStatus::kWithdrawn: return "withdrawn";
  }
  return "?";
}

enum class AbortReason { kNone, kRoundLimit, kPeerWithdrew };

inline std::string_view to_string(AbortReason reason) {
  switch (reason) {
    case AbortReason::kNone: return "none";
    case AbortReason::kRoundLimit: return "round_limit";
    case AbortReason::kPeerWithdrew: return "peer_withdrew";
  }
  return "?";
}

enum class Verdict { kAccept, kReject };

struct ConcessionState {
  LeafId leaf_id;
  double u_target = 0.0;
  double lambda = 0.0;
  bool accepted = false;
  std::optional<double> sealed_price;
  // Price this side last proposed for the issue.
  std::optional<double> last_offer;

  bool operator==(const ConcessionState&) const = default;
};

struct SessionConfig {
  NegotiationId negotiation_id;
  ProductSpec product;
  AgentId self_id;
  Role role = Role::kSeller;
  AgentId peer_id;
  Valuations valuations;
  int round_limit = 0;
  Strategy strategy = linear_strategy();
};

enum class StepOutcome { kContinue, kAgreement, kAborted };

struct StepResult {
  StepOutcome outcome = StepOutcome::kContinue;
  PriceMap final_prices;  // on agreement
  AbortReason reason = AbortReason::kNone;
  std::vector<Message> outgoing;
};

class NegotiationSession {
 public:
  explicit NegotiationSession(SessionConfig config) : config_(std::move(config)) {
    check_valuations(config_.product, config_.valuations);
    if (config_.round_limit < 0) fail(ErrorCode::kPrecondition, "negative round limit");
    leaves_ = validate_tree(config_.product.tree);
    for (const auto& leaf : leaves_) {
      const auto band = utility_band(config_.valuations.at(leaf), nf());
      bands_[leaf] = band;
      ConcessionState state;
      state.leaf_id = leaf;
      state.u_target = band.clamp(config_.strategy.opening_utility(band, config_.role));
      issues_[leaf] = state;
    }
  }

  const SessionConfig& config() const { return config_; }
  const NegotiationId& negotiation_id() const { return config_.negotiation_id; }
  const AgentId& self_id() const { return config_.self_id; }
  const AgentId& peer_id() const { return config_.peer_id; }
  Role role() const { return config_.role; }
  int round() const { return round_; }
  int round_limit() const { return config_.round_limit; }
  SessionStatus status() const { return status_; }
  AbortReason abort_reason() const { return reason_; }
  bool lambda_degenerate() const { return degenerate_; }
  const std::map<LeafId, ConcessionState>& issues() const { return issues_; }
  const std::map<LeafId, UtilityBand>& bands() const { return bands_; }
  const std::vector<LeafId>& leaves() const { return leaves_; }
  bool has_offered() const { return offered_; }

  /// Seller floor or buyer ceiling for an issue, in price units.
  double acceptable_limit(const LeafId& leaf) const {
    const auto& band = bands_.at(leaf);
    return price_at_utility(config_.role == Role::kSeller ? band.u_min : band.u_max, nf());
  }

  bool all_sealed() const {
    return std::all_of(issues_.begin(), issues_.end(),
                       [](const auto& kv) { return kv.second.accepted; });
  }

  PriceMap sealed_prices() const {
    PriceMap prices;
    for (const auto& [leaf, state] : issues_) {
      if (state.sealed_price) prices[leaf] = *state.sealed_price;
    }
    return prices;
  }

  double sealed_total() const { return total_price(sealed_prices()); }

  /// Opening proposal at the strategy's opening utility (seller: maximum,
  /// buyer: minimum). Sealed issues, if any, repeat their sealed price.
  Message initial_offer() {
    if (status_ != SessionStatus::kActive || round_ != 0 || offered_) {
      fail(ErrorCode::kPrecondition, "initial offer only once, at round 0");
    }
    if (leaves_.empty()) fail(ErrorCode::kPrecondition, "no issues to offer");
    offered_ = true;
    return proposal(MessageKind::kOffer);
  }

  /// Verdict per issue of `offer`. Newly accepted issues are sealed at the
  /// offered price; previously sealed issues must repeat their seal.
  std::map<LeafId, Verdict> evaluate_offer(const Message& offer, Executor& executor) {
    check_incoming_proposal(offer);
    std::vector<LeafId> open;
    for (const auto& leaf : leaves_) {
      if (!issues_.at(leaf).accepted) open.push_back(leaf);
    }
    std::vector<Verdict> verdicts(open.size());
    executor.parallel_for(open.size(), [&](std::size_t k) {
      verdicts[k] = judge(open[k], offer.prices.at(open[k]));
    });
    // barrier: seal on the calling thread
    std::map<LeafId, Verdict> out;
    for (const auto& [leaf, state] : issues_) {
      if (state.accepted) out[leaf] = Verdict::kAccept;
    }
    last_accepted_.clear();
    for (std::size_t k = 0; k < open.size(); ++k) {
      out[open[k]] = verdicts[k];
      if (verdicts[k] == Verdict::kAccept) {
        auto& state = issues_.at(open[k]);
        state.accepted = true;
        state.sealed_price = offer.prices.at(open[k]);
        last_accepted_.push_back(open[k]);
      }
    }
    peer_round_ = offer.round;
    last_peer_offer_ = offer.prices;
    return out;
  }

  /// Concedes on every rejected issue and proposes the next round.
  Message counter_offer(const std::map<LeafId, Verdict>& verdicts, Executor& executor) {
    if (status_ != SessionStatus::kActive) fail(ErrorCode::kPrecondition, "session not active");
    if (round_ >= config_.round_limit) fail(ErrorCode::kPrecondition, "round limit reached");
    std::vector<LeafId> rejected;
    for (const auto& [leaf, verdict] : verdicts) {
      if (verdict == Verdict::kReject) rejected.push_back(leaf);
    }
    if (rejected.empty()) {
      fail(ErrorCode::kPrecondition, "nothing rejected; finalize instead");
    }
    std::vector<UnacceptedIssue> open;
    for (const auto& leaf : rejected) {
      if (issues_.at(leaf).accepted) {
        fail(ErrorCode::kPrecondition, "rejected issue '" + leaf + "' is sealed");
      }
      auto it = last_peer_offer_.find(leaf);
      if (it == last_peer_offer_.end()) {
        fail(ErrorCode::kPrecondition, "no peer price for '" + leaf + "'");
      }
      open.push_back({it->second, config_.valuations.at(leaf).weight, bands_.at(leaf)});
    }
    const auto lambda = derive_lambda(open, config_.round_limit - round_);
    degenerate_ = lambda.degenerate;
    const int t = round_ + 1;
    std::vector<double> targets(rejected.size());
    executor.parallel_for(rejected.size(), [&](std::size_t k) {
      const auto& leaf = rejected[k];
      targets[k] = config_.strategy.concede(issues_.at(leaf).u_target, lambda.lambda, t,
                                            config_.valuations.at(leaf).weight,
                                            config_.role, bands_.at(leaf));
    });
    for (std::size_t k = 0; k < rejected.size(); ++k) {
      auto& state = issues_.at(rejected[k]);
      state.u_target = targets[k];
      state.lambda = lambda.lambda;
    }
    round_ = t;
    offered_ = true;
    return proposal(MessageKind::kCounterOffer);
  }

  /// Consumes one incoming message and returns what to send back.
  StepResult step_round(const Message& incoming, Executor& executor) {
    if (incoming.sender != config_.peer_id ||
        incoming.negotiation_id != config_.negotiation_id) {
      fail(ErrorCode::kProtocol, "message for another session");
    }
    switch (incoming.kind) {
      case MessageKind::kOffer:
      case MessageKind::kCounterOffer:
        return on_proposal(incoming, executor);
      case MessageKind::kAccept:
        return on_accept(incoming);
      case MessageKind::kWithdraw:
        require_status(SessionStatus::kActive, incoming);
        status_ = SessionStatus::kWithdrawn;
        reason_ = AbortReason::kPeerWithdrew;
        return {StepOutcome::kAborted, {}, reason_, {}};
      case MessageKind::kFinalize:
        if (status_ == SessionStatus::kFinalized) return {};
        require_status(SessionStatus::kTempAgreed, incoming);
        status_ = SessionStatus::kFinalized;
        return {};
      case MessageKind::kDecline:
        if (status_ == SessionStatus::kDeclined) return {};
        require_status(SessionStatus::kTempAgreed, incoming);
        status_ = SessionStatus::kDeclined;
        return {};
    }
    return {};
  }

  /// Closing primitive from this side. Finalize/Decline require a temporary
  /// agreement.
  Message close(MessageKind kind) {
    if (kind != MessageKind::kFinalize && kind != MessageKind::kDecline) {
      fail(ErrorCode::kPrecondition, "close() sends finalize or decline");
    }
    if (status_ != SessionStatus::kTempAgreed &&
        status_ != (kind == MessageKind::kFinalize ? SessionStatus::kFinalized
                                                   : SessionStatus::kDeclined)) {
      fail(ErrorCode::kPrecondition, "no temporary agreement to close");
    }
    status_ = kind == MessageKind::kFinalize ? SessionStatus::kFinalized
                                             : SessionStatus::kDeclined;
    return Message{kind, config_.negotiation_id, config_.self_id, round_, {}, {}};
  }

  /// The peer round expected on the next incoming proposal.
  int expected_peer_round() const { return peer_round_ + 1; }

 private:
  std::span<const NonFunctionalAttribute> nf() const {
    return config_.product.non_functional;
  }

  Verdict judge(const LeafId& leaf, double offered) const {
    const double limit = acceptable_limit(leaf);
    if (config_.strategy.accept_override) {
      if (auto v = config_.strategy.accept_override(offered, limit, config_.role)) {
        return *v ? Verdict::kAccept : Verdict::kReject;
      }
    }
    const bool ok = config_.role == Role::kSeller ? offered >= limit : offered <= limit;
    return ok ? Verdict::kAccept : Verdict::kReject;
  }

  Message proposal(MessageKind kind) {
    Message m{kind, config_.negotiation_id, config_.self_id, round_, {}, {}};
    for (auto& [leaf, state] : issues_) {
      const double price = state.sealed_price ? *state.sealed_price
                                              : price_at_utility(state.u_target, nf());
      state.last_offer = price;
      m.prices[leaf] = price;
    }
    return m;
  }

  void require_status(SessionStatus wanted, const Message& incoming) const {
    if (status_ != wanted) {
      fail(ErrorCode::kProtocol, std::string(to_string(incoming.kind)) +
                                     " while session is " +
                                     std::string(to_string(status_)));
    }
  }

  void check_incoming_proposal(const Message& offer) const {
    if (status_ != SessionStatus::kActive) {
      fail(ErrorCode::kProtocol, "proposal while session is " +
                                     std::string(to_string(status_)));
    }
    const int expected = expected_peer_round();
    const auto wanted = expected == 0 ? MessageKind::kOffer : MessageKind::kCounterOffer;
    if (offer.round != expected || offer.kind != wanted) {
      fail(ErrorCode::kProtocol, "expected " + std::string(to_string(wanted)) +
                                     " for round " + std::to_string(expected));
    }
    if (offer.prices.size() != leaves_.size()) {
      fail(ErrorCode::kProtocol, "proposal must price every issue");
    }
    for (const auto& [leaf, state] : issues_) {
      auto it = offer.prices.find(leaf);
      if (it == offer.prices.end()) fail(ErrorCode::kProtocol, "unpriced issue '" + leaf + "'");
      if (!(it->second >= 0.0)) fail(ErrorCode::kProtocol, "negative price for '" + leaf + "'");
      if (state.sealed_price && it->second != *state.sealed_price) {
        fail(ErrorCode::kProtocol, "sealed issue '" + leaf + "' changed price");
      }
    }
  }

  StepResult on_proposal(const Message& incoming, Executor& executor) {
    if (config_.round_limit == 0) {
      status_ = SessionStatus::kAborted;
      reason_ = AbortReason::kRoundLimit;
      return {StepOutcome::kAborted, {}, reason_, {withdraw()}};
    }
    const auto verdicts = evaluate_offer(incoming, executor);
    StepResult result;
    if (all_sealed()) {
      status_ = SessionStatus::kTempAgreed;
      result.outcome = StepOutcome::kAgreement;
      result.final_prices = sealed_prices();
      result.outgoing.push_back(accept_message());
      return result;
    }
    if (round_ >= config_.round_limit) {
      status_ = SessionStatus::kAborted;
      reason_ = AbortReason::kRoundLimit;
      return {StepOutcome::kAborted, {}, reason_, {withdraw()}};
    }
    if (!last_accepted_.empty()) result.outgoing.push_back(accept_message());
    result.outgoing.push_back(offered_ ? counter_offer(verdicts, executor) : initial_offer());
    return result;
  }

  StepResult on_accept(const Message& incoming) {
    if (status_ != SessionStatus::kActive) {
      fail(ErrorCode::kProtocol, "accept while session is " + std::string(to_string(status_)));
    }
    if (incoming.accepted.empty()) fail(ErrorCode::kProtocol, "empty accept");
    for (const auto& leaf : incoming.accepted) {
      auto it = issues_.find(leaf);
      if (it == issues_.end()) fail(ErrorCode::kProtocol, "accept of unknown issue '" + leaf + "'");
      auto& state = it->second;
      if (state.accepted) fail(ErrorCode::kProtocol, "issue '" + leaf + "' already sealed");
      if (!state.last_offer) fail(ErrorCode::kProtocol, "issue '" + leaf + "' never offered");
      state.accepted = true;
      state.sealed_price = state.last_offer;
    }
    if (all_sealed()) {
      status_ = SessionStatus::kTempAgreed;
      return {StepOutcome::kAgreement, sealed_prices(), AbortReason::kNone, {}};
    }
    return {};
  }

  Message accept_message() const {
    return Message{MessageKind::kAccept, config_.negotiation_id, config_.self_id, round_, {},
                   last_accepted_};
  }

  Message withdraw() const {
    return Message{MessageKind::kWithdraw, config_.negotiation_id, config_.self_id, round_,
                   {}, {}};
  }

  SessionConfig config_;
  std::vector<LeafId> leaves_;
  std::map<LeafId, UtilityBand> bands_;
  std::map<LeafId, ConcessionState> issues_;
  std::vector<LeafId> last_accepted_;
  PriceMap last_peer_offer_;
  SessionStatus status_ = SessionStatus::kActive;
  AbortReason reason_ = AbortReason::kNone;
  int round_ = 0;
  int peer_round_ = -1;
  bool offered_ = false;
  bool degenerate_ = false;
};

}  // namespace concord
