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

// Negotiation history: an append-only store of every market's transcript
// and outcome, used to suggest issue weights from past successes and to
// replay a record through the engine.

#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "concord/domain.hpp"
#include "concord/engine/coordinator.hpp"
#include "concord/engine/executor.hpp"
#include "concord/engine/market.hpp"
#include "concord/engine/message.hpp"
#include "concord/engine/strategy.hpp"
#include "concord/error.hpp"

namespace concord {

/// Everything needed to rebuild the market's sessions.
struct HistoryContext {
  ProductSpec product;
  int round_limit = 0;
  std::vector<Participant> participants;  // join order
};

struct Outcome {
  bool success = false;
  std::vector<Deal> deals;  // success
  std::string reason;       // failure

  bool operator==(const Outcome&) const = default;
};

struct HistoryRecord {
  NegotiationId negotiation_id;
  ProductId product_id;
  std::vector<AgentId> participants;
  std::vector<Message> transcript;
  Outcome outcome;
  std::map<AgentId, std::map<LeafId, double>> weights_used;
  std::uint64_t timestamp_seq = 0;
  HistoryContext context;
};

/// Builds the record for a settled market.
inline HistoryRecord make_record(const Market& market, std::uint64_t timestamp_seq) {
  if (!market.settled()) fail(ErrorCode::kPrecondition, "market not settled");
  HistoryRecord r;
  r.negotiation_id = market.id();
  r.product_id = market.product().product_id;
  r.participants = market.agent_ids();
  r.transcript = market.transcript();
  r.outcome.deals = market.deals();
  r.outcome.success = !r.outcome.deals.empty();
  if (!r.outcome.success) r.outcome.reason = std::string(to_string(AbortReason::kRoundLimit));
  for (const auto& p : market.participants()) {
    for (const auto& [leaf, v] : p.valuations) r.weights_used[p.record.agent_id][leaf] = v.weight;
  }
  r.timestamp_seq = timestamp_seq;
  r.context = {market.product(), market.round_limit(), market.participants()};
  return r;
}

struct ReplayResult {
  std::vector<Deal> deals;
  std::map<NegotiationId, std::pair<SessionStatus, SessionStatus>> statuses;  // seller, buyer
};

/// Feeds the recorded messages through fresh sessions built from the
/// record's context. Every message must be exactly what the engine emits at
/// that point; the first one that is not raises ReplayMismatch with its
/// index. The reconstructed outcome must equal the recorded one.
inline ReplayResult replay(const HistoryRecord& record, const StrategyRegistry& strategies) {
  InlineExecutor executor;
  const auto& ctx = record.context;
  std::map<AgentId, std::unique_ptr<MasterCoordinator>> masters;
  struct PairReplay {
    NegotiationSession* seller = nullptr;
    NegotiationSession* buyer = nullptr;
    std::deque<Message> expect_from_seller;
    std::deque<Message> expect_from_buyer;
  };
  std::vector<std::unique_ptr<PairReplay>> pairs;
  std::map<NegotiationId, PairReplay*> by_id;
  std::vector<AgentId> buyers;
  std::vector<AgentId> sellers;
  for (const auto& p : ctx.participants) {
    auto master = std::make_unique<MasterCoordinator>(p.record, p.valuations,
                                                      strategies.get(p.strategy));
    auto& self = *master;
    masters.emplace(p.record.agent_id, std::move(master));
    (p.record.role == Role::kBuyer ? buyers : sellers).push_back(p.record.agent_id);
    for (const auto& other_id : p.record.role == Role::kBuyer ? sellers : buyers) {
      if (other_id == p.record.agent_id) continue;
      auto& other = *masters.at(other_id);
      auto& seller = self.role() == Role::kSeller ? self : other;
      auto& buyer = self.role() == Role::kBuyer ? self : other;
      const auto nid = pair_id(record.negotiation_id, seller.agent_id(), buyer.agent_id());
      auto pair = std::make_unique<PairReplay>();
      pair->seller = &seller.open_session(nid, ctx.product, buyer.agent_id(), ctx.round_limit);
      pair->buyer = &buyer.open_session(nid, ctx.product, seller.agent_id(), ctx.round_limit);
      pair->expect_from_seller.push_back(pair->seller->initial_offer());
      by_id[nid] = pair.get();
      pairs.push_back(std::move(pair));
    }
  }

  std::vector<std::size_t> closing;
  for (std::size_t i = 0; i < record.transcript.size(); ++i) {
    const auto& m = record.transcript[i];
    if (m.kind == MessageKind::kFinalize || m.kind == MessageKind::kDecline) {
      closing.push_back(i);
      continue;
    }
    auto it = by_id.find(m.negotiation_id);
    if (it == by_id.end()) throw ReplayMismatch(i, "unknown negotiation " + m.negotiation_id);
    auto& pair = *it->second;
    const bool from_seller = m.sender == pair.seller->self_id();
    if (!from_seller && m.sender != pair.buyer->self_id()) {
      throw ReplayMismatch(i, "sender " + m.sender + " is not a party");
    }
    auto& expected = from_seller ? pair.expect_from_seller : pair.expect_from_buyer;
    if (expected.empty() || !(expected.front() == m)) {
      throw ReplayMismatch(i, "engine would not send " + encode_line(m));
    }
    expected.pop_front();
    auto& receiver = from_seller ? *pair.buyer : *pair.seller;
    auto& reply_queue = from_seller ? pair.expect_from_buyer : pair.expect_from_seller;
    try {
      auto result = receiver.step_round(m, executor);
      reply_queue.insert(reply_queue.end(), result.outgoing.begin(), result.outgoing.end());
    } catch (const Error& e) {
      throw ReplayMismatch(i, e.what());
    }
  }
  for (const auto& pair : pairs) {
    if (!pair->expect_from_seller.empty() || !pair->expect_from_buyer.empty()) {
      throw ReplayMismatch(record.transcript.size(), "transcript ends early");
    }
  }

  // Settlement, as the market performs it.
  std::map<std::pair<AgentId, AgentId>, double> totals;
  for (const auto& pair : pairs) {
    if (pair->buyer->status() == SessionStatus::kTempAgreed &&
        pair->seller->status() == SessionStatus::kTempAgreed) {
      totals[{pair->buyer->self_id(), pair->seller->self_id()}] = pair->buyer->sealed_total();
    }
  }
  const auto matches = stable_matching(buyers, totals);
  ReplayResult out;
  std::vector<Message> expected_closing;
  for (const auto& pair : pairs) {
    if (pair->buyer->status() != SessionStatus::kTempAgreed) continue;
    auto it = matches.find(pair->buyer->self_id());
    const bool chosen = it != matches.end() && it->second == pair->seller->self_id();
    const auto kind = chosen ? MessageKind::kFinalize : MessageKind::kDecline;
    expected_closing.push_back(pair->buyer->close(kind));
    expected_closing.push_back(pair->seller->close(kind));
    if (chosen) {
      out.deals.push_back({pair->buyer->negotiation_id(), pair->buyer->self_id(),
                           pair->seller->self_id(), pair->buyer->sealed_prices(),
                           pair->buyer->sealed_total()});
    }
  }
  for (std::size_t k = 0; k < std::max(closing.size(), expected_closing.size()); ++k) {
    const std::size_t index = k < closing.size() ? closing[k] : record.transcript.size();
    if (k >= closing.size() || k >= expected_closing.size() ||
        !(record.transcript[closing[k]] == expected_closing[k])) {
      throw ReplayMismatch(index, "closing messages differ");
    }
  }
  for (const auto& pair : pairs) {
    out.statuses[pair->seller->negotiation_id()] = {pair->seller->status(),
                                                    pair->buyer->status()};
  }
  Outcome replayed{!out.deals.empty(), out.deals,
                   out.deals.empty() ? std::string(to_string(AbortReason::kRoundLimit)) : ""};
  if (!(replayed == record.outcome)) {
    throw ReplayMismatch(record.transcript.size(), "outcome differs from the record");
  }
  return out;
}

inline void to_json(nlohmann::json& j, const HistoryRecord& r);
inline void from_json(const nlohmann::json& j, HistoryRecord& r);

inline constexpr int kHistoryVersion = 1;

class HistoryStore {
 public:
  HistoryStore() = default;
  HistoryStore(const HistoryStore&) = delete;
  HistoryStore& operator=(const HistoryStore&) = delete;

  /// Returns the record's position in the store.
  std::size_t append(HistoryRecord record) {
    if (record.transcript.empty()) fail(ErrorCode::kPrecondition, "empty transcript");
    if (record.outcome.success) {
      const auto leaves = validate_tree(record.context.product.tree);
      for (const auto& deal : record.outcome.deals) {
        for (const auto& leaf : leaves) {
          if (!deal.final_prices.contains(leaf)) {
            fail(ErrorCode::kPrecondition, "deal does not price '" + leaf + "'");
          }
        }
      }
    }
    std::unique_lock lock(mutex_);
    if (index_.contains(record.negotiation_id)) {
      fail(ErrorCode::kDuplicateRecord, record.negotiation_id);
    }
    index_[record.negotiation_id] = records_.size();
    records_.push_back(std::move(record));
    return records_.size() - 1;
  }

  std::optional<HistoryRecord> get(const NegotiationId& id) const {
    std::shared_lock lock(mutex_);
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return records_[it->second];
  }

  std::vector<HistoryRecord> by_product(const ProductId& product_id) const {
    std::shared_lock lock(mutex_);
    std::vector<HistoryRecord> out;
    for (const auto& r : records_) {
      if (r.product_id == product_id) out.push_back(r);
    }
    return out;
  }

  std::vector<HistoryRecord> records() const {
    std::shared_lock lock(mutex_);
    return {records_.begin(), records_.end()};
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return records_.size();
  }

  /// Mean weight per leaf over the agents that closed deals in successful
  /// records for the product; unit weights when there are none.
  std::map<LeafId, double> suggest_weights(const ProductId& product_id,
                                           std::span<const LeafId> leaf_ids) const {
    std::map<LeafId, std::vector<double>> samples;
    {
      std::shared_lock lock(mutex_);
      for (const auto& r : records_) {
        if (r.product_id != product_id || !r.outcome.success) continue;
        for (const auto& deal : r.outcome.deals) {
          for (const auto& agent : {deal.buyer_id, deal.seller_id}) {
            auto it = r.weights_used.find(agent);
            if (it == r.weights_used.end()) continue;
            for (const auto& leaf : leaf_ids) {
              auto w = it->second.find(leaf);
              if (w != it->second.end() && w->second > 0.0) samples[leaf].push_back(w->second);
            }
          }
        }
      }
    }
    std::map<LeafId, double> out;
    for (const auto& leaf : leaf_ids) {
      auto& values = samples[leaf];
      if (values.empty()) {
        out[leaf] = 1.0;
        continue;
      }
      // Sorted so the sum does not depend on record order.
      std::sort(values.begin(), values.end());
      double sum = 0.0;
      for (double v : values) sum += v;
      out[leaf] = sum / static_cast<double>(values.size());
    }
    return out;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
    write(out);
  }

  void write(std::ostream& out) const {
    std::shared_lock lock(mutex_);
    out << nlohmann::json{{"concord_history", kHistoryVersion}}.dump() << '\n';
    for (const auto& r : records_) out << nlohmann::json(r).dump() << '\n';
  }

  void load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) fail(ErrorCode::kIo, "empty history file");
    try {
      const auto header = nlohmann::json::parse(line);
      if (header.value("concord_history", 0) != kHistoryVersion) {
        fail(ErrorCode::kIo, "unsupported history version");
      }
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        append(nlohmann::json::parse(line).get<HistoryRecord>());
      }
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kIo, std::string("bad history file: ") + e.what());
    }
  }

 private:
  mutable std::shared_mutex mutex_;
  std::deque<HistoryRecord> records_;
  std::map<NegotiationId, std::size_t> index_;
};

// JSON

inline void to_json(nlohmann::json& j, const Deal& d) {
  j = nlohmann::json{{"negotiation_id", d.negotiation_id},
                     {"buyer", d.buyer_id},
                     {"seller", d.seller_id},
                     {"final_prices", d.final_prices},
                     {"total", d.total}};
}

inline void from_json(const nlohmann::json& j, Deal& d) {
  j.at("negotiation_id").get_to(d.negotiation_id);
  j.at("buyer").get_to(d.buyer_id);
  j.at("seller").get_to(d.seller_id);
  j.at("final_prices").get_to(d.final_prices);
  j.at("total").get_to(d.total);
}

inline nlohmann::json participant_json(const Participant& p) {
  nlohmann::json valuations;
  valuations_to_json(valuations, p.valuations);
  return {{"agent", Repository::record_json(p.record)},
          {"valuations", valuations},
          {"strategy", p.strategy}};
}

inline Participant participant_from_json(const nlohmann::json& j) {
  const auto& a = j.at("agent");
  Participant p;
  p.record = AgentRecord{a.at("agent_id").get<std::string>(), a.at("name").get<std::string>(),
                         a.at("address").get<std::string>(),
                         role_from_string(a.at("role").get<std::string>()),
                         a.at("allies").get<bool>(), a.at("priority").get<int>()};
  p.valuations = valuations_from_json(j.at("valuations"));
  p.strategy = j.value("strategy", std::string(kLinearStrategy));
  return p;
}

inline void to_json(nlohmann::json& j, const HistoryRecord& r) {
  nlohmann::json outcome;
  if (r.outcome.success) {
    outcome = {{"status", "success"}, {"deals", r.outcome.deals}};
  } else {
    outcome = {{"status", "failure"}, {"reason", r.outcome.reason}};
  }
  auto participants = nlohmann::json::array();
  for (const auto& p : r.context.participants) participants.push_back(participant_json(p));
  j = nlohmann::json{{"negotiation_id", r.negotiation_id},
                     {"product_id", r.product_id},
                     {"participants", r.participants},
                     {"transcript", r.transcript},
                     {"outcome", outcome},
                     {"weights_used", r.weights_used},
                     {"timestamp_seq", r.timestamp_seq},
                     {"context",
                      {{"product", r.context.product},
                       {"round_limit", r.context.round_limit},
                       {"participants", participants}}}};
}

inline void from_json(const nlohmann::json& j, HistoryRecord& r) {
  j.at("negotiation_id").get_to(r.negotiation_id);
  j.at("product_id").get_to(r.product_id);
  j.at("participants").get_to(r.participants);
  r.transcript.clear();
  for (const auto& m : j.at("transcript")) r.transcript.push_back(m.get<Message>());
  const auto& outcome = j.at("outcome");
  r.outcome = {};
  r.outcome.success = outcome.at("status").get<std::string>() == "success";
  if (r.outcome.success) {
    outcome.at("deals").get_to(r.outcome.deals);
  } else {
    outcome.at("reason").get_to(r.outcome.reason);
  }
  j.at("weights_used").get_to(r.weights_used);
  j.at("timestamp_seq").get_to(r.timestamp_seq);
  const auto& ctx = j.at("context");
  ctx.at("product").get_to(r.context.product);
  ctx.at("round_limit").get_to(r.context.round_limit);
  r.context.participants.clear();
  for (const auto& p : ctx.at("participants")) {
    r.context.participants.push_back(participant_from_json(p));
  }
}

}  // namespace concord
