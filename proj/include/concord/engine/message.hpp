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

// The six inter-agent primitives and their line-delimited JSON encoding:
//   {"kind", "negotiation_id", "sender", "round", "payload"}
// Offer/counteroffer payloads map leaf id to price, accept payloads list the
// accepted leaf ids, and the closing primitives carry a null payload.

#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "concord/domain.hpp"
#include "concord/error.hpp"
#include "concord/repository.hpp"

namespace concord {

enum class MessageKind { kOffer, kCounterOffer, kAccept, kFinalize, kDecline, kWithdraw };

inline std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::kOffer: return "offer";
    case MessageKind::kCounterOffer: return "counteroffer";
    case MessageKind::kAccept: return "accept";
    case MessageKind::kFinalize: return "finalize";
    case MessageKind::kDecline: return "decline";
    case MessageKind::kWithdraw: return "withdraw";
  }
  return "?";
}

inline std::optional<MessageKind> message_kind_from_string(std::string_view text) {
  for (auto kind : {MessageKind::kOffer, MessageKind::kCounterOffer,
                    MessageKind::kAccept, MessageKind::kFinalize,
                    MessageKind::kDecline, MessageKind::kWithdraw}) {
    if (to_string(kind) == text) return kind;
  }
  return std::nullopt;
}

using PriceMap = std::map<LeafId, double>;

struct Message {
  MessageKind kind = MessageKind::kOffer;
  NegotiationId negotiation_id;
  AgentId sender;
  int round = 0;
  PriceMap prices;               // offer, counteroffer
  std::vector<LeafId> accepted;  // accept

  bool is_proposal() const {
    return kind == MessageKind::kOffer || kind == MessageKind::kCounterOffer;
  }

  bool operator==(const Message&) const = default;
};

inline double total_price(const PriceMap& prices) {
  double total = 0.0;
  for (const auto& [leaf, price] : prices) total += price;
  return total;
}

inline void to_json(nlohmann::json& j, const Message& m) {
  j = nlohmann::json{{"kind", to_string(m.kind)},
                     {"negotiation_id", m.negotiation_id},
                     {"sender", m.sender},
                     {"round", m.round}};
  if (m.is_proposal()) {
    j["payload"] = m.prices;
  } else if (m.kind == MessageKind::kAccept) {
    j["payload"] = m.accepted;
  } else {
    j["payload"] = nullptr;
  }
}

/// Throws ProtocolError for anything that is valid JSON but not a message.
inline void from_json(const nlohmann::json& j, Message& m) {
  if (!j.is_object()) fail(ErrorCode::kProtocol, "message must be an object");
  for (const char* field : {"kind", "negotiation_id", "sender", "round", "payload"}) {
    if (!j.contains(field)) {
      fail(ErrorCode::kProtocol, std::string("missing field '") + field + "'");
    }
  }
  if (!j["kind"].is_string()) fail(ErrorCode::kProtocol, "kind must be a string");
  const auto kind = message_kind_from_string(j["kind"].get<std::string>());
  if (!kind) {
    fail(ErrorCode::kProtocol,
         "unknown message kind '" + j["kind"].get<std::string>() + "'");
  }
  if (!j["round"].is_number_integer() || j["round"].get<int>() < 0) {
    fail(ErrorCode::kProtocol, "round must be a non-negative integer");
  }
  if (!j["negotiation_id"].is_string() || !j["sender"].is_string()) {
    fail(ErrorCode::kProtocol, "negotiation_id and sender must be strings");
  }
  m = Message{};
  m.kind = *kind;
  m.negotiation_id = j["negotiation_id"].get<std::string>();
  m.sender = j["sender"].get<std::string>();
  m.round = j["round"].get<int>();
  const auto& payload = j["payload"];
  if (m.is_proposal()) {
    if (!payload.is_object()) fail(ErrorCode::kProtocol, "offer payload must be an object");
    for (const auto& [leaf, price] : payload.items()) {
      if (!price.is_number()) fail(ErrorCode::kProtocol, "price must be a number");
      m.prices[leaf] = price.get<double>();
    }
  } else if (m.kind == MessageKind::kAccept) {
    if (!payload.is_array()) fail(ErrorCode::kProtocol, "accept payload must be an array");
    for (const auto& leaf : payload) {
      if (!leaf.is_string()) fail(ErrorCode::kProtocol, "accepted leaf must be a string");
      m.accepted.push_back(leaf.get<std::string>());
    }
  } else if (!payload.is_null()) {
    fail(ErrorCode::kProtocol, "closing primitives carry a null payload");
  }
}

/// One wire line, without the trailing newline.
inline std::string encode_line(const Message& m) { return nlohmann::json(m).dump(); }

/// Parse failures and schema violations both surface as ProtocolError; the
/// former carry "parse" in the message so callers can tell them apart.
inline Message decode_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::kProtocol, std::string("parse: ") + e.what());
  }
  return j.get<Message>();
}

}  // namespace concord
