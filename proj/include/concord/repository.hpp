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

// Advertisement repository: agent, product, attribute, advertisement and
// ongoing-negotiation tables, with validity-counter expiry and JSON
// snapshots.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "concord/domain.hpp"
#include "concord/error.hpp"
#include "concord/event_log.hpp"

namespace concord {

using AdId = std::string;
using NegotiationId = std::string;

struct AgentRecord {
  AgentId agent_id;
  std::string name;
  std::string address;
  Role role = Role::kBuyer;
  bool allies = false;
  int priority = 0;

  bool operator==(const AgentRecord&) const = default;
};

struct Advertisement {
  AdId ad_id;
  ProductId product_id;
  AgentId agent_id;
  int validity_counter = 0;

  bool operator==(const Advertisement&) const = default;
};

struct OngoingNegotiationEntry {
  NegotiationId negotiation_id;
  ProductId product_id;
  std::set<AgentId> agent_ids;
  std::uint64_t offers_generated = 0;

  bool operator==(const OngoingNegotiationEntry&) const = default;
};

enum class Disposition { kConsumed, kExpired };

struct ArchivedAdvertisement {
  Advertisement ad;
  Disposition disposition = Disposition::kConsumed;

  bool operator==(const ArchivedAdvertisement&) const = default;
};

struct ProductRow {
  ProductId product_id;
  std::string product_name;
  NonFunctionalList non_functional;

  bool operator==(const ProductRow&) const = default;
};

struct ProductAttributeRow {
  ProductId product_id;
  AttributeRow row;

  bool operator==(const ProductAttributeRow&) const = default;
};

/// Table-by-table copy of a repository. Live advertisements are kept in
/// submission order.
struct RepositoryState {
  std::map<AgentId, AgentRecord> agents;
  std::map<ProductId, ProductRow> products;
  std::vector<ProductAttributeRow> attributes;
  std::vector<Advertisement> advertisements;
  std::map<NegotiationId, OngoingNegotiationEntry> ongoing;
  std::vector<ArchivedAdvertisement> archive;

  bool operator==(const RepositoryState&) const = default;
};

struct MatchSet {
  std::vector<Advertisement> buyers;
  std::vector<Advertisement> sellers;
};

inline void to_json(nlohmann::json& j, const RepositoryState& s);
inline void from_json(const nlohmann::json& j, RepositoryState& s);

/// Readers take a shared lock; every mutation goes through the single
/// exclusive writer path. Query results are copies.
class Repository {
 public:
  Repository() = default;
  explicit Repository(EventLog* log) : log_(log) {}

  Repository(const Repository&) = delete;
  Repository& operator=(const Repository&) = delete;

  void attach_log(EventLog* log) {
    std::unique_lock lock(mutex_);
    log_ = log;
  }

  ProductId register_product(const ProductSpec& product) {
    validate_tree(product.tree);
    multiplier_product(product.non_functional);
    std::unique_lock lock(mutex_);
    if (products_.contains(product.product_id)) {
      fail(ErrorCode::kDuplicateProduct, product.product_id);
    }
    products_[product.product_id] = product;
    emit("register_product", nlohmann::json(product));
    return product.product_id;
  }

  AgentId register_agent(const AgentRecord& record) {
    std::unique_lock lock(mutex_);
    if (agents_.contains(record.agent_id)) {
      fail(ErrorCode::kDuplicateAgent, record.agent_id);
    }
    agents_[record.agent_id] = record;
    emit("register_agent", record_json(record));
    return record.agent_id;
  }

  void set_allies(const AgentId& agent_id, bool allies) {
    std::unique_lock lock(mutex_);
    auto it = agents_.find(agent_id);
    if (it == agents_.end()) fail(ErrorCode::kUnknownAgent, agent_id);
    it->second.allies = allies;
    emit("set_allies", {{"agent_id", agent_id}, {"allies", allies}});
  }

  std::optional<AgentRecord> find_agent(const AgentId& agent_id) const {
    std::shared_lock lock(mutex_);
    auto it = agents_.find(agent_id);
    if (it == agents_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<ProductSpec> find_product(const ProductId& product_id) const {
    std::shared_lock lock(mutex_);
    auto it = products_.find(product_id);
    if (it == products_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t agent_count() const {
    std::shared_lock lock(mutex_);
    return agents_.size();
  }

  AdId submit_advertisement(const Advertisement& ad) {
    std::unique_lock lock(mutex_);
    if (!agents_.contains(ad.agent_id)) fail(ErrorCode::kUnknownAgent, ad.agent_id);
    if (!products_.contains(ad.product_id)) {
      fail(ErrorCode::kUnknownProduct, ad.product_id);
    }
    if (ad.validity_counter <= 0) fail(ErrorCode::kZeroValidity, ad.ad_id);
    if (ad_ids_.contains(ad.ad_id)) {
      fail(ErrorCode::kDuplicateAdvertisement, ad.ad_id);
    }
    ad_ids_.insert(ad.ad_id);
    live_.push_back(ad);
    emit("submit_advertisement", ad_json(ad));
    return ad.ad_id;
  }

  /// Advances every live advertisement by one logical tick. Ads whose
  /// counter reaches zero are archived as expired and returned.
  std::vector<AdId> tick() {
    std::unique_lock lock(mutex_);
    std::vector<AdId> expired;
    std::vector<Advertisement> still_live;
    for (auto& ad : live_) {
      --ad.validity_counter;
      if (ad.validity_counter <= 0) {
        expired.push_back(ad.ad_id);
        archive_.push_back({ad, Disposition::kExpired});
      } else {
        still_live.push_back(ad);
      }
    }
    live_ = std::move(still_live);
    if (!expired.empty()) emit("expire", {{"ad_ids", expired}});
    return expired;
  }

  std::vector<Advertisement> live_advertisements() const {
    std::shared_lock lock(mutex_);
    return live_;
  }

  std::optional<Advertisement> find_advertisement(const AdId& ad_id) const {
    std::shared_lock lock(mutex_);
    for (const auto& ad : live_) {
      if (ad.ad_id == ad_id) return ad;
    }
    return std::nullopt;
  }

  MatchSet find_matches(const ProductId& product_id) const {
    std::shared_lock lock(mutex_);
    MatchSet out;
    for (const auto& ad : live_) {
      if (ad.product_id != product_id) continue;
      const auto& agent = agents_.at(ad.agent_id);
      (agent.role == Role::kBuyer ? out.buyers : out.sellers).push_back(ad);
    }
    return out;
  }

  /// Product ids that have at least one live advertisement, sorted.
  std::vector<ProductId> advertised_products() const {
    std::shared_lock lock(mutex_);
    std::set<ProductId> ids;
    for (const auto& ad : live_) ids.insert(ad.product_id);
    return {ids.begin(), ids.end()};
  }

  /// Removes the given ads from the live set and archives them as consumed.
  void consume(const std::vector<AdId>& ad_ids) {
    std::unique_lock lock(mutex_);
    std::set<AdId> wanted(ad_ids.begin(), ad_ids.end());
    std::vector<Advertisement> still_live;
    std::vector<AdId> consumed;
    for (const auto& ad : live_) {
      if (wanted.contains(ad.ad_id)) {
        archive_.push_back({ad, Disposition::kConsumed});
        consumed.push_back(ad.ad_id);
      } else {
        still_live.push_back(ad);
      }
    }
    live_ = std::move(still_live);
    if (!consumed.empty()) emit("consume", {{"ad_ids", consumed}});
  }

  void record_ongoing(const OngoingNegotiationEntry& entry) {
    if (entry.agent_ids.size() < 2) {
      fail(ErrorCode::kPrecondition, "ongoing negotiation needs two agents");
    }
    std::unique_lock lock(mutex_);
    if (!products_.contains(entry.product_id)) {
      fail(ErrorCode::kUnknownProduct, entry.product_id);
    }
    auto it = ongoing_.find(entry.negotiation_id);
    if (it != ongoing_.end() &&
        entry.offers_generated < it->second.offers_generated) {
      fail(ErrorCode::kPrecondition, "offer count may not decrease");
    }
    ongoing_[entry.negotiation_id] = entry;
    emit("record_ongoing", ongoing_json(entry));
  }

  std::optional<OngoingNegotiationEntry> lookup_ongoing(
      const ProductId& product_id) const {
    std::shared_lock lock(mutex_);
    for (const auto& [id, entry] : ongoing_) {
      if (entry.product_id == product_id) return entry;
    }
    return std::nullopt;
  }

  void close_ongoing(const NegotiationId& negotiation_id) {
    std::unique_lock lock(mutex_);
    if (ongoing_.erase(negotiation_id) == 0) {
      fail(ErrorCode::kUnknownNegotiation, negotiation_id);
    }
    emit("close_ongoing", {{"negotiation_id", negotiation_id}});
  }

  RepositoryState snapshot() const {
    std::shared_lock lock(mutex_);
    RepositoryState state;
    state.agents = agents_;
    for (const auto& [id, product] : products_) {
      state.products[id] = {id, product.product_name, product.non_functional};
      for (auto& row : flatten_tree(product.tree)) {
        state.attributes.push_back({id, std::move(row)});
      }
    }
    state.advertisements = live_;
    state.ongoing = ongoing_;
    state.archive = archive_;
    return state;
  }

  void save_snapshot(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
    out << nlohmann::json(snapshot()).dump(2) << '\n';
  }

  void restore(const RepositoryState& state) {
    std::map<ProductId, ProductSpec> products;
    for (const auto& [id, row] : state.products) {
      std::vector<AttributeRow> rows;
      for (const auto& attr : state.attributes) {
        if (attr.product_id == id) rows.push_back(attr.row);
      }
      products[id] = {id, row.product_name, build_tree(rows), row.non_functional};
    }
    for (const auto& ad : state.advertisements) {
      if (!state.agents.contains(ad.agent_id) || !products.contains(ad.product_id)) {
        fail(ErrorCode::kRestoreError, "advertisement '" + ad.ad_id +
                                           "' references a missing row");
      }
    }
    std::unique_lock lock(mutex_);
    agents_ = state.agents;
    products_ = std::move(products);
    live_ = state.advertisements;
    ongoing_ = state.ongoing;
    archive_ = state.archive;
    ad_ids_.clear();
    for (const auto& ad : live_) ad_ids_.insert(ad.ad_id);
    for (const auto& entry : archive_) ad_ids_.insert(entry.ad.ad_id);
  }

  /// Loads a snapshot file; any parse or integrity failure is a RestoreError.
  void restore(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::kRestoreError, "cannot open " + path.string());
    RepositoryState state;
    try {
      state = nlohmann::json::parse(in).get<RepositoryState>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kRestoreError, e.what());
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kRestoreError) throw;
      fail(ErrorCode::kRestoreError, e.what());
    }
    try {
      restore(state);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kRestoreError) throw;
      fail(ErrorCode::kRestoreError, e.what());
    }
  }

  static nlohmann::json record_json(const AgentRecord& r) {
    return {{"agent_id", r.agent_id}, {"name", r.name},
            {"address", r.address},   {"role", to_string(r.role)},
            {"allies", r.allies},     {"priority", r.priority}};
  }

  static nlohmann::json ad_json(const Advertisement& ad) {
    return {{"ad_id", ad.ad_id},
            {"product_id", ad.product_id},
            {"agent_id", ad.agent_id},
            {"validity_counter", ad.validity_counter}};
  }

  static nlohmann::json ongoing_json(const OngoingNegotiationEntry& e) {
    return {{"negotiation_id", e.negotiation_id},
            {"product_id", e.product_id},
            {"agent_ids", e.agent_ids},
            {"offers_generated", e.offers_generated}};
  }

 private:
  void emit(std::string kind, nlohmann::json payload) {
    if (log_ != nullptr) log_->append(std::move(kind), std::move(payload));
  }

  mutable std::shared_mutex mutex_;
  EventLog* log_ = nullptr;
  std::map<AgentId, AgentRecord> agents_;
  std::map<ProductId, ProductSpec> products_;
  std::vector<Advertisement> live_;
  std::set<AdId> ad_ids_;
  std::map<NegotiationId, OngoingNegotiationEntry> ongoing_;
  std::vector<ArchivedAdvertisement> archive_;
};

inline void to_json(nlohmann::json& j, const RepositoryState& s) {
  j = nlohmann::json::object();
  j["version"] = 1;
  auto& agents = j["agents"] = nlohmann::json::array();
  for (const auto& [id, r] : s.agents) agents.push_back(Repository::record_json(r));
  auto& products = j["products"] = nlohmann::json::array();
  for (const auto& [id, p] : s.products) {
    products.push_back({{"product_id", p.product_id},
                        {"product_name", p.product_name},
                        {"non_functional", p.non_functional}});
  }
  auto& attributes = j["attributes"] = nlohmann::json::array();
  for (const auto& a : s.attributes) {
    attributes.push_back({{"product_id", a.product_id},
                          {"node_id", a.row.node_id},
                          {"parent", a.row.parent},
                          {"name", a.row.name},
                          {"weight", a.row.weight},
                          {"group", a.row.group}});
  }
  auto& ads = j["advertisements"] = nlohmann::json::array();
  for (const auto& ad : s.advertisements) ads.push_back(Repository::ad_json(ad));
  auto& ongoing = j["ongoing"] = nlohmann::json::array();
  for (const auto& [id, e] : s.ongoing) ongoing.push_back(Repository::ongoing_json(e));
  auto& archive = j["archive"] = nlohmann::json::array();
  for (const auto& a : s.archive) {
    auto row = Repository::ad_json(a.ad);
    row["disposition"] =
        a.disposition == Disposition::kConsumed ? "consumed" : "expired";
    archive.push_back(std::move(row));
  }
}

namespace detail {

inline Advertisement ad_from_json(const nlohmann::json& j) {
  return {j.at("ad_id").get<std::string>(), j.at("product_id").get<std::string>(),
          j.at("agent_id").get<std::string>(), j.at("validity_counter").get<int>()};
}

}  // namespace detail

inline void from_json(const nlohmann::json& j, RepositoryState& s) {
  if (j.at("version").get<int>() != 1) {
    fail(ErrorCode::kRestoreError, "unsupported snapshot version");
  }
  s = {};
  for (const auto& a : j.at("agents")) {
    AgentRecord r{a.at("agent_id").get<std::string>(),
                  a.at("name").get<std::string>(),
                  a.at("address").get<std::string>(),
                  role_from_string(a.at("role").get<std::string>()),
                  a.at("allies").get<bool>(), a.at("priority").get<int>()};
    s.agents[r.agent_id] = r;
  }
  for (const auto& p : j.at("products")) {
    ProductRow row{p.at("product_id").get<std::string>(),
                   p.at("product_name").get<std::string>(),
                   p.at("non_functional").get<NonFunctionalList>()};
    s.products[row.product_id] = row;
  }
  for (const auto& a : j.at("attributes")) {
    s.attributes.push_back(
        {a.at("product_id").get<std::string>(),
         {a.at("node_id").get<std::string>(), a.at("parent").get<std::string>(),
          a.at("name").get<std::string>(), a.at("weight").get<double>(),
          a.at("group").get<bool>()}});
  }
  for (const auto& ad : j.at("advertisements")) {
    s.advertisements.push_back(detail::ad_from_json(ad));
  }
  for (const auto& e : j.at("ongoing")) {
    OngoingNegotiationEntry entry{e.at("negotiation_id").get<std::string>(),
                                  e.at("product_id").get<std::string>(),
                                  e.at("agent_ids").get<std::set<AgentId>>(),
                                  e.at("offers_generated").get<std::uint64_t>()};
    s.ongoing[entry.negotiation_id] = entry;
  }
  for (const auto& a : j.at("archive")) {
    const auto disposition = a.at("disposition").get<std::string>();
    if (disposition != "consumed" && disposition != "expired") {
      fail(ErrorCode::kRestoreError, "bad disposition '" + disposition + "'");
    }
    s.archive.push_back({detail::ad_from_json(a),
                         disposition == "consumed" ? Disposition::kConsumed
                                                   : Disposition::kExpired});
  }
}

}  // namespace concord
