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

// Scenario files: products, agents with their private valuations, and the
// run configuration. Agents may give per-issue valuations, or only an
// overall cost range that is split equally over the product's issues.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "concord/domain.hpp"
#include "concord/engine/strategy.hpp"
#include "concord/error.hpp"
#include "concord/matcher.hpp"
#include "concord/repository.hpp"

namespace concord {

struct AgentSpec {
  AgentRecord record;
  ProductId product_id;
  Valuations valuations;
  bool weights_given = false;
  int validity = 10;
  int arrival = 0;
  std::string strategy = kLinearStrategy;
};

struct ScenarioConfig {
  std::size_t max_parties = 16;
  QueuePolicy queue_policy = QueuePolicy::kFcfs;
  int round_limit = 50;
  std::uint64_t seed = 0;
  int max_internal_rounds = 32;
  bool learn_weights = false;
};

struct Scenario {
  std::vector<ProductSpec> products;
  std::vector<AgentSpec> agents;
  ScenarioConfig config;

  const ProductSpec& product(const ProductId& id) const {
    for (const auto& p : products) {
      if (p.product_id == id) return p;
    }
    fail(ErrorCode::kScenario, "unknown product '" + id + "'");
  }
};

namespace detail {

inline AgentSpec parse_agent(const nlohmann::json& j, const std::map<ProductId, ProductSpec>& products) {
  AgentSpec a;
  a.record.agent_id = j.at("id").get<std::string>();
  a.record.name = j.value("name", a.record.agent_id);
  a.record.address = j.value("address", std::string{});
  a.record.role = role_from_string(j.at("role").get<std::string>());
  a.record.allies = j.value("allies", false);
  a.record.priority = j.value("priority", 0);
  a.product_id = j.at("product").get<std::string>();
  a.validity = j.value("validity", 10);
  a.arrival = j.value("arrival", 0);
  a.strategy = j.value("strategy", std::string(kLinearStrategy));
  if (a.arrival < 0) fail(ErrorCode::kScenario, a.record.agent_id + ": negative arrival");
  if (a.record.priority < 0) fail(ErrorCode::kScenario, a.record.agent_id + ": negative priority");
  if (a.validity <= 0) fail(ErrorCode::kScenario, a.record.agent_id + ": validity must be positive");

  auto it = products.find(a.product_id);
  if (it == products.end()) {
    fail(ErrorCode::kScenario,
         "agent '" + a.record.agent_id + "' references unknown product '" + a.product_id + "'");
  }
  const auto leaves = validate_tree(it->second.tree);

  if (j.contains("valuations")) {
    a.valuations = valuations_from_json(j.at("valuations"));
    for (const auto& [leaf, value] : j.at("valuations").items()) {
      if (value.contains("weight")) a.weights_given = true;
    }
  } else if (j.contains("total_min") && j.contains("total_max")) {
    a.valuations = derive_default_valuations(j.at("total_min").get<double>(),
                                             j.at("total_max").get<double>(), leaves);
  } else {
    fail(ErrorCode::kScenario,
         "agent '" + a.record.agent_id + "' needs valuations or total_min/total_max");
  }
  if (j.contains("weights")) {
    for (const auto& [leaf, w] : j.at("weights").items()) {
      auto v = a.valuations.find(leaf);
      if (v == a.valuations.end()) {
        fail(ErrorCode::kScenario, a.record.agent_id + ": weight for unknown issue '" + leaf + "'");
      }
      v->second.weight = w.get<double>();
    }
    a.weights_given = true;
  }
  if (j.contains("weights_given")) a.weights_given = j.at("weights_given").get<bool>();
  check_valuations(it->second, a.valuations);
  return a;
}

}  // namespace detail

/// Validates and resolves a scenario document. Every failure is a
/// ScenarioError.
inline Scenario parse_scenario(const nlohmann::json& j) {
  Scenario s;
  try {
    std::map<ProductId, ProductSpec> products;
    for (const auto& pj : j.at("products")) {
      auto product = pj.get<ProductSpec>();
      validate_tree(product.tree);
      multiplier_product(product.non_functional);
      if (!products.emplace(product.product_id, product).second) {
        fail(ErrorCode::kScenario, "duplicate product '" + product.product_id + "'");
      }
      s.products.push_back(std::move(product));
    }
    std::set<AgentId> ids;
    for (const auto& aj : j.at("agents")) {
      auto agent = detail::parse_agent(aj, products);
      if (!ids.insert(agent.record.agent_id).second) {
        fail(ErrorCode::kScenario, "duplicate agent '" + agent.record.agent_id + "'");
      }
      s.agents.push_back(std::move(agent));
    }
    const auto& c = j.at("config");
    if (!c.contains("seed")) fail(ErrorCode::kScenario, "config.seed is required");
    s.config.seed = c.at("seed").get<std::uint64_t>();
    s.config.max_parties = c.value("max_parties", s.config.max_parties);
    s.config.queue_policy =
        queue_policy_from_string(c.value("queue_policy", std::string("fcfs")));
    s.config.round_limit = c.value("round_limit", s.config.round_limit);
    s.config.max_internal_rounds = c.value("max_internal_rounds", s.config.max_internal_rounds);
    s.config.learn_weights = c.value("learn_weights", false);
    if (s.config.max_parties == 0) fail(ErrorCode::kScenario, "max_parties must be positive");
    if (s.config.round_limit < 0) fail(ErrorCode::kScenario, "round_limit must be >= 0");
    if (s.config.max_internal_rounds < 0) {
      fail(ErrorCode::kScenario, "max_internal_rounds must be >= 0");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kScenario, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kScenario) throw;
    fail(ErrorCode::kScenario, e.what());
  }
  return s;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kScenario, "cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kScenario, path.string() + ": " + e.what());
  }
  return parse_scenario(j);
}

/// Fully resolved form: derived valuations are written out per issue.
inline nlohmann::json scenario_to_json(const Scenario& s) {
  nlohmann::json j;
  j["products"] = s.products;
  auto& agents = j["agents"] = nlohmann::json::array();
  for (const auto& a : s.agents) {
    nlohmann::json valuations;
    valuations_to_json(valuations, a.valuations);
    agents.push_back({{"id", a.record.agent_id},
                      {"name", a.record.name},
                      {"address", a.record.address},
                      {"role", to_string(a.record.role)},
                      {"allies", a.record.allies},
                      {"priority", a.record.priority},
                      {"product", a.product_id},
                      {"valuations", valuations},
                      {"validity", a.validity},
                      {"arrival", a.arrival},
                      {"strategy", a.strategy}});
    if (!a.weights_given) agents.back()["weights_given"] = false;
  }
  j["config"] = {{"max_parties", s.config.max_parties},
                 {"queue_policy", to_string(s.config.queue_policy)},
                 {"round_limit", s.config.round_limit},
                 {"seed", s.config.seed},
                 {"max_internal_rounds", s.config.max_internal_rounds},
                 {"learn_weights", s.config.learn_weights}};
  return j;
}

}  // namespace concord
