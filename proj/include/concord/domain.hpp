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

// Valuation model: attribute trees, utility bands and the price/utility
// conversions shared by every negotiating agent.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "concord/error.hpp"

namespace concord {

using NodeId = std::string;
using LeafId = std::string;
using ProductId = std::string;
using AgentId = std::string;

inline constexpr double kRelTol = 1e-9;

enum class Role { kBuyer, kSeller };

inline std::string_view to_string(Role role) {
  return role == Role::kBuyer ? "buyer" : "seller";
}

inline Role role_from_string(std::string_view text) {
  if (text == "buyer") return Role::kBuyer;
  if (text == "seller") return Role::kSeller;
  fail(ErrorCode::kScenario, "unknown role '" + std::string(text) + "'");
}

inline Role opposite(Role role) {
  return role == Role::kBuyer ? Role::kSeller : Role::kBuyer;
}

/// Relative comparison; values within `abs_floor` of each other are equal
/// regardless of magnitude so that comparisons against zero behave.
inline bool approx_equal(double a, double b, double rel = kRelTol,
                         double abs_floor = 1e-12) {
  const double diff = std::abs(a - b);
  if (diff <= abs_floor) return true;
  return diff <= rel * std::max(std::abs(a), std::abs(b));
}

struct AttributeNode {
  NodeId node_id;
  std::string name;
  std::vector<AttributeNode> children;
  // Only meaningful on leaves.
  double weight = 1.0;

  bool is_leaf() const { return children.empty(); }
  bool operator==(const AttributeNode&) const = default;
};

struct NonFunctionalAttribute {
  std::string name;
  double multiplier = 1.0;
  bool operator==(const NonFunctionalAttribute&) const = default;
};

using NonFunctionalList = std::vector<NonFunctionalAttribute>;

struct IssueValuation {
  LeafId leaf_id;
  double actual_cost = 0.0;
  double cost_with_margin = 0.0;
  double weight = 1.0;
  bool operator==(const IssueValuation&) const = default;
};

/// One agent's private valuation of every issue of a product.
using Valuations = std::map<LeafId, IssueValuation>;

struct UtilityBand {
  double u_min = 0.0;
  double u_max = 0.0;

  double gap() const { return u_max - u_min; }
  double clamp(double u) const { return std::clamp(u, u_min, u_max); }
};

struct PayoffBounds {
  double min_payoff = 0.0;
  double max_payoff = 0.0;
};

struct ProductSpec {
  ProductId product_id;
  std::string product_name;
  AttributeNode tree;
  NonFunctionalList non_functional;
  bool operator==(const ProductSpec&) const = default;
};

namespace detail {

inline void collect_leaves(const AttributeNode& node, std::set<NodeId>& seen,
                           std::vector<LeafId>& leaves) {
  if (!seen.insert(node.node_id).second) {
    fail(ErrorCode::kDuplicateNodeId, "node id '" + node.node_id + "'");
  }
  if (node.is_leaf()) {
    if (!(node.weight > 0.0)) {
      fail(ErrorCode::kNonPositiveWeight, "leaf '" + node.node_id + "'");
    }
    leaves.push_back(node.node_id);
    return;
  }
  for (const auto& child : node.children) collect_leaves(child, seen, leaves);
}

}  // namespace detail

/// Returns the leaf ids of `tree` in depth-first, child order.
///
/// Trees are values, so cycles cannot be expressed; the remaining structural
/// checks are id uniqueness and positive leaf weights. A non-leaf is a node
/// with children, so the "empty non-leaf" case only arises for trees built
/// from the flat attributes table (see `build_tree`).
inline std::vector<LeafId> validate_tree(const AttributeNode& tree) {
  std::set<NodeId> seen;
  std::vector<LeafId> leaves;
  detail::collect_leaves(tree, seen, leaves);
  return leaves;
}

/// Flat row of the attributes table. `parent` is empty for the root.
struct AttributeRow {
  NodeId node_id;
  NodeId parent;
  std::string name;
  double weight = 1.0;
  // Rows flagged as groups must end up with at least one child.
  bool group = false;
  bool operator==(const AttributeRow&) const = default;
};

inline void flatten_tree(const AttributeNode& node, const NodeId& parent,
                         std::vector<AttributeRow>& rows) {
  rows.push_back({node.node_id, parent, node.name, node.weight,
                  !node.is_leaf()});
  for (const auto& child : node.children) {
    flatten_tree(child, node.node_id, rows);
  }
}

inline std::vector<AttributeRow> flatten_tree(const AttributeNode& tree) {
  std::vector<AttributeRow> rows;
  flatten_tree(tree, NodeId{}, rows);
  return rows;
}

/// Rebuilds a tree from attribute rows listed parent-before-child.
inline AttributeNode build_tree(std::span<const AttributeRow> rows) {
  if (rows.empty() || !rows.front().parent.empty()) {
    fail(ErrorCode::kEmptyNonLeaf, "attribute rows lack a root");
  }
  std::set<NodeId> ids;
  for (const auto& row : rows) {
    if (!ids.insert(row.node_id).second) {
      fail(ErrorCode::kDuplicateNodeId, "node id '" + row.node_id + "'");
    }
  }
  std::function<AttributeNode(const AttributeRow&)> build =
      [&](const AttributeRow& row) {
        AttributeNode node{row.node_id, row.name, {}, row.weight};
        for (const auto& candidate : rows) {
          if (candidate.parent == row.node_id) {
            node.children.push_back(build(candidate));
          }
        }
        if (row.group && node.children.empty()) {
          fail(ErrorCode::kEmptyNonLeaf, "group '" + row.node_id + "'");
        }
        return node;
      };
  AttributeNode root = build(rows.front());
  if (flatten_tree(root).size() != rows.size()) {
    fail(ErrorCode::kEmptyNonLeaf, "attribute rows reference missing parents");
  }
  validate_tree(root);
  return root;
}

inline double multiplier_product(std::span<const NonFunctionalAttribute> nf) {
  double product = 1.0;
  for (const auto& attr : nf) {
    if (!(attr.multiplier > 0.0)) {
      fail(ErrorCode::kInvalidValuation,
           "non-functional multiplier '" + attr.name + "' must be positive");
    }
    product *= attr.multiplier;
  }
  return product;
}

inline void check_valuation(const IssueValuation& v) {
  if (!(v.actual_cost >= 0.0) || !(v.actual_cost <= v.cost_with_margin)) {
    fail(ErrorCode::kInvalidValuation,
         "leaf '" + v.leaf_id + "' needs 0 <= actual_cost <= cost_with_margin");
  }
  if (!(v.weight > 0.0)) {
    fail(ErrorCode::kNonPositiveWeight, "leaf '" + v.leaf_id + "'");
  }
}

/// Valuations must cover exactly the leaves of the product's tree.
inline void check_valuations(const ProductSpec& product,
                             const Valuations& valuations) {
  const auto leaves = validate_tree(product.tree);
  if (leaves.size() != valuations.size()) {
    fail(ErrorCode::kInvalidValuation,
         "valuations do not cover the leaves of product '" +
             product.product_id + "'");
  }
  for (const auto& leaf : leaves) {
    auto it = valuations.find(leaf);
    if (it == valuations.end()) {
      fail(ErrorCode::kInvalidValuation, "missing valuation for '" + leaf + "'");
    }
    check_valuation(it->second);
  }
}

/// U_min = (prod multipliers) * actual cost, U_max = (prod multipliers) *
/// cost with margin.
inline UtilityBand utility_band(const IssueValuation& valuation,
                                std::span<const NonFunctionalAttribute> nf) {
  check_valuation(valuation);
  const double scale = multiplier_product(nf);
  return {scale * valuation.actual_cost, scale * valuation.cost_with_margin};
}

inline PayoffBounds payoff_bounds(std::span<const UtilityBand> bands) {
  if (bands.empty()) fail(ErrorCode::kPrecondition, "payoff of no bands");
  PayoffBounds bounds;
  for (const auto& band : bands) {
    bounds.min_payoff += band.u_min;
    bounds.max_payoff += band.u_max;
  }
  return bounds;
}

/// Inverse of the utility scaling: the price whose utility is `u`.
inline double price_at_utility(double u,
                               std::span<const NonFunctionalAttribute> nf) {
  return u / multiplier_product(nf);
}

/// Splits overall minimum/maximum cost equally over the leaves, each with
/// unit weight. Used when an agent only knows its overall cost range.
inline Valuations derive_default_valuations(double total_min, double total_max,
                                            std::span<const LeafId> leaf_ids) {
  if (leaf_ids.empty()) fail(ErrorCode::kPrecondition, "no leaves to value");
  if (!(total_min >= 0.0) || !(total_min <= total_max)) {
    fail(ErrorCode::kInvalidValuation, "need 0 <= total_min <= total_max");
  }
  const double n = static_cast<double>(leaf_ids.size());
  Valuations out;
  for (const auto& leaf : leaf_ids) {
    out[leaf] = IssueValuation{leaf, total_min / n, total_max / n, 1.0};
  }
  return out;
}

/// Bands for every valuation, keyed like the valuations.
inline std::map<LeafId, UtilityBand> utility_bands(
    const Valuations& valuations, std::span<const NonFunctionalAttribute> nf) {
  std::map<LeafId, UtilityBand> bands;
  for (const auto& [leaf, v] : valuations) bands[leaf] = utility_band(v, nf);
  return bands;
}

// JSON

inline void to_json(nlohmann::json& j, const AttributeNode& n) {
  j = nlohmann::json{{"id", n.node_id}, {"name", n.name}};
  if (n.is_leaf()) {
    j["weight"] = n.weight;
  } else {
    j["children"] = n.children;
  }
}

inline void from_json(const nlohmann::json& j, AttributeNode& n) {
  j.at("id").get_to(n.node_id);
  n.name = j.value("name", n.node_id);
  n.weight = j.value("weight", 1.0);
  n.children.clear();
  if (j.contains("children")) {
    const auto& children = j.at("children");
    if (children.empty()) {
      fail(ErrorCode::kEmptyNonLeaf, "node '" + n.node_id + "'");
    }
    for (const auto& child : children) {
      n.children.push_back(child.get<AttributeNode>());
    }
  }
}

inline void to_json(nlohmann::json& j, const NonFunctionalAttribute& a) {
  j = nlohmann::json{{"name", a.name}, {"multiplier", a.multiplier}};
}

inline void from_json(const nlohmann::json& j, NonFunctionalAttribute& a) {
  j.at("name").get_to(a.name);
  j.at("multiplier").get_to(a.multiplier);
}

inline void to_json(nlohmann::json& j, const IssueValuation& v) {
  j = nlohmann::json{{"actual_cost", v.actual_cost},
                     {"cost_with_margin", v.cost_with_margin},
                     {"weight", v.weight}};
}

inline void from_json(const nlohmann::json& j, IssueValuation& v) {
  j.at("actual_cost").get_to(v.actual_cost);
  j.at("cost_with_margin").get_to(v.cost_with_margin);
  v.weight = j.value("weight", 1.0);
}

inline void valuations_to_json(nlohmann::json& j, const Valuations& vs) {
  j = nlohmann::json::object();
  for (const auto& [leaf, v] : vs) j[leaf] = v;
}

inline Valuations valuations_from_json(const nlohmann::json& j) {
  Valuations vs;
  for (const auto& [leaf, value] : j.items()) {
    IssueValuation v = value.get<IssueValuation>();
    v.leaf_id = leaf;
    vs[leaf] = v;
  }
  return vs;
}

inline void to_json(nlohmann::json& j, const ProductSpec& p) {
  j = nlohmann::json{{"id", p.product_id},
                     {"name", p.product_name},
                     {"attributes", p.tree},
                     {"non_functional", p.non_functional}};
}

inline void from_json(const nlohmann::json& j, ProductSpec& p) {
  j.at("id").get_to(p.product_id);
  p.product_name = j.value("name", p.product_id);
  j.at("attributes").get_to(p.tree);
  p.non_functional =
      j.value("non_functional", NonFunctionalList{});
}

}  // namespace concord
