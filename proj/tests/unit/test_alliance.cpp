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

#include <gtest/gtest.h>

#include <numeric>

#include "concord/alliance.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

namespace concord {
namespace {

AllianceMember member(const std::string& id, std::map<LeafId, std::array<double, 3>> v,
                      Role role = Role::kSeller, const ProductId& p = "P") {
  AllianceMember m;
  m.record = {id, id, "", role, true, 0};
  m.product_id = p;
  for (const auto& [leaf, x] : v) m.valuations[leaf] = {leaf, x[0], x[1], x[2]};
  return m;
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kPrecondition;
}

TEST(NegotiateTerms, IdenticalProposalsAgreeImmediately) {
  std::vector<AllianceMember> m{member("s1", {{"a", {10, 20, 2}}}), member("s2", {{"a", {5, 8, 2}}})};
  const auto terms = negotiate_terms(m, {}, 0);
  EXPECT_EQ(terms.weights.at("a"), 2.0);
  EXPECT_EQ(terms.internal_rounds, 0);
}

TEST(NegotiateTerms, MidpointOfTwo) {
  std::vector<AllianceMember> m{member("s1", {{"a", {10, 20, 1}}}), member("s2", {{"a", {5, 8, 3}}})};
  const auto terms = negotiate_terms(m, {}, 10);
  EXPECT_GE(terms.weights.at("a"), 1.0);
  EXPECT_LE(terms.weights.at("a"), 3.0);
  EXPECT_DOUBLE_EQ(terms.weights.at("a"), (1.0 + 3.0) / 2);
  EXPECT_EQ(terms.internal_rounds, 1);
}

TEST(NegotiateTerms, SharesFollowMaximumPayoff) {
  // margin totals 100 and 300
  std::vector<AllianceMember> m{member("s1", {{"a", {10, 60, 1}}, {"b", {10, 40, 1}}}),
                                member("s2", {{"a", {10, 200, 1}}, {"b", {10, 100, 1}}})};
  const NonFunctionalList nf{{"q", 1.3}};
  const auto terms = negotiate_terms(m, nf, 5);
  for (const auto* leaf : {"a", "b"}) {
    EXPECT_NEAR(terms.cost_shares.at("s1").at(leaf), 100.0 / (100.0 + 300.0), 1e-12);
    EXPECT_NEAR(terms.cost_shares.at("s2").at(leaf), 300.0 / (100.0 + 300.0), 1e-12);
    EXPECT_NEAR(terms.cost_shares.at("s1").at(leaf), 0.25, 1e-12);
  }
}

TEST(NegotiateTerms, ZeroPayoffsShareEqually) {
  std::vector<AllianceMember> m{member("s1", {{"a", {0, 0, 1}}}), member("s2", {{"a", {0, 0, 1}}}),
                                member("s3", {{"a", {0, 0, 1}}})};
  const auto terms = negotiate_terms(m, {}, 5);
  for (const auto* id : {"s1", "s2", "s3"}) EXPECT_DOUBLE_EQ(terms.cost_shares.at(id).at("a"), 1.0 / 3);
}

TEST(NegotiateTerms, DeadlockWhenRoundsRunOut) {
  std::vector<AllianceMember> m{member("s1", {{"a", {1, 2, 1}}}), member("s2", {{"a", {1, 2, 4}}}),
                                member("s3", {{"a", {1, 2, 9}}})};
  EXPECT_EQ(code_of([&] { negotiate_terms(m, {}, 2); }), ErrorCode::kInternalDeadlock);
  EXPECT_NO_THROW(negotiate_terms(m, {}, 64));
}

TEST(NegotiateTerms, PluggableStep) {
  std::vector<AllianceMember> m{member("s1", {{"a", {1, 2, 1}}}), member("s2", {{"a", {1, 2, 3}}})};
  // everyone adopts the smallest proposal
  const WeightStep to_min = [](const std::vector<double>& p) {
    return std::vector<double>(p.size(), *std::min_element(p.begin(), p.end()));
  };
  EXPECT_EQ(negotiate_terms(m, {}, 3, to_min).weights.at("a"), 1.0);
}

TEST(NegotiateTerms, Preconditions) {
  std::vector<AllianceMember> one{member("s1", {{"a", {1, 2, 1}}})};
  EXPECT_EQ(code_of([&] { negotiate_terms(one, {}, 3); }), ErrorCode::kPrecondition);
  std::vector<AllianceMember> mixed{member("s1", {{"a", {1, 2, 1}}}),
                                    member("b1", {{"a", {1, 2, 1}}}, Role::kBuyer)};
  EXPECT_EQ(code_of([&] { negotiate_terms(mixed, {}, 3); }), ErrorCode::kPrecondition);
  std::vector<AllianceMember> products{member("s1", {{"a", {1, 2, 1}}}),
                                       member("s2", {{"a", {1, 2, 1}}}, Role::kSeller, "Q")};
  EXPECT_EQ(code_of([&] { negotiate_terms(products, {}, 3); }), ErrorCode::kPrecondition);
}

TEST(FormComposite, SumsCosts) {
  std::vector<AllianceMember> m{member("s1", {{"a", {50, 80, 1}}}), member("s2", {{"a", {70, 90, 3}}})};
  const auto terms = negotiate_terms(m, {}, 5);
  const auto c = form_composite(m, terms);
  EXPECT_EQ(c.record.agent_id, "alliance(s1+s2)");
  EXPECT_FALSE(c.record.allies);
  EXPECT_EQ(c.record.role, Role::kSeller);
  EXPECT_DOUBLE_EQ(c.valuations.at("a").actual_cost, 50.0 + 70.0);
  EXPECT_DOUBLE_EQ(c.valuations.at("a").actual_cost, 120);
  EXPECT_DOUBLE_EQ(c.valuations.at("a").cost_with_margin, 170);
  EXPECT_DOUBLE_EQ(c.valuations.at("a").weight, 2);
  EXPECT_EQ(c.members.size(), 2u);
}

TEST(FormComposite, MismatchedRolesRejected) {
  std::vector<AllianceMember> m{member("s1", {{"a", {50, 80, 1}}}),
                                member("b1", {{"a", {70, 90, 3}}}, Role::kBuyer)};
  AllianceTerms terms{{"s1", "b1"}, {{"a", 1.0}}, {}, 0};
  EXPECT_EQ(code_of([&] { form_composite(m, terms); }), ErrorCode::kPrecondition);
}

TEST(FormComposite, RegistrationRetiresMemberAds) {
  Repository repo;
  repo.register_product({"P", "P", {"P", "P", {{"a", "a", {}, 1.0}}, 1.0}, {}});
  std::vector<AllianceMember> m{member("s1", {{"a", {50, 80, 1}}}), member("s2", {{"a", {70, 90, 1}}})};
  for (const auto& x : m) {
    repo.register_agent(x.record);
    repo.submit_advertisement({"ad-" + x.record.agent_id, "P", x.record.agent_id, 3});
  }
  const auto c = form_composite(m, negotiate_terms(m, {}, 5));
  register_composite(repo, c, {"ad-s1", "ad-s2"}, {"ad-c", "P", c.record.agent_id, 3});
  EXPECT_TRUE(repo.find_agent(c.record.agent_id));
  const auto live = repo.live_advertisements();
  ASSERT_EQ(live.size(), 1u);
  EXPECT_EQ(live[0].agent_id, "alliance(s1+s2)");
}

TEST(DistributeOutcome, Examples) {
  CompositeAgent c;
  c.members = {{"s1", "s1", "", Role::kSeller, true, 0}, {"s2", "s2", "", Role::kSeller, true, 0}};
  c.terms.cost_shares = {{"s1", {{"a", 0.25}, {"b", 0.25}}}, {"s2", {{"a", 0.75}, {"b", 0.75}}}};
  auto pay = distribute_outcome(c, {{"a", 120}, {"b", 80}});
  EXPECT_DOUBLE_EQ(pay.at("s1"), 0.25 * 200);
  EXPECT_DOUBLE_EQ(pay.at("s2"), 0.75 * 200);
  EXPECT_DOUBLE_EQ(pay.at("s1"), 50);
  EXPECT_DOUBLE_EQ(pay.at("s2"), 150);
  pay = distribute_outcome(c, {{"a", 0}, {"b", 0}});
  EXPECT_EQ(pay.at("s1"), 0);
  EXPECT_EQ(pay.at("s2"), 0);

  CompositeAgent solo;
  solo.members = {{"s1", "s1", "", Role::kSeller, true, 0}, {"s2", "s2", "", Role::kSeller, true, 0}};
  solo.terms.cost_shares = {{"s1", {{"a", 1.0}}}, {"s2", {{"a", 0.0}}}};
  pay = distribute_outcome(solo, {{"a", 99}});
  EXPECT_EQ(pay.at("s1"), 99);
  EXPECT_EQ(pay.at("s2"), 0);
}

TEST(AllianceProperties, HullSharesConservation) {
  testing::Rng rng(404);
  for (int trial = 0; trial < 300; ++trial) {
    const auto product = testing::random_product(rng, testing::uniform_int(rng, 1, 4));
    std::vector<AllianceMember> members;
    const int n = testing::uniform_int(rng, 2, 4);
    for (int k = 0; k < n; ++k) {
      AllianceMember m;
      m.record = {"m" + std::to_string(k), "", "", Role::kBuyer, true, 0};
      m.product_id = product.product_id;
      m.valuations = testing::random_seller(rng, product);
      members.push_back(std::move(m));
    }
    const auto terms = negotiate_terms(members, product.non_functional, 200);
    PriceMap prices;
    for (const auto& [leaf, w] : terms.weights) {
      double lo = 1e300;
      double hi = -1e300;
      double share_sum = 0;
      for (const auto& m : members) {
        lo = std::min(lo, m.valuations.at(leaf).weight);
        hi = std::max(hi, m.valuations.at(leaf).weight);
        share_sum += terms.cost_shares.at(m.record.agent_id).at(leaf);
      }
      EXPECT_GE(w, lo);
      EXPECT_LE(w, hi);
      EXPECT_NEAR(share_sum, 1.0, 1e-9);
      prices[leaf] = testing::uniform(rng, 0, 1000);
    }
    const auto composite = form_composite(members, terms);
    const auto pay = distribute_outcome(composite, prices);
    const double paid = std::accumulate(pay.begin(), pay.end(), 0.0,
                                        [](double s, const auto& kv) { return s + kv.second; });
    EXPECT_LE(testing::rel_err(paid, total_price(prices)), 1e-9);
    // composite floor never undercuts a member's floor
    for (const auto& m : members) {
      for (const auto& [leaf, v] : m.valuations) {
        EXPECT_GE(composite.valuations.at(leaf).actual_cost, v.actual_cost);
      }
    }
  }
}

}  // namespace
}  // namespace concord
