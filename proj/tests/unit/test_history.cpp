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

#include <filesystem>
#include <fstream>

#include "concord/history.hpp"
#include "support/generators.hpp"

namespace concord {
namespace {

using testing::participant;
using testing::Rng;

ProductSpec two_issue() {
  ProductSpec p;
  p.product_id = "P";
  p.tree = {"r", "r", {{"x", "x", {}, 1}, {"y", "y", {}, 1}}, 1};
  p.non_functional = {{"q", 1.1}};
  return p;
}

Valuations val(double x0, double x1, double wx, double y0, double y1, double wy) {
  return {{"x", {"x", x0, x1, wx}}, {"y", {"y", y0, y1, wy}}};
}

HistoryRecord settled(const std::string& id, std::vector<Participant> parts, int limit = 30,
                      ProductSpec p = two_issue(), std::uint64_t seq = 0) {
  static StrategyRegistry reg;
  InlineExecutor ex;
  Market m(id, p, limit, reg, ex);
  for (auto& part : parts) m.join(part);
  m.run();
  return make_record(m, seq);
}

HistoryRecord success(const std::string& id) {
  return settled(id, {participant("S", Role::kSeller, val(100, 150, 2, 20, 40, 1)),
                      participant("B", Role::kBuyer, val(60, 140, 1, 10, 50, 3))});
}

HistoryRecord failure(const std::string& id) {
  return settled(id, {participant("S", Role::kSeller, val(100, 150, 1, 20, 40, 1)),
                      participant("B", Role::kBuyer, val(10, 50, 1, 1, 5, 1))},
                 8);
}

TEST(HistoryStore, AppendGetByProduct) {
  HistoryStore store;
  EXPECT_EQ(store.append(success("m1")), 0u);
  EXPECT_EQ(store.append(failure("m2")), 1u);
  EXPECT_EQ(store.size(), 2u);
  ASSERT_TRUE(store.get("m1"));
  EXPECT_TRUE(store.get("m1")->outcome.success);
  EXPECT_FALSE(store.get("nope"));
  EXPECT_EQ(store.by_product("P").size(), 2u);
  EXPECT_TRUE(store.by_product("Q").empty());
}

TEST(HistoryStore, DuplicateRecordRejected) {
  HistoryStore store;
  store.append(success("m1"));
  try {
    store.append(success("m1"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDuplicateRecord);
  }
  EXPECT_EQ(store.size(), 1u);
}

TEST(HistoryStore, FailureCarriesReason) {
  const auto r = failure("m");
  EXPECT_FALSE(r.outcome.success);
  EXPECT_EQ(r.outcome.reason, "round_limit");
  EXPECT_TRUE(r.outcome.deals.empty());
}

TEST(HistoryStore, RecordShape) {
  const auto r = success("m");
  EXPECT_EQ(r.participants, (std::vector<AgentId>{"S", "B"}));
  EXPECT_EQ(r.weights_used.at("S").at("x"), 2.0);
  EXPECT_EQ(r.weights_used.at("B").at("y"), 3.0);
  ASSERT_EQ(r.outcome.deals.size(), 1u);
  EXPECT_EQ(r.outcome.deals[0].final_prices.size(), 2u);
  EXPECT_EQ(r.transcript.front().kind, MessageKind::kOffer);
  EXPECT_EQ(r.transcript.back().kind, MessageKind::kFinalize);
}

TEST(HistoryStore, IncompleteDealRejected) {
  auto r = success("m");
  r.outcome.deals[0].final_prices.erase("y");
  HistoryStore store;
  EXPECT_THROW(store.append(r), Error);
}

TEST(SuggestWeights, UniformWithoutHistory) {
  HistoryStore store;
  std::vector<LeafId> leaves{"x", "y"};
  const auto w = store.suggest_weights("P", leaves);
  EXPECT_EQ(w.at("x"), 1.0);
  EXPECT_EQ(w.at("y"), 1.0);
}

TEST(SuggestWeights, MeanOverClosingAgents) {
  HistoryStore store;
  store.append(success("m1"));  // S: x2 y1, B: x1 y3
  store.append(failure("m2"));  // ignored
  std::vector<LeafId> leaves{"x", "y"};
  const auto w = store.suggest_weights("P", leaves);
  EXPECT_DOUBLE_EQ(w.at("x"), 1.5);
  EXPECT_DOUBLE_EQ(w.at("y"), 2.0);
}

TEST(SuggestWeights, IdenticalWeightsReproduced) {
  HistoryStore store;
  auto parts = std::vector<Participant>{participant("S", Role::kSeller, val(100, 150, 2, 20, 40, 2)),
                                        participant("B", Role::kBuyer, val(60, 140, 2, 10, 50, 2))};
  store.append(settled("m", parts));
  std::vector<LeafId> leaves{"x", "y"};
  EXPECT_EQ(store.suggest_weights("P", leaves), (std::map<LeafId, double>{{"x", 2}, {"y", 2}}));
}

TEST(SuggestWeights, OtherProductFallsBack) {
  HistoryStore store;
  store.append(success("m1"));
  std::vector<LeafId> leaves{"x"};
  EXPECT_EQ(store.suggest_weights("Q", leaves).at("x"), 1.0);
}

TEST(SuggestWeights, OrderOfRecordsDoesNotMatter) {
  Rng rng(4);
  std::vector<HistoryRecord> records;
  for (int k = 0; k < 6; ++k) {
    const double a = testing::uniform(rng, 0.3, 3), b = testing::uniform(rng, 0.3, 3);
    records.push_back(settled("m" + std::to_string(k),
                              {participant("S", Role::kSeller, val(100, 150, a, 20, 40, b)),
                               participant("B", Role::kBuyer, val(60, 140, b, 10, 50, a))}));
  }
  std::vector<LeafId> leaves{"x", "y"};
  std::map<LeafId, double> first;
  for (int perm = 0; perm < 10; ++perm) {
    std::shuffle(records.begin(), records.end(), rng);
    HistoryStore store;
    for (const auto& r : records) store.append(r);
    const auto w = store.suggest_weights("P", leaves);
    if (perm == 0) first = w;
    EXPECT_EQ(w, first);
  }
}

TEST(Replay, SuccessAndFailureReproduce) {
  StrategyRegistry reg;
  for (const auto& r : {success("a"), failure("b")}) {
    const auto result = replay(r, reg);
    EXPECT_EQ(result.deals, r.outcome.deals);
  }
}

TEST(Replay, MultiPartyMarketReproduces) {
  Rng rng(12);
  StrategyRegistry reg;
  for (int trial = 0; trial < 30; ++trial) {
    auto p = testing::random_product(rng, testing::uniform_int(rng, 1, 3));
    const auto base = testing::random_seller(rng, p);
    std::vector<Participant> parts;
    for (int k = 0; k < 3; ++k) {
      parts.push_back(participant("S" + std::to_string(k), Role::kSeller, testing::random_seller(rng, p)));
      parts.push_back(participant("B" + std::to_string(k), Role::kBuyer,
                                  testing::random_buyer(rng, base, testing::coin(rng))));
    }
    const auto r = settled("m", parts, 25, p);
    EXPECT_NO_THROW(replay(r, reg)) << trial;
  }
}

TEST(Replay, TamperedPriceIsLocated) {
  StrategyRegistry reg;
  auto r = success("m");
  std::size_t target = 0;
  for (std::size_t i = 0; i < r.transcript.size(); ++i) {
    if (r.transcript[i].kind == MessageKind::kCounterOffer) {
      target = i;
      break;
    }
  }
  ASSERT_GT(target, 0u);
  r.transcript[target].prices.begin()->second += 0.01;
  try {
    replay(r, reg);
    FAIL() << "tampering went unnoticed";
  } catch (const ReplayMismatch& e) {
    EXPECT_EQ(e.index(), target);
    EXPECT_EQ(e.code(), ErrorCode::kReplayMismatch);
  }
}

TEST(Replay, TamperedOutcomeIsCaught) {
  StrategyRegistry reg;
  auto r = success("m");
  r.outcome.deals[0].total += 1;
  EXPECT_THROW(replay(r, reg), ReplayMismatch);
}

TEST(Replay, TruncatedTranscriptIsCaught) {
  StrategyRegistry reg;
  auto r = success("m");
  r.transcript.resize(r.transcript.size() / 2);
  EXPECT_THROW(replay(r, reg), ReplayMismatch);
}

TEST(HistoryStore, SaveLoadRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "concord_history_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "h.jsonl";
  HistoryStore store;
  store.append(success("m1"));
  store.append(failure("m2"));
  store.save(path);
  HistoryStore back;
  back.load(path);
  ASSERT_EQ(back.size(), 2u);
  for (const auto& id : {"m1", "m2"}) {
    const auto a = store.get(id), b = back.get(id);
    EXPECT_EQ(a->transcript, b->transcript);
    EXPECT_EQ(a->outcome, b->outcome);
    EXPECT_EQ(a->weights_used, b->weights_used);
    EXPECT_EQ(a->participants, b->participants);
    EXPECT_EQ(a->context.product, b->context.product);
  }
  StrategyRegistry reg;
  EXPECT_NO_THROW(replay(*back.get("m1"), reg));

  std::ofstream(dir / "bad.jsonl") << "{\"concord_history\":1}\n{oops\n";
  HistoryStore bad;
  try {
    bad.load(dir / "bad.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace concord
