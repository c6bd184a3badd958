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

// End-to-end simulation on a logical clock. One scheduler step:
//   arrivals -> alliances -> join running markets -> scan for new markets
//   -> one round barrier in every market -> settle finished markets
//   -> validity tick.
// Everything that varies between runs comes from the scenario seed.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "concord/alliance.hpp"
#include "concord/domain.hpp"
#include "concord/engine/executor.hpp"
#include "concord/engine/link.hpp"
#include "concord/engine/market.hpp"
#include "concord/engine/strategy.hpp"
#include "concord/error.hpp"
#include "concord/event_log.hpp"
#include "concord/harness/scenario.hpp"
#include "concord/harness/wire.hpp"
#include "concord/history.hpp"
#include "concord/matcher.hpp"
#include "concord/repository.hpp"

namespace concord {

enum class Transport { kInProcess, kSocket };

struct RunOptions {
  Transport transport = Transport::kInProcess;
  std::size_t threads = 0;  // 0 runs every task on the scheduler thread
  int max_steps = 1'000'000;
};

struct NegotiationReport {
  NegotiationId negotiation_id;
  ProductId product_id;
  std::vector<AgentId> participants;
  std::vector<PairSummary> pairs;
  std::vector<Deal> deals;
  int started_step = 0;
  int finished_step = 0;
};

struct QueueEvent {
  int step = 0;
  AgentId agent_id;
  std::string event;  // queued | admitted
  std::size_t position = 0;
};

struct AllianceEvent {
  int step = 0;
  std::string event;  // formed | deadlocked | payout
  AgentId composite_id;
  std::vector<AgentId> members;
  std::map<LeafId, double> weights;
  std::map<AgentId, double> payouts;
  std::string detail;
};

struct ExpiryEvent {
  int step = 0;
  AdId ad_id;
  AgentId agent_id;
};

struct RunStats {
  std::size_t markets = 0;
  std::size_t agreements = 0;
  std::size_t failed_markets = 0;
  std::size_t messages = 0;
  int steps = 0;
};

struct RunReport {
  std::vector<NegotiationReport> negotiations;
  std::vector<QueueEvent> queue_events;
  std::vector<AllianceEvent> alliance_events;
  std::vector<ExpiryEvent> expired;
  RunStats stats;
};

inline nlohmann::json to_json_value(const RunReport& r) {
  nlohmann::json j;
  auto& negotiations = j["negotiations"] = nlohmann::json::array();
  for (const auto& n : r.negotiations) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : n.pairs) {
      nlohmann::json pj = {{"negotiation_id", p.negotiation_id},
                           {"buyer", p.buyer_id},
                           {"seller", p.seller_id},
                           {"result", to_string(p.result)},
                           {"rounds", p.rounds}};
      if (!p.final_prices.empty()) {
        pj["final_prices"] = p.final_prices;
        pj["total"] = p.total;
      }
      pairs.push_back(std::move(pj));
    }
    negotiations.push_back({{"negotiation_id", n.negotiation_id},
                            {"product_id", n.product_id},
                            {"participants", n.participants},
                            {"outcome", n.deals.empty() ? "failure" : "agreement"},
                            {"deals", n.deals},
                            {"pairs", pairs},
                            {"started_step", n.started_step},
                            {"finished_step", n.finished_step}});
  }
  auto& queue = j["queue_events"] = nlohmann::json::array();
  for (const auto& q : r.queue_events) {
    nlohmann::json e = {{"step", q.step}, {"agent_id", q.agent_id}, {"event", q.event}};
    if (q.event == "queued") e["position"] = q.position;
    queue.push_back(std::move(e));
  }
  auto& alliances = j["alliance_events"] = nlohmann::json::array();
  for (const auto& a : r.alliance_events) {
    nlohmann::json e = {{"step", a.step}, {"event", a.event}, {"members", a.members}};
    if (!a.composite_id.empty()) e["composite"] = a.composite_id;
    if (!a.weights.empty()) e["weights"] = a.weights;
    if (!a.payouts.empty()) e["payouts"] = a.payouts;
    if (!a.detail.empty()) e["detail"] = a.detail;
    alliances.push_back(std::move(e));
  }
  auto& expired = j["expired_ads"] = nlohmann::json::array();
  for (const auto& e : r.expired) {
    expired.push_back({{"step", e.step}, {"ad_id", e.ad_id}, {"agent_id", e.agent_id}});
  }
  j["stats"] = {{"markets", r.stats.markets},
                {"agreements", r.stats.agreements},
                {"failed_markets", r.stats.failed_markets},
                {"messages", r.stats.messages},
                {"steps", r.stats.steps}};
  return j;
}

inline constexpr int kTranscriptVersion = 1;

inline nlohmann::json transcript_header(const Scenario& s) {
  return {{"concord_transcript", kTranscriptVersion}, {"scenario", scenario_to_json(s)}};
}

/// Deterministic permutation from a 64-bit seed (Fisher-Yates).
template <typename T>
void seeded_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(items[i - 1], items[j]);
  }
}

class Simulation {
 public:
  explicit Simulation(Scenario scenario, RunOptions options = {})
      : scenario_(std::move(scenario)),
        options_(options),
        log_(&events_),
        repo_(&log_),
        queue_(scenario_.config.queue_policy, scenario_.config.max_parties),
        rng_(scenario_.config.seed) {
    if (options_.threads > 0) {
      executor_ = std::make_unique<ThreadPoolExecutor>(options_.threads);
    } else {
      executor_ = std::make_unique<InlineExecutor>();
    }
    links_ = options_.transport == Transport::kSocket ? socket_links() : in_process_links();
    for (const auto& p : scenario_.products) repo_.register_product(p);
    for (const auto& a : scenario_.agents) {
      if (!strategies_.contains(a.strategy)) {
        fail(ErrorCode::kScenario, a.record.agent_id + ": unknown strategy '" + a.strategy + "'");
      }
      specs_[a.record.agent_id] = &a;
    }
  }

  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  StrategyRegistry& strategies() { return strategies_; }

  const RunReport& run() {
    if (ran_) return report_;
    ran_ = true;
    std::map<int, std::vector<const AgentSpec*>> arrivals;
    for (const auto& a : scenario_.agents) arrivals[a.arrival].push_back(&a);
    for (auto& [step, group] : arrivals) seeded_shuffle(group, rng_);

    for (step_ = 0;; ++step_) {
      if (step_ >= options_.max_steps) fail(ErrorCode::kPrecondition, "simulation did not finish");
      if (auto it = arrivals.find(step_); it != arrivals.end()) {
        for (const auto* a : it->second) arrive(*a);
      }
      form_alliances();
      join_running();
      spawn_markets();
      advance_markets();
      settle_finished();
      expire();
      const bool more_arrivals = !arrivals.empty() && arrivals.rbegin()->first > step_;
      if (!more_arrivals && markets_.empty() && repo_.live_advertisements().empty() &&
          queue_.entries().empty()) {
        break;
      }
    }
    report_.stats.steps = step_ + 1;
    report_.stats.messages = transcript_.size();
    return report_;
  }

  const Scenario& scenario() const { return scenario_; }
  const RunReport& report() const { return report_; }
  const std::vector<Message>& transcript() const { return transcript_; }
  const HistoryStore& history() const { return history_; }
  const Repository& repository() const { return repo_; }
  const EventLog& event_log() const { return log_; }
  const WaitingQueue& queue() const { return queue_; }

  /// Header line followed by one message per line.
  std::string transcript_text() const {
    std::string out = transcript_header(scenario_).dump() + "\n";
    for (const auto& m : transcript_) out += encode_line(m) + "\n";
    return out;
  }

  /// Writes transcript.jsonl, history.jsonl, report.json, events.jsonl and
  /// snapshot.json into `dir`.
  void write_outputs(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    auto write = [&](const char* name, const std::string& text) {
      std::ofstream out(dir / name, std::ios::binary);
      if (!out) fail(ErrorCode::kIo, "cannot write " + (dir / name).string());
      out << text;
    };
    write("transcript.jsonl", transcript_text());
    std::ostringstream history;
    history_.write(history);
    write("history.jsonl", history.str());
    write("report.json", to_json_value(report_).dump(2) + "\n");
    write("events.jsonl", events_.str());
    write("snapshot.json", nlohmann::json(repo_.snapshot()).dump(2) + "\n");
  }

 private:
  struct LiveMarket {
    std::unique_ptr<Market> market;
    std::size_t emitted = 0;
    int started_step = 0;
  };

  const AgentSpec& spec(const AgentId& id) const { return *specs_.at(id); }

  void arrive(const AgentSpec& a) {
    repo_.register_agent(a.record);
    strategies_.select_strategy(a.record.agent_id, a.strategy);
    const auto result = queue_.admit(a.record.agent_id, a.record.priority);
    if (const auto* q = std::get_if<Queued>(&result)) {
      report_.queue_events.push_back({step_, a.record.agent_id, "queued", q->position});
      log_.append("queued", {{"step", step_}, {"agent_id", a.record.agent_id},
                             {"position", q->position}});
      return;
    }
    advertise(a);
  }

  // Weights are fixed when the agent enters the market.
  void advertise(const AgentSpec& a) {
    Valuations valuations = a.valuations;
    if (scenario_.config.learn_weights && !a.weights_given) {
      const auto leaves = validate_tree(scenario_.product(a.product_id).tree);
      for (const auto& [leaf, w] : history_.suggest_weights(a.product_id, leaves)) {
        valuations.at(leaf).weight = w;
      }
    }
    participants_[a.record.agent_id] = Participant{a.record, valuations, a.strategy};
    repo_.submit_advertisement(
        {"ad-" + a.record.agent_id, a.product_id, a.record.agent_id, a.validity});
  }

  void release_slots() {
    while (auto id = queue_.release_slot()) {
      report_.queue_events.push_back({step_, *id, "admitted", 0});
      log_.append("admitted", {{"step", step_}, {"agent_id", *id}});
      advertise(spec(*id));
    }
  }

  // Real agents behind an id: the members of a composite, or the agent.
  std::vector<AgentId> members_of(const AgentId& id) const {
    auto it = composites_.find(id);
    if (it == composites_.end()) return {id};
    std::vector<AgentId> out;
    for (const auto& m : it->second.members) out.push_back(m.agent_id);
    return out;
  }

  void depart(const AgentId& id) {
    for (const auto& member : members_of(id)) {
      queue_.depart(member);
      strategies_.unlock(member);
    }
  }

  void form_alliances() {
    for (const auto& product_id : repo_.advertised_products()) {
      const auto& product = scenario_.product(product_id);
      for (const auto& group : detect_allies(repo_, product_id)) {
        std::vector<AllianceMember> members;
        int validity = 0;
        for (std::size_t k = 0; k < group.agent_ids.size(); ++k) {
          const auto& p = participants_.at(group.agent_ids[k]);
          members.push_back({p.record, product_id, p.valuations});
          validity = std::max(validity, repo_.find_advertisement(group.ad_ids[k])->validity_counter);
        }
        AllianceEvent event;
        event.step = step_;
        event.members = group.agent_ids;
        try {
          const auto terms = negotiate_terms(members, product.non_functional,
                                             scenario_.config.max_internal_rounds);
          auto composite = form_composite(members, terms);
          const auto& id = composite.record.agent_id;
          register_composite(repo_, composite, group.ad_ids,
                             {"ad-" + id, product_id, id, validity});
          participants_[id] = Participant{composite.record, composite.valuations,
                                          participants_.at(group.agent_ids.front()).strategy};
          event.event = "formed";
          event.composite_id = id;
          event.weights = terms.weights;
          composites_.emplace(id, std::move(composite));
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kInternalDeadlock) throw;
          for (const auto& member : group.agent_ids) repo_.set_allies(member, false);
          event.event = "deadlocked";
          event.detail = e.what();
        }
        log_.append("alliance_" + event.event,
                    {{"step", step_}, {"members", event.members}, {"composite", event.composite_id}});
        report_.alliance_events.push_back(std::move(event));
      }
    }
  }

  LiveMarket* find_market(const NegotiationId& id) {
    for (auto& m : markets_) {
      if (m.market->id() == id) return &m;
    }
    return nullptr;
  }

  void enter(LiveMarket& live, const AgentId& agent_id) {
    live.market->join(participants_.at(agent_id));
    for (const auto& member : members_of(agent_id)) strategies_.lock(member);
  }

  void record_ongoing(const LiveMarket& live) {
    const auto ids = live.market->agent_ids();
    if (ids.size() < 2) return;
    repo_.record_ongoing({live.market->id(), live.market->product().product_id,
                          {ids.begin(), ids.end()}, live.market->offers_generated()});
  }

  // Late advertisers for a product under negotiation join that market.
  void join_running() {
    for (const auto& ad : repo_.live_advertisements()) {
      const auto entry = repo_.lookup_ongoing(ad.product_id);
      if (!entry) continue;
      auto* live = find_market(entry->negotiation_id);
      if (!live) continue;
      repo_.consume({ad.ad_id});
      enter(*live, ad.agent_id);
      record_ongoing(*live);
    }
  }

  void spawn_markets() {
    for (const auto& spawn : scan(repo_)) {
      LiveMarket live;
      live.market = std::make_unique<Market>("n" + std::to_string(next_market_++),
                                             scenario_.product(spawn.product_id),
                                             scenario_.config.round_limit, strategies_,
                                             *executor_, links_);
      live.started_step = step_;
      for (const auto& id : spawn.buyer_ids) enter(live, id);
      for (const auto& id : spawn.seller_ids) enter(live, id);
      record_ongoing(live);
      log_.append("market_opened", {{"step", step_},
                                    {"negotiation_id", live.market->id()},
                                    {"product_id", spawn.product_id}});
      markets_.push_back(std::move(live));
    }
  }

  void flush(LiveMarket& live) {
    const auto& t = live.market->transcript();
    transcript_.insert(transcript_.end(), t.begin() + static_cast<std::ptrdiff_t>(live.emitted),
                       t.end());
    live.emitted = t.size();
  }

  void advance_markets() {
    executor_->parallel_for(markets_.size(), [&](std::size_t i) { markets_[i].market->step(); });
    for (auto& live : markets_) {
      flush(live);
      record_ongoing(live);
    }
  }

  void settle_finished() {
    std::vector<LiveMarket> still_running;
    for (auto& live : markets_) {
      auto& market = *live.market;
      if (market.negotiating()) {
        still_running.push_back(std::move(live));
        continue;
      }
      const auto deals = market.settle();
      flush(live);
      history_.append(make_record(market, next_record_++));
      repo_.close_ongoing(market.id());

      NegotiationReport n;
      n.negotiation_id = market.id();
      n.product_id = market.product().product_id;
      n.participants = market.agent_ids();
      n.pairs = market.summaries();
      n.deals = deals;
      n.started_step = live.started_step;
      n.finished_step = step_;
      ++report_.stats.markets;
      report_.stats.agreements += deals.size();
      if (deals.empty()) ++report_.stats.failed_markets;
      for (const auto& deal : deals) {
        for (const auto& party : {deal.buyer_id, deal.seller_id}) {
          auto it = composites_.find(party);
          if (it == composites_.end()) continue;
          AllianceEvent payout;
          payout.step = step_;
          payout.event = "payout";
          payout.composite_id = party;
          payout.members = members_of(party);
          payout.payouts = distribute_outcome(it->second, deal.final_prices);
          report_.alliance_events.push_back(std::move(payout));
        }
      }
      log_.append("market_closed", {{"step", step_},
                                    {"negotiation_id", market.id()},
                                    {"deals", deals.size()}});
      report_.negotiations.push_back(std::move(n));
      for (const auto& id : market.agent_ids()) depart(id);
    }
    markets_ = std::move(still_running);
    release_slots();
  }

  void expire() {
    const auto before = repo_.live_advertisements();
    const auto expired = repo_.tick();
    for (const auto& ad_id : expired) {
      for (const auto& ad : before) {
        if (ad.ad_id != ad_id) continue;
        report_.expired.push_back({step_, ad_id, ad.agent_id});
        depart(ad.agent_id);
      }
    }
    release_slots();
  }

  Scenario scenario_;
  RunOptions options_;
  std::ostringstream events_;
  EventLog log_;
  Repository repo_;
  WaitingQueue queue_;
  HistoryStore history_;
  StrategyRegistry strategies_;
  std::unique_ptr<Executor> executor_;
  LinkFactory links_;
  std::mt19937_64 rng_;
  std::map<AgentId, const AgentSpec*> specs_;
  std::map<AgentId, Participant> participants_;
  std::map<AgentId, CompositeAgent> composites_;
  std::vector<LiveMarket> markets_;
  std::vector<Message> transcript_;
  RunReport report_;
  int step_ = 0;
  std::uint64_t next_market_ = 1;
  std::uint64_t next_record_ = 1;
  bool ran_ = false;
};

struct ReplayVerdict {
  bool match = true;
  std::size_t index = 0;  // first divergent message, when !match
  std::size_t messages = 0;
  std::string detail;
};

/// Re-runs the scenario embedded in a transcript and checks every recorded
/// message against what the engine produces, market by market and line by
/// line.
inline ReplayVerdict verify_transcript(std::istream& in) {
  std::string header_line;
  if (!std::getline(in, header_line)) fail(ErrorCode::kScenario, "empty transcript");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kScenario, std::string("bad transcript header: ") + e.what());
  }
  if (!header.is_object() || header.value("concord_transcript", 0) != kTranscriptVersion) {
    fail(ErrorCode::kScenario, "not a concord transcript");
  }
  Simulation sim(parse_scenario(header.at("scenario")));
  sim.run();

  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(line);
  }
  ReplayVerdict verdict;
  verdict.messages = lines.size();
  auto diverge = [&](std::size_t index, std::string detail) {
    if (verdict.match || index < verdict.index) {
      verdict.match = false;
      verdict.index = index;
      verdict.detail = std::move(detail);
    }
  };

  // Engine replay of each recorded market against the file's messages.
  std::vector<std::optional<Message>> parsed;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      parsed.push_back(decode_line(lines[i]));
    } catch (const Error& e) {
      parsed.push_back(std::nullopt);
      diverge(i, e.what());
    }
  }
  for (auto record : sim.history().records()) {
    const std::string prefix = record.negotiation_id + "/";
    std::vector<std::size_t> where;
    record.transcript.clear();
    for (std::size_t i = 0; i < parsed.size(); ++i) {
      if (parsed[i] && parsed[i]->negotiation_id.starts_with(prefix)) {
        where.push_back(i);
        record.transcript.push_back(*parsed[i]);
      }
    }
    try {
      replay(record, sim.strategies());
    } catch (const ReplayMismatch& e) {
      diverge(e.index() < where.size() ? where[e.index()] : lines.size(), e.what());
    }
  }

  const auto& expected = sim.transcript();
  for (std::size_t i = 0; i < std::max(expected.size(), lines.size()); ++i) {
    if (i >= lines.size()) {
      diverge(i, "transcript ends early");
      break;
    }
    if (i >= expected.size() || encode_line(expected[i]) != lines[i]) {
      diverge(i, "differs from the re-run");
      break;
    }
  }
  return verdict;
}

inline ReplayVerdict verify_transcript(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kScenario, "cannot open " + path.string());
  return verify_transcript(in);
}

}  // namespace concord
