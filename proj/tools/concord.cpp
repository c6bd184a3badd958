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

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "concord/error.hpp"
#include "concord/harness/runner.hpp"
#include "concord/harness/scenario.hpp"
#include "concord/harness/wire.hpp"
#include "concord/repository.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kScenarioError = 1;
constexpr int kProtocolError = 2;

int exit_code_for(const concord::Error& e) {
  switch (e.code()) {
    case concord::ErrorCode::kProtocol:
    case concord::ErrorCode::kReplayMismatch:
      return kProtocolError;
    default:
      return kScenarioError;
  }
}

std::filesystem::path default_out_dir() {
  if (const char* env = std::getenv("CONCORD_OUT_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return "concord-out";
}

struct RunArgs {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_parties;
  std::optional<std::string> queue_policy;
  std::optional<int> rounds;
  std::optional<std::string> out;
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  std::string transport = "inprocess";
};

int run_command(const RunArgs& args) {
  auto scenario = concord::load_scenario(args.scenario);
  if (args.seed) scenario.config.seed = *args.seed;
  if (args.max_parties) {
    if (*args.max_parties == 0) concord::fail(concord::ErrorCode::kScenario, "--max-parties must be positive");
    scenario.config.max_parties = *args.max_parties;
  }
  if (args.queue_policy) scenario.config.queue_policy = concord::queue_policy_from_string(*args.queue_policy);
  if (args.rounds) {
    if (*args.rounds < 0) concord::fail(concord::ErrorCode::kScenario, "--rounds must be >= 0");
    scenario.config.round_limit = *args.rounds;
  }
  concord::RunOptions options;
  options.threads = args.threads;
  options.transport =
      args.transport == "socket" ? concord::Transport::kSocket : concord::Transport::kInProcess;

  concord::Simulation sim(std::move(scenario), options);
  const auto& report = sim.run();
  const std::filesystem::path out = args.out ? std::filesystem::path(*args.out) : default_out_dir();
  sim.write_outputs(out);

  for (const auto& n : report.negotiations) {
    std::cout << n.negotiation_id << " " << n.product_id << " "
              << (n.deals.empty() ? "failure" : "agreement");
    for (const auto& d : n.deals) {
      std::cout << " [" << d.buyer_id << "<-" << d.seller_id << " total=" << d.total << "]";
    }
    std::cout << "\n";
  }
  for (const auto& q : report.queue_events) {
    std::cout << "queue step=" << q.step << " " << q.agent_id << " " << q.event;
    if (q.event == "queued") std::cout << " position=" << q.position;
    std::cout << "\n";
  }
  for (const auto& a : report.alliance_events) {
    std::cout << "alliance step=" << a.step << " " << a.event;
    if (!a.composite_id.empty()) std::cout << " " << a.composite_id;
    std::cout << "\n";
  }
  std::cout << "markets=" << report.stats.markets << " agreements=" << report.stats.agreements
            << " messages=" << report.stats.messages << " steps=" << report.stats.steps
            << "\noutput: " << out.string() << "\n";
  return kOk;
}

int replay_command(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    std::cerr << "replay: no such file: " << path << "\n";
    return kScenarioError;
  }
  const auto verdict = concord::verify_transcript(std::filesystem::path(path));
  if (verdict.match) {
    std::cout << "Match (" << verdict.messages << " messages)\n";
    return kOk;
  }
  std::cout << "Mismatch at message " << verdict.index << ": " << verdict.detail << "\n";
  return kProtocolError;
}

int serve_command(const std::string& listen, const std::string& scenario_path) {
  std::optional<concord::Scenario> scenario;
  if (!scenario_path.empty()) scenario = concord::load_scenario(scenario_path);
  const auto endpoint = concord::parse_endpoint(listen);

  // Block the stop signals before any thread starts, then wait for one.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  concord::StrategyRegistry strategies;
  concord::WireServer server(std::move(scenario), strategies);
  const auto port = server.start(endpoint);
  std::cout << "listening on " << endpoint.host << ":" << port << std::endl;
  int received = 0;
  sigwait(&signals, &received);
  server.stop();
  return kOk;
}

int inspect_command(const std::string& path) {
  concord::Repository repo;
  repo.restore(std::filesystem::path(path));
  const auto state = repo.snapshot();
  std::cout << "agents " << state.agents.size() << "\n";
  for (const auto& [id, a] : state.agents) {
    std::cout << "  " << id << " " << concord::to_string(a.role) << " priority=" << a.priority
              << (a.allies ? " allies" : "") << "\n";
  }
  std::cout << "products " << state.products.size() << "\n";
  for (const auto& [id, p] : state.products) std::cout << "  " << id << " " << p.product_name << "\n";
  std::cout << "attributes " << state.attributes.size() << "\n";
  std::cout << "advertisements " << state.advertisements.size() << "\n";
  for (const auto& ad : state.advertisements) {
    std::cout << "  " << ad.ad_id << " " << ad.product_id << " " << ad.agent_id
              << " validity=" << ad.validity_counter << "\n";
  }
  std::cout << "ongoing " << state.ongoing.size() << "\n";
  for (const auto& [id, e] : state.ongoing) {
    std::cout << "  " << id << " " << e.product_id << " offers=" << e.offers_generated << "\n";
  }
  std::cout << "archive " << state.archive.size() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"concord: automated multi-issue negotiation market"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run a scenario end to end");
  run->add_option("scenario", run_args.scenario, "Scenario JSON file")->required();
  run->add_option("--seed", run_args.seed, "Override the scenario seed");
  run->add_option("--max-parties", run_args.max_parties, "Admission capacity");
  run->add_option("--queue-policy", run_args.queue_policy, "fcfs or priority")
      ->check(CLI::IsMember({"fcfs", "priority"}));
  run->add_option("--rounds", run_args.rounds, "Round limit per negotiation");
  run->add_option("--out", run_args.out, "Output directory (default $CONCORD_OUT_DIR or ./concord-out)");
  run->add_option("--threads", run_args.threads, "Worker threads; 0 runs inline");
  run->add_option("--transport", run_args.transport, "inprocess or socket")
      ->check(CLI::IsMember({"inprocess", "socket"}));

  std::string transcript;
  auto* replay = app.add_subcommand("replay", "Verify a transcript by re-running it");
  replay->add_option("transcript", transcript, "transcript.jsonl")->required();

  std::string listen;
  std::string serve_scenario;
  auto* serve = app.add_subcommand("serve", "Serve the wire protocol");
  serve->add_option("--listen", listen, "host:port")->required();
  serve->add_option("--scenario", serve_scenario, "Scenario providing the in-process agents");

  std::string snapshot;
  auto* inspect = app.add_subcommand("inspect", "Print a repository snapshot");
  inspect->add_option("snapshot", snapshot, "snapshot.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kScenarioError;
  }

  try {
    if (*run) return run_command(run_args);
    if (*replay) return replay_command(transcript);
    if (*serve) return serve_command(listen, serve_scenario);
    if (*inspect) return inspect_command(snapshot);
  } catch (const concord::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kScenarioError;
  }
  return kOk;
}
