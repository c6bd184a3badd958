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

// Newline-delimited JSON over TCP. A socket link carries one bilateral
// negotiation over a loopback connection; the wire server lets an agent in
// another process negotiate against an in-process agent from a scenario.
//
// Server conversation, one JSON object per line:
//   client: {"hello": {"agent": "B1", "peer": "S1"}}
//   server: {"ok": {"negotiation_id": "wire/S1/B1", "role": "buyer", "round_limit": 50}}
//   then engine messages both ways, and finally
//   server: {"done": {"status": "finalized", "total": 135.0}}
// Bad input gets {"error": {"code": "parse"|"protocol", "detail": "..."}}
// and the connection stays open.

#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "concord/engine/coordinator.hpp"
#include "concord/engine/executor.hpp"
#include "concord/engine/link.hpp"
#include "concord/engine/market.hpp"
#include "concord/engine/message.hpp"
#include "concord/engine/session.hpp"
#include "concord/engine/strategy.hpp"
#include "concord/error.hpp"
#include "concord/harness/scenario.hpp"

namespace concord {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

inline Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) fail(ErrorCode::kPrecondition, "expected host:port, got " + text);
  Endpoint e;
  e.host = text.substr(0, colon);
  if (e.host.empty()) e.host = "0.0.0.0";
  try {
    const unsigned long port = std::stoul(text.substr(colon + 1));
    if (port > 65535) throw std::out_of_range("port");
    e.port = static_cast<std::uint16_t>(port);
  } catch (const std::exception&) {
    fail(ErrorCode::kPrecondition, "bad port in " + text);
  }
  return e;
}

namespace wire {

[[noreturn]] inline void sys_fail(const std::string& what) {
  fail(ErrorCode::kIo, what + ": " + std::strerror(errno));
}

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Fd& operator=(Fd&& other) noexcept {
    if (this != &other) {
      reset();
      fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
  }
  ~Fd() { reset(); }

  int get() const { return fd_; }
  explicit operator bool() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }
  void shutdown() const {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

 private:
  int fd_ = -1;
};

inline sockaddr_in to_sockaddr(const Endpoint& e) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(e.port);
  if (::inet_pton(AF_INET, e.host.c_str(), &addr.sin_addr) != 1) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    addrinfo* found = nullptr;
    if (::getaddrinfo(e.host.c_str(), nullptr, &hints, &found) != 0 || !found) {
      fail(ErrorCode::kIo, "cannot resolve " + e.host);
    }
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(found->ai_addr)->sin_addr;
    ::freeaddrinfo(found);
  }
  return addr;
}

inline void no_delay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

inline Fd connect_to(const Endpoint& e) {
  Fd fd(::socket(AF_INET, SOCK_STREAM, 0));
  if (!fd) sys_fail("socket");
  const auto addr = to_sockaddr(e);
  if (::connect(fd.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    sys_fail("connect " + e.host + ":" + std::to_string(e.port));
  }
  no_delay(fd.get());
  return fd;
}

class Listener {
 public:
  explicit Listener(const Endpoint& e) : fd_(::socket(AF_INET, SOCK_STREAM, 0)) {
    if (!fd_) sys_fail("socket");
    int one = 1;
    ::setsockopt(fd_.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    const auto addr = to_sockaddr(e);
    if (::bind(fd_.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
      sys_fail("bind " + e.host + ":" + std::to_string(e.port));
    }
    if (::listen(fd_.get(), 64) != 0) sys_fail("listen");
    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    ::getsockname(fd_.get(), reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
  }

  std::uint16_t port() const { return port_; }

  /// Empty Fd once the listener has been shut down.
  Fd accept() const {
    for (;;) {
      const int fd = ::accept(fd_.get(), nullptr, nullptr);
      if (fd >= 0) {
        no_delay(fd);
        return Fd(fd);
      }
      if (errno != EINTR) return Fd();
    }
  }

  void shutdown() const { fd_.shutdown(); }

 private:
  Fd fd_;
  std::uint16_t port_ = 0;
};

/// Buffered line I/O on a connected socket.
class LineChannel {
 public:
  explicit LineChannel(Fd fd) : fd_(std::move(fd)) {}

  void write_line(const std::string& line) {
    std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
      const auto n = ::send(fd_.get(), data.data() + off, data.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        sys_fail("send");
      }
      off += static_cast<std::size_t>(n);
    }
  }

  /// Next line without its newline; nullopt at end of stream.
  std::optional<std::string> read_line() {
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      char chunk[4096];
      const auto n = ::recv(fd_.get(), chunk, sizeof chunk, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) {
        if (buffer_.empty()) return std::nullopt;
        return std::exchange(buffer_, {});
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  const Fd& fd() const { return fd_; }

 private:
  Fd fd_;
  std::string buffer_;
};

}  // namespace wire

/// One negotiation over a loopback TCP connection. Each side writes its
/// messages as lines on its own end; receive() reads exactly the lines the
/// peer has sent so far, so it never blocks on an empty stream.
class SocketLink final : public Link {
 public:
  SocketLink(wire::Fd seller_end, wire::Fd buyer_end)
      : seller_(std::move(seller_end)), buyer_(std::move(buyer_end)) {}

  void send(Role from, const Message& message) override {
    (from == Role::kSeller ? seller_ : buyer_).write_line(encode_line(message));
    ++(from == Role::kSeller ? to_buyer_ : to_seller_);
  }

  std::vector<Message> receive(Role to) override {
    auto& channel = to == Role::kSeller ? seller_ : buyer_;
    auto& pending = to == Role::kSeller ? to_seller_ : to_buyer_;
    std::vector<Message> out;
    for (; pending > 0; --pending) {
      auto line = channel.read_line();
      if (!line) fail(ErrorCode::kIo, "socket link closed with messages in flight");
      out.push_back(decode_line(*line));
    }
    return out;
  }

  bool idle() const override { return to_seller_ == 0 && to_buyer_ == 0; }

 private:
  wire::LineChannel seller_;
  wire::LineChannel buyer_;
  std::size_t to_seller_ = 0;
  std::size_t to_buyer_ = 0;
};

/// Link factory whose links are real loopback TCP connections.
inline LinkFactory socket_links() {
  auto listener = std::make_shared<wire::Listener>(Endpoint{"127.0.0.1", 0});
  auto mutex = std::make_shared<std::mutex>();
  return [listener, mutex]() -> std::unique_ptr<Link> {
    std::lock_guard lock(*mutex);
    auto client = wire::connect_to({"127.0.0.1", listener->port()});
    auto server = listener->accept();
    if (!server) fail(ErrorCode::kIo, "loopback accept failed");
    return std::make_unique<SocketLink>(std::move(client), std::move(server));
  };
}

inline nlohmann::json wire_error(std::string_view code, std::string_view detail) {
  return {{"error", {{"code", code}, {"detail", detail}}}};
}

/// Serves negotiations against agents of a scenario. Each connection
/// handles its messages strictly in arrival order.
class WireServer {
 public:
  explicit WireServer(std::optional<Scenario> scenario, const StrategyRegistry& strategies)
      : scenario_(std::move(scenario)), strategies_(strategies) {}

  ~WireServer() { stop(); }

  WireServer(const WireServer&) = delete;
  WireServer& operator=(const WireServer&) = delete;

  /// Binds and starts accepting; returns the bound port.
  std::uint16_t start(const Endpoint& endpoint) {
    listener_ = std::make_unique<wire::Listener>(endpoint);
    acceptor_ = std::jthread([this] { accept_loop(); });
    return listener_->port();
  }

  void stop() {
    if (!listener_ || stopping_.exchange(true)) return;
    listener_->shutdown();
    if (acceptor_.joinable()) acceptor_.join();
    std::list<Connection> connections;
    {
      std::lock_guard lock(mutex_);
      for (auto& c : connections_) c.channel->fd().shutdown();
      connections.swap(connections_);
    }
    for (auto& c : connections) {
      if (c.thread.joinable()) c.thread.join();
    }
  }

  /// Blocks until stop() is called from elsewhere.
  void wait() {
    if (acceptor_.joinable()) acceptor_.join();
  }

 private:
  struct Connection {
    std::shared_ptr<wire::LineChannel> channel;
    std::jthread thread;
  };

  struct Conversation {
    std::unique_ptr<MasterCoordinator> house;
    NegotiationSession* session = nullptr;
    AgentId remote;
    bool peer_closed = false;
    bool done = false;
  };

  void accept_loop() {
    while (!stopping_) {
      auto fd = listener_->accept();
      if (!fd) break;
      auto channel = std::make_shared<wire::LineChannel>(std::move(fd));
      std::lock_guard lock(mutex_);
      if (stopping_) break;
      connections_.push_back({channel, std::jthread([this, channel] { serve(*channel); })});
    }
  }

  void serve(wire::LineChannel& channel) {
    InlineExecutor executor;
    std::optional<Conversation> conv;
    while (auto line = channel.read_line()) {
      if (line->empty()) continue;
      try {
        for (const auto& reply : handle(*line, conv, executor)) channel.write_line(reply.dump());
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kIo) return;
        channel.write_line(wire_error("protocol", e.what()).dump());
      }
    }
  }

  std::vector<nlohmann::json> handle(const std::string& line, std::optional<Conversation>& conv,
                                     Executor& executor) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      return {wire_error("parse", e.what())};
    }
    if (j.is_object() && j.contains("hello")) return hello(j.at("hello"), conv);
    const Message incoming = j.get<Message>();
    if (!conv || conv->done) fail(ErrorCode::kProtocol, "no open negotiation; send hello first");
    if (incoming.sender != conv->remote) {
      fail(ErrorCode::kProtocol, "sender must be " + conv->remote);
    }
    auto& session = *conv->session;
    auto result = session.step_round(incoming, executor);
    if (incoming.kind == MessageKind::kFinalize || incoming.kind == MessageKind::kDecline) {
      conv->peer_closed = true;
    }
    std::vector<nlohmann::json> replies;
    for (const auto& m : result.outgoing) replies.emplace_back(m);
    if (session.status() == SessionStatus::kTempAgreed) {
      replies.emplace_back(session.close(MessageKind::kFinalize));
    }
    const auto status = session.status();
    const bool closed = status == SessionStatus::kAborted || status == SessionStatus::kWithdrawn ||
                        (conv->peer_closed && (status == SessionStatus::kFinalized ||
                                               status == SessionStatus::kDeclined));
    if (closed) {
      nlohmann::json done = {{"status", to_string(status)}};
      if (status == SessionStatus::kFinalized) {
        done["total"] = session.sealed_total();
        done["final_prices"] = session.sealed_prices();
      }
      replies.push_back({{"done", done}});
      conv->done = true;
    }
    return replies;
  }

  std::vector<nlohmann::json> hello(const nlohmann::json& h, std::optional<Conversation>& conv) {
    if (conv && !conv->done) fail(ErrorCode::kProtocol, "a negotiation is already open");
    std::optional<Scenario> inline_scenario;
    if (h.contains("scenario")) inline_scenario = parse_scenario(h.at("scenario"));
    const Scenario* scenario = inline_scenario ? &*inline_scenario
                                               : scenario_ ? &*scenario_ : nullptr;
    if (!scenario) fail(ErrorCode::kProtocol, "server has no scenario; include one in hello");
    if (!h.contains("agent") || !h.contains("peer")) {
      fail(ErrorCode::kProtocol, "hello needs agent and peer");
    }
    const auto remote_id = h.at("agent").get<std::string>();
    const auto house_id = h.at("peer").get<std::string>();
    const AgentSpec* remote = nullptr;
    const AgentSpec* house = nullptr;
    for (const auto& a : scenario->agents) {
      if (a.record.agent_id == remote_id) remote = &a;
      if (a.record.agent_id == house_id) house = &a;
    }
    if (!remote || !house) fail(ErrorCode::kProtocol, "unknown agent in hello");
    if (remote->record.role == house->record.role || remote->product_id != house->product_id) {
      fail(ErrorCode::kProtocol, "hello agents must trade the same product from opposite roles");
    }
    const auto& product = scenario->product(house->product_id);
    const int round_limit = h.value("round_limit", scenario->config.round_limit);
    const auto& seller = house->record.role == Role::kSeller ? house_id : remote_id;
    const auto& buyer = house->record.role == Role::kBuyer ? house_id : remote_id;
    const auto nid = pair_id(kWireMarket, seller, buyer);

    Conversation c;
    c.remote = remote_id;
    c.house = std::make_unique<MasterCoordinator>(house->record, house->valuations,
                                                  strategies_.get(house->strategy));
    c.session = &c.house->open_session(nid, product, remote_id, round_limit);
    conv = std::move(c);

    std::vector<nlohmann::json> replies{{{"ok",
                                          {{"negotiation_id", nid},
                                           {"role", to_string(remote->record.role)},
                                           {"round_limit", round_limit}}}}};
    if (house->record.role == Role::kSeller) replies.emplace_back(conv->session->initial_offer());
    return replies;
  }

 public:
  static constexpr const char* kWireMarket = "wire";

 private:
  std::optional<Scenario> scenario_;
  const StrategyRegistry& strategies_;
  std::unique_ptr<wire::Listener> listener_;
  std::jthread acceptor_;
  std::mutex mutex_;
  std::list<Connection> connections_;
  std::atomic<bool> stopping_{false};
};

/// What a remote agent saw during one served negotiation.
struct RemoteOutcome {
  std::vector<Message> transcript;  // every engine message, in wire order
  SessionStatus status = SessionStatus::kActive;
  PriceMap final_prices;
  double total = 0.0;
};

/// Plays `self` against the server's `peer` with a local session.
inline RemoteOutcome negotiate_remote(const Endpoint& server, const Scenario& scenario,
                                      const AgentId& self, const AgentId& peer,
                                      const StrategyRegistry& strategies) {
  const AgentSpec* spec = nullptr;
  for (const auto& a : scenario.agents) {
    if (a.record.agent_id == self) spec = &a;
  }
  if (!spec) fail(ErrorCode::kUnknownAgent, self);
  wire::LineChannel channel(wire::connect_to(server));
  channel.write_line(nlohmann::json{{"hello", {{"agent", self}, {"peer", peer}}}}.dump());

  InlineExecutor executor;
  MasterCoordinator master(spec->record, spec->valuations, strategies.get(spec->strategy));
  NegotiationSession* session = nullptr;
  RemoteOutcome out;
  auto send = [&](const Message& m) {
    out.transcript.push_back(m);
    channel.write_line(encode_line(m));
  };
  while (auto line = channel.read_line()) {
    const auto j = nlohmann::json::parse(*line);
    if (j.contains("error")) fail(ErrorCode::kProtocol, j["error"].dump());
    if (j.contains("ok")) {
      session = &master.open_session(j["ok"]["negotiation_id"].get<std::string>(),
                                     scenario.product(spec->product_id), peer,
                                     j["ok"]["round_limit"].get<int>());
      if (spec->record.role == Role::kSeller) send(session->initial_offer());
      continue;
    }
    if (j.contains("done")) break;
    if (!session) fail(ErrorCode::kProtocol, "message before ok");
    const auto m = j.get<Message>();
    out.transcript.push_back(m);
    auto result = session->step_round(m, executor);
    for (const auto& reply : result.outgoing) send(reply);
    if (session->status() == SessionStatus::kTempAgreed) send(session->close(MessageKind::kFinalize));
  }
  if (!session) fail(ErrorCode::kProtocol, "server closed before ok");
  out.status = session->status();
  if (out.status == SessionStatus::kFinalized) {
    out.final_prices = session->sealed_prices();
    out.total = session->sealed_total();
  }
  return out;
}

}  // namespace concord
