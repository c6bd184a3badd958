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

#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <vector>

#include "concord/engine/message.hpp"

namespace concord {

/// Bidirectional, per-direction FIFO connection between the seller end and
/// the buyer end of one bilateral negotiation.
class Link {
 public:
  virtual ~Link() = default;
  virtual void send(Role from, const Message& message) = 0;
  /// Everything queued for `to`, in send order.
  virtual std::vector<Message> receive(Role to) = 0;
  virtual bool idle() const = 0;
};

class InProcessLink final : public Link {
 public:
  void send(Role from, const Message& message) override {
    queue(opposite(from)).push_back(message);
  }

  std::vector<Message> receive(Role to) override {
    auto& q = queue(to);
    std::vector<Message> out(q.begin(), q.end());
    q.clear();
    return out;
  }

  bool idle() const override { return to_seller_.empty() && to_buyer_.empty(); }

 private:
  std::deque<Message>& queue(Role to) { return to == Role::kSeller ? to_seller_ : to_buyer_; }

  std::deque<Message> to_seller_;
  std::deque<Message> to_buyer_;
};

using LinkFactory = std::function<std::unique_ptr<Link>()>;

inline LinkFactory in_process_links() {
  return [] { return std::make_unique<InProcessLink>(); };
}

}  // namespace concord
