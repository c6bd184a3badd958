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

#include <cstdint>
#include <mutex>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace concord {

/// Append-only line-delimited JSON event sink: one {seq, kind, payload}
/// object per line. Events are also retained in memory so a run can report
/// them without re-reading the file.
class EventLog {
 public:
  struct Event {
    std::uint64_t seq = 0;
    std::string kind;
    nlohmann::json payload;
  };

  EventLog() = default;
  explicit EventLog(std::ostream* sink) : sink_(sink) {}

  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  std::uint64_t append(std::string kind, nlohmann::json payload) {
    std::lock_guard lock(mutex_);
    Event event{next_seq_++, std::move(kind), std::move(payload)};
    if (sink_ != nullptr) {
      *sink_ << nlohmann::json{{"seq", event.seq},
                               {"kind", event.kind},
                               {"payload", event.payload}}
                    .dump()
             << '\n';
    }
    events_.push_back(std::move(event));
    return events_.back().seq;
  }

  std::vector<Event> events() const {
    std::lock_guard lock(mutex_);
    return events_;
  }

 private:
  mutable std::mutex mutex_;
  std::ostream* sink_ = nullptr;
  std::uint64_t next_seq_ = 0;
  std::vector<Event> events_;
};

}  // namespace concord
