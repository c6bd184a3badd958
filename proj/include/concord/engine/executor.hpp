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

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace concord {

/// Runs `n` independent tasks and returns once all of them have finished.
/// Tasks must write only to their own slot; the return is the barrier.
class Executor {
 public:
  virtual ~Executor() = default;
  virtual void parallel_for(std::size_t n, const std::function<void(std::size_t)>& task) = 0;
};

/// Single-context executor: tasks run in index order on the caller.
class InlineExecutor final : public Executor {
 public:
  void parallel_for(std::size_t n, const std::function<void(std::size_t)>& task) override {
    for (std::size_t i = 0; i < n; ++i) task(i);
  }
};

/// Fixed-size worker pool. A caller waiting on its batch keeps executing
/// queued tasks, so nested parallel_for calls from inside a task cannot
/// starve the pool.
class ThreadPoolExecutor final : public Executor {
 public:
  explicit ThreadPoolExecutor(std::size_t threads = std::thread::hardware_concurrency()) {
    if (threads == 0) threads = 1;
    for (std::size_t i = 0; i < threads; ++i) {
      workers_.emplace_back([this](std::stop_token stop) { work(stop); });
    }
  }

  ~ThreadPoolExecutor() override {
    for (auto& worker : workers_) worker.request_stop();
    cv_.notify_all();
  }

  ThreadPoolExecutor(const ThreadPoolExecutor&) = delete;
  ThreadPoolExecutor& operator=(const ThreadPoolExecutor&) = delete;

  void parallel_for(std::size_t n, const std::function<void(std::size_t)>& task) override {
    if (n == 0) return;
    auto batch = std::make_shared<Batch>();
    batch->remaining = n;
    batch->errors.resize(n);
    {
      std::lock_guard lock(mutex_);
      for (std::size_t i = 0; i < n; ++i) {
        queue_.push_back(Job{[batch, &task, i] {
                               try {
                                 task(i);
                               } catch (...) {
                                 batch->errors[i] = std::current_exception();
                               }
                             },
                             batch});
      }
    }
    cv_.notify_all();

    std::unique_lock lock(mutex_);
    while (batch->remaining > 0) {
      if (!queue_.empty()) {
        run_one(lock);
      } else {
        cv_.wait(lock);
      }
    }
    lock.unlock();
    for (auto& error : batch->errors) {
      if (error) std::rethrow_exception(error);
    }
  }

  std::size_t size() const { return workers_.size(); }

 private:
  struct Batch {
    std::size_t remaining = 0;
    std::vector<std::exception_ptr> errors;
  };

  struct Job {
    std::function<void()> run;
    std::shared_ptr<Batch> batch;
  };

  // Runs the front job with the lock released, then re-locks.
  void run_one(std::unique_lock<std::mutex>& lock) {
    Job job = std::move(queue_.front());
    queue_.pop_front();
    lock.unlock();
    job.run();
    lock.lock();
    if (--job.batch->remaining == 0) cv_.notify_all();
  }

  void work(std::stop_token stop) {
    std::unique_lock lock(mutex_);
    while (true) {
      cv_.wait(lock, stop, [this] { return !queue_.empty(); });
      if (stop.stop_requested()) return;
      run_one(lock);
    }
  }

  std::mutex mutex_;
  std::condition_variable_any cv_;
  std::deque<Job> queue_;
  std::vector<std::jthread> workers_;
};

}  // namespace concord
